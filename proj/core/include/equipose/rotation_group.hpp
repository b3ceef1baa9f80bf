#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "equipose/rotation.hpp"

namespace equipose {

inline constexpr int kGroupSize = 60;

// Nonnegative weight per group element, as predicted by the pose head.
struct GroupWeights {
    std::array<double, kGroupSize> w{};

    static GroupWeights one_hot(int index);
    static GroupWeights uniform();
};

// The 60 rotational symmetries of the icosahedron, in a canonical
// deterministic order (identity first, then lexicographic on rounded matrix
// entries), together with the Cayley table, the inverse table, and the
// left-multiplication permutations used to act on feature-tensor group axes.
class RotationGroup {
public:
    // Generates from two fixed generators, closes under multiplication, and
    // sorts into the canonical order. Total; always yields 60 elements.
    static RotationGroup icosahedral();

    const std::vector<Rotation>& elements() const { return elements_; }
    const Rotation& element(int i) const { return elements_.at(static_cast<size_t>(i)); }
    int size() const { return static_cast<int>(elements_.size()); }

    // cayley(i, j) = index of element(i) * element(j)
    int cayley(int i, int j) const { return cayley_.at(static_cast<size_t>(i)).at(static_cast<size_t>(j)); }
    int inverse(int i) const { return inverse_.at(static_cast<size_t>(i)); }

    // Left-multiplication action: pi_k(j) = cayley(k, j), so that
    // element(k) * element(j) == element(pi_k(j)). Throws std::out_of_range.
    const std::array<int, kGroupSize>& permutation_of(int k) const;

    // Index of the element nearest to r in chordal (Frobenius) distance;
    // ties broken by smallest index.
    int quantize(const Rotation& r) const;

    // Weighted chordal L2 mean: projection of sum_j w_j * element(j) onto
    // SO(3). Invariant to positive rescaling of w. Throws DegenerateMean when
    // the minimizer is not unique, std::invalid_argument on negative weights
    // or an all-zero weight vector.
    Rotation chordal_weighted_mean(const GroupWeights& w) const;

    // Versioned binary blob: magic "AQG1", little-endian float64 matrices in
    // canonical order, then the Cayley table as uint8 entries.
    void serialize(std::ostream& os) const;
    static RotationGroup deserialize(std::istream& is);

    // FNV-1a fingerprint of the serialized blob; pins element ordering for
    // checkpoint compatibility.
    uint64_t blob_hash() const;

    // Test fixture: returns a copy with one Cayley entry corrupted, for
    // negative-control property runs.
    RotationGroup with_corrupted_cayley() const;

private:
    RotationGroup() = default;
    void build_tables();

    std::vector<Rotation> elements_;
    std::vector<std::array<int, kGroupSize>> cayley_;
    std::array<int, kGroupSize> inverse_{};
};

}  // namespace equipose

#include "equipose/rotation_group.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "equipose/errors.hpp"
#include "equipose/serialize.hpp"

namespace equipose {

GroupWeights GroupWeights::one_hot(int index) {
    if (index < 0 || index >= kGroupSize) throw std::out_of_range("group index out of range");
    GroupWeights gw;
    gw.w[static_cast<size_t>(index)] = 1.0;
    return gw;
}

GroupWeights GroupWeights::uniform() {
    GroupWeights gw;
    gw.w.fill(1.0 / kGroupSize);
    return gw;
}

namespace {

// Sort key: matrix entries rounded to 1e-6, row-major. Entries of icosahedral
// rotations are separated by ~0.19 at least, so the rounding is stable.
std::array<int64_t, 9> lex_key(const Mat3& m) {
    std::array<int64_t, 9> key{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            key[static_cast<size_t>(r * 3 + c)] = std::llround(m(r, c) * 1e6);
    return key;
}

double chordal(const Mat3& a, const Mat3& b) { return (a - b).norm(); }

}  // namespace

RotationGroup RotationGroup::icosahedral() {
    // Icosahedron with vertices at cyclic permutations of (0, +-1, +-phi).
    // Generators: 72 degrees about the vertex axis (0, 1, phi), and 180
    // degrees about the z axis (midpoint of the edge (0,+-1,phi)).
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    const Rotation g5 = Rotation::from_axis_angle(Vec3(0.0, 1.0, phi), 2.0 * std::numbers::pi / 5.0);
    const Rotation g2 = Rotation::from_axis_angle(Vec3(0.0, 0.0, 1.0), std::numbers::pi);

    std::vector<Mat3> closure;
    closure.push_back(Mat3::Identity());
    // BFS over words in the generators; dedup at 1e-6 (distinct icosahedral
    // rotations are >= 1.6 apart in Frobenius norm).
    for (size_t head = 0; head < closure.size(); ++head) {
        const Mat3 current = closure[head];
        for (const Rotation* gen : {&g5, &g2}) {
            const Mat3 candidate = current * gen->matrix();
            bool known = false;
            for (const Mat3& e : closure)
                if (chordal(candidate, e) < 1e-6) {
                    known = true;
                    break;
                }
            if (!known) closure.push_back(candidate);
        }
        if (closure.size() > 2 * kGroupSize)
            throw std::logic_error("icosahedral closure exceeded expected size");
    }
    if (closure.size() != kGroupSize)
        throw std::logic_error("icosahedral closure produced " + std::to_string(closure.size()) +
                               " elements, expected 60");

    // Polish accumulated round-off, then order canonically: identity first,
    // the rest lexicographic on rounded entries.
    for (Mat3& m : closure) m = project_to_so3(m).matrix();
    std::sort(closure.begin(), closure.end(),
              [](const Mat3& a, const Mat3& b) { return lex_key(a) < lex_key(b); });
    auto id_it = std::find_if(closure.begin(), closure.end(), [](const Mat3& m) {
        return chordal(m, Mat3::Identity()) < 1e-6;
    });
    std::rotate(closure.begin(), id_it, id_it + 1);

    RotationGroup group;
    group.elements_.reserve(kGroupSize);
    for (const Mat3& m : closure) group.elements_.push_back(Rotation::from_matrix(m));
    group.build_tables();
    return group;
}

void RotationGroup::build_tables() {
    const int n = size();
    cayley_.assign(static_cast<size_t>(n), {});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const Mat3 product = elements_[static_cast<size_t>(i)].matrix() *
                                 elements_[static_cast<size_t>(j)].matrix();
            int best = -1;
            double best_dist = 1e300;
            for (int k = 0; k < n; ++k) {
                const double d = chordal(product, elements_[static_cast<size_t>(k)].matrix());
                if (d < best_dist) {
                    best_dist = d;
                    best = k;
                }
            }
            if (best_dist > 1e-9)
                throw std::logic_error("group not closed: product lands " +
                                       std::to_string(best_dist) + " away from nearest element");
            cayley_[static_cast<size_t>(i)][static_cast<size_t>(j)] = best;
        }
    }
    for (int i = 0; i < n; ++i) {
        const Rotation inv = elements_[static_cast<size_t>(i)].inverse();
        inverse_[static_cast<size_t>(i)] = quantize(inv);
    }
}

const std::array<int, kGroupSize>& RotationGroup::permutation_of(int k) const {
    if (k < 0 || k >= size()) throw std::out_of_range("permutation_of: element index out of range");
    return cayley_[static_cast<size_t>(k)];
}

int RotationGroup::quantize(const Rotation& r) const {
    int best = 0;
    double best_dist = 1e300;
    for (int k = 0; k < size(); ++k) {
        const double d = chordal(r.matrix(), elements_[static_cast<size_t>(k)].matrix());
        if (d < best_dist) {
            best_dist = d;
            best = k;
        }
    }
    return best;
}

Rotation RotationGroup::chordal_weighted_mean(const GroupWeights& w) const {
    Mat3 acc = Mat3::Zero();
    double total = 0.0;
    for (int j = 0; j < kGroupSize; ++j) {
        const double wj = w.w[static_cast<size_t>(j)];
        if (!(wj >= 0.0) || !std::isfinite(wj))
            throw std::invalid_argument("chordal_weighted_mean: weights must be finite and >= 0");
        acc += wj * elements_[static_cast<size_t>(j)].matrix();
        total += wj;
    }
    if (!(total > 0.0)) throw std::invalid_argument("chordal_weighted_mean: weights sum to zero");
    return project_to_so3(acc);
}

void RotationGroup::serialize(std::ostream& os) const {
    write_magic(os, "AQG1");
    for (const Rotation& r : elements_)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) write_pod<double>(os, r.matrix()(i, j));
    for (const auto& row : cayley_)
        for (int entry : row) write_pod<uint8_t>(os, static_cast<uint8_t>(entry));
}

RotationGroup RotationGroup::deserialize(std::istream& is) {
    expect_magic(is, "AQG1", "rotation group blob");
    RotationGroup group;
    group.elements_.reserve(kGroupSize);
    for (int k = 0; k < kGroupSize; ++k) {
        Mat3 m;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) = read_pod<double>(is);
        group.elements_.push_back(Rotation::from_matrix(m));
    }
    group.build_tables();
    for (int i = 0; i < kGroupSize; ++i)
        for (int j = 0; j < kGroupSize; ++j) {
            const auto stored = read_pod<uint8_t>(is);
            if (stored != group.cayley(i, j))
                throw FormatError("rotation group blob: Cayley table mismatch");
        }
    return group;
}

uint64_t RotationGroup::blob_hash() const {
    std::ostringstream oss(std::ios::binary);
    serialize(oss);
    const std::string blob = oss.str();
    return fnv1a({reinterpret_cast<const uint8_t*>(blob.data()), blob.size()});
}

RotationGroup RotationGroup::with_corrupted_cayley() const {
    RotationGroup bad = *this;
    std::swap(bad.cayley_[1][2], bad.cayley_[1][3]);
    return bad;
}

}  // namespace equipose

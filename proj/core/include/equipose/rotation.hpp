#pragma once

#include <Eigen/Dense>

namespace equipose {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

// A proper rotation: orthonormal, det +1 (both within 1e-9).
class Rotation {
public:
    Rotation() : m_(Mat3::Identity()) {}

    // Validates the invariants; throws std::invalid_argument on failure.
    static Rotation from_matrix(const Mat3& m);

    // Trusts the caller (used where validity holds by construction).
    static Rotation from_matrix_unchecked(const Mat3& m) { return Rotation(m); }

    static Rotation from_axis_angle(const Vec3& axis, double angle_rad);
    static Rotation identity() { return Rotation(); }

    const Mat3& matrix() const { return m_; }
    Rotation inverse() const { return Rotation(m_.transpose()); }
    Rotation operator*(const Rotation& rhs) const { return Rotation(m_ * rhs.m_); }
    Vec3 operator*(const Vec3& v) const { return m_ * v; }

    // Rotation angle in [0, pi].
    double angle() const;

    static bool is_valid(const Mat3& m, double tol = 1e-9);

private:
    explicit Rotation(const Mat3& m) : m_(m) {}
    Mat3 m_;
};

// arccos((trace(r1^T r2) - 1) / 2), argument clamped to [-1, 1]. Radians.
double angular_distance(const Rotation& r1, const Rotation& r2);

// Nearest rotation to `a` in Frobenius norm: U diag(1, 1, det(UV^T)) V^T from
// the SVD a = U S V^T. Throws DegenerateMean when the two smallest singular
// values are both below 1e-8 * (largest + 1e-30), i.e. the minimizer is not
// unique.
Rotation project_to_so3(const Mat3& a);

}  // namespace equipose

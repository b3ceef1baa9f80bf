#include "equipose/rotation.hpp"

#include <cmath>
#include <stdexcept>

#include "equipose/errors.hpp"

namespace equipose {

bool Rotation::is_valid(const Mat3& m, double tol) {
    if (!m.allFinite()) return false;
    const double ortho = (m.transpose() * m - Mat3::Identity()).norm();
    return ortho <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

Rotation Rotation::from_matrix(const Mat3& m) {
    if (!is_valid(m))
        throw std::invalid_argument("matrix is not a rotation (orthonormality/det check failed)");
    return Rotation(m);
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle_rad) {
    const double n = axis.norm();
    if (!(n > 0.0)) throw std::invalid_argument("axis must be nonzero");
    return Rotation(Eigen::AngleAxisd(angle_rad, axis / n).toRotationMatrix());
}

double Rotation::angle() const {
    double c = (m_.trace() - 1.0) * 0.5;
    c = std::clamp(c, -1.0, 1.0);
    return std::acos(c);
}

double angular_distance(const Rotation& r1, const Rotation& r2) {
    double c = ((r1.matrix().transpose() * r2.matrix()).trace() - 1.0) * 0.5;
    c = std::clamp(c, -1.0, 1.0);
    return std::acos(c);
}

Rotation project_to_so3(const Mat3& a) {
    if (!a.allFinite()) throw std::invalid_argument("project_to_so3: non-finite input");
    Eigen::JacobiSVD<Mat3> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sigma = svd.singularValues();  // descending
    const double cutoff = 1e-8 * (sigma(0) + 1e-30);
    if (sigma(1) < cutoff && sigma(2) < cutoff)
        throw DegenerateMean("project_to_so3: nearest rotation is not unique");
    const Mat3 uvt = svd.matrixU() * svd.matrixV().transpose();
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = uvt.determinant() < 0.0 ? -1.0 : 1.0;
    return Rotation::from_matrix_unchecked(svd.matrixU() * flip * svd.matrixV().transpose());
}

}  // namespace equipose

#pragma once

// Test-only reference implementations. Everything here is independent of the
// code paths under test: closures are built from different generators, means
// are found by sampling + derivative-free descent, derivatives by central
// differences.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "equipose/rotation.hpp"

namespace oracles {

using equipose::Mat3;
using equipose::Vec3;

// Low-discrepancy covering of SO(3): super-Fibonacci spirals over the
// quaternion double cover.
inline std::vector<Mat3> so3_covering(int n) {
    std::vector<Mat3> out;
    out.reserve(static_cast<size_t>(n));
    const double phi = std::sqrt(2.0);
    const double psi = 1.533751168755204288118041;
    for (int i = 0; i < n; ++i) {
        const double s = (i + 0.5) / n;
        const double r = std::sqrt(s);
        const double big_r = std::sqrt(1.0 - s);
        const double alpha = 2.0 * std::numbers::pi * i / phi;
        const double beta = 2.0 * std::numbers::pi * i / psi;
        Eigen::Quaterniond q(r * std::cos(alpha), r * std::sin(alpha), big_r * std::sin(beta),
                             big_r * std::cos(beta));
        out.push_back(q.normalized().toRotationMatrix());
    }
    return out;
}

// Independent icosahedral closure from a different generator pair (two
// five-fold axes through adjacent vertices).
inline std::vector<Mat3> icosahedral_closure_reference() {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    auto rot = [](const Vec3& axis, double angle) {
        return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    };
    const Mat3 a = rot(Vec3(0.0, 1.0, phi), 2.0 * std::numbers::pi / 5.0);
    const Mat3 b = rot(Vec3(0.0, -1.0, phi), 2.0 * std::numbers::pi / 5.0);
    std::vector<Mat3> closure{Mat3::Identity()};
    for (size_t head = 0; head < closure.size(); ++head) {
        for (const Mat3* g : {&a, &b}) {
            const Mat3 cand = closure[head] * (*g);
            bool known = false;
            for (const Mat3& e : closure)
                if ((cand - e).norm() < 1e-6) {
                    known = true;
                    break;
                }
            if (!known) closure.push_back(cand);
            if (closure.size() > 200) return closure;  // guards a broken generator pair
        }
    }
    return closure;
}

inline double rotation_angle_deg(const Mat3& m) {
    const double c = std::clamp((m.trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

// Classical weighted chordal objective, evaluated term by term.
inline double weighted_chordal_objective(const std::vector<Mat3>& rotations,
                                         const std::vector<double>& weights, const Mat3& candidate) {
    double acc = 0.0;
    for (size_t j = 0; j < rotations.size(); ++j) acc += weights[j] * (rotations[j] - candidate).squaredNorm();
    return acc;
}

// Brute-force minimizer: best covering sample, then derivative-free descent
// with shrinking axis-angle steps. Never touches the SVD code path.
inline Mat3 brute_force_chordal_mean(const std::vector<Mat3>& rotations,
                                     const std::vector<double>& weights,
                                     const std::vector<Mat3>& covering) {
    Mat3 best = Mat3::Identity();
    double best_val = weighted_chordal_objective(rotations, weights, best);
    for (const Mat3& s : covering) {
        const double v = weighted_chordal_objective(rotations, weights, s);
        if (v < best_val) {
            best_val = v;
            best = s;
        }
    }
    const std::array<Vec3, 3> axes = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    double step = 0.1;  // radians
    while (step > 1e-6) {
        bool improved = false;
        for (const Vec3& axis : axes)
            for (double sign : {1.0, -1.0}) {
                const Mat3 cand = Eigen::AngleAxisd(sign * step, axis).toRotationMatrix() * best;
                const double v = weighted_chordal_objective(rotations, weights, cand);
                if (v < best_val) {
                    best_val = v;
                    best = cand;
                    improved = true;
                }
            }
        if (!improved) step *= 0.5;
    }
    return best;
}

inline double angular_distance_of(const Mat3& a, const Mat3& b) {
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c);
}

// Point-to-triangle distance (surface membership checks).
inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return (p - (a + (d1 / (d1 - d3)) * ab)).norm();
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return (p - (a + (d2 / (d2 - d6)) * ac)).norm();
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + w * (c - b))).norm();
    }
    const double denom = 1.0 / (va + vb + vc);
    const Vec3 closest = a + ab * (vb * denom) + ac * (vc * denom);
    return (p - closest).norm();
}

}  // namespace oracles

#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "equipose/rng.hpp"
#include "equipose/rotation.hpp"

namespace equipose::body {

using equipose::Mat3;
using equipose::Rotation;
using equipose::Vec3;

struct KinematicTree {
    std::vector<int> parent;  // parent[0] == -1 (root); parent[k] < k otherwise
    std::vector<std::string> names;

    int size() const { return static_cast<int>(parent.size()); }
    // Exactly one root, topological parent order, connected.
    void validate() const;
};

struct BodyParams {
    std::vector<double> beta;      // PCA shape coefficients
    std::vector<Rotation> theta;   // root orientation + K-1 relative joint rotations
    Vec3 trans = Vec3::Zero();     // root translation, meters

    static BodyParams rest(int joints, int betas = 10);
};

// Template + linear shape/pose blendshapes + joint regressor + LBS weights
// over a kinematic tree. Procedurally generated (build_toy_body) but the
// structure accepts any compatible data.
struct BodyModel {
    std::vector<Vec3> template_vertices;                // V
    std::vector<std::vector<Vec3>> shape_dirs;          // |beta| fields of V displacements
    std::vector<std::vector<Vec3>> pose_dirs;           // 9*(K-1) fields of V displacements
    Eigen::MatrixXd joint_regressor;                    // K x V, rows sum to 1
    Eigen::MatrixXd skinning;                           // V x K, rows sum to 1, <= 4 nonzero
    KinematicTree tree;
    std::vector<std::array<int, 3>> faces;
    std::vector<int> face_part;         // owning part per face (sampling regions)
    std::vector<int> marker_vertices;   // one per joint ring plus head/hand/foot tips
    std::vector<double> joint_limits;   // max |angle| per joint, radians (pose sampling)
    std::vector<Vec3> joint_axes;       // primary bending axis per joint (pose sampling)

    int vertex_count() const { return static_cast<int>(template_vertices.size()); }
    int joint_count() const { return tree.size(); }
    int beta_count() const { return static_cast<int>(shape_dirs.size()); }

    void validate() const;

    // Rest joints of the shaped body: joint_regressor * (template + B_S(beta)).
    std::vector<Vec3> rest_joints(const std::vector<double>& beta) const;
};

struct ToyBodyConfig {
    int joints = 16;              // supported layouts: 16 and 22
    int vertex_budget = 2000;
    double height = 1.7;          // meters
    double radius_scale = 1.0;    // limb thickness multiplier
    double shape_magnitude = 1.0; // scales the shape basis columns
    double pose_dirs_scale = 0.0; // pose-corrective magnitude (0 disables)
    int betas = 10;
    uint64_t seed = 7;            // pose-corrective field seed
};

// Procedural watertight low-poly humanoid: one closed capsule per bone,
// smooth skinning falloff across joints, ring-averaged joint regressor,
// shape basis from parameterized limb scalings. Deterministic in config.
BodyModel build_toy_body(const ToyBodyConfig& config = {});

// Eq-1-style rest mesh: template + B_S(beta) + B_P(theta), with B_P driven by
// vec(theta_k) - vec(I) for non-root joints.
std::vector<Vec3> rest_pose_mesh(const BodyModel& model, const BodyParams& params);

struct RigidTransform {
    Mat3 rot = Mat3::Identity();
    Vec3 t = Vec3::Zero();
    Vec3 apply(const Vec3& x) const { return rot * x + t; }
};

struct FkResult {
    std::vector<RigidTransform> part_transforms;  // rest -> posed map per part (trans applied)
    std::vector<Vec3> posed_joints;
    std::vector<Rotation> global_rotations;
};

// Composes rigid transforms along the tree, rotating each joint about its
// rest location by theta_k, root first; root translation applied last.
FkResult forward_kinematics(const BodyModel& model, const BodyParams& params);

// Linear blend skinning of rest_pose_mesh by the part transforms.
std::vector<Vec3> lbs(const BodyModel& model, const BodyParams& params);

// Inverts the rotation accumulation: local_k = global_parent(k)^T * global_k,
// root local = root global.
std::vector<Rotation> local_from_global(const KinematicTree& tree,
                                        const std::vector<Rotation>& global_rots);

// Forward accumulation (round-trip partner of local_from_global).
std::vector<Rotation> global_from_local(const KinematicTree& tree,
                                        const std::vector<Rotation>& local_rots);

struct SampleRecord {
    std::vector<Vec3> points;
    std::vector<int> part_label;
    BodyParams gt_params;
    std::vector<Vec3> gt_vertices;
    std::vector<Vec3> gt_joints;
    std::vector<Rotation> gt_global_rots;
};

// Surface sampling: triangles with probability proportional to area times a
// per-part non-uniformity multiplier (log-normal, sigma 0.5, drawn once per
// cloud), barycentric-uniform within a triangle, displaced along the
// interpolated normal by uniform(-noise, +noise) meters. Labels follow the
// dominant interpolated skinning weight.
SampleRecord sample_point_cloud(const BodyModel& model, const BodyParams& params, int n,
                                double noise, uint64_t seed);

// Relabels a fine segmentation into coarse parts. mapping[label] == -1 counts
// as unmapped and throws.
std::vector<int> merge_parts(const std::vector<int>& labels, const std::vector<int>& mapping);

// The 24 -> 20 merge used with SMPL-style bodies: hands into wrists, toes
// into ankles, remaining ids compacted.
std::vector<int> smpl24_to_20_mapping();

// ASCII OBJ for visual debugging.
void export_obj(const std::string& path, const std::vector<Vec3>& vertices,
                const std::vector<std::array<int, 3>>& faces);

}  // namespace equipose::body

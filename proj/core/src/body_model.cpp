#include "equipose/body_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "equipose/errors.hpp"

namespace equipose::body {

void KinematicTree::validate() const {
    if (parent.empty()) throw std::invalid_argument("kinematic tree is empty");
    if (parent[0] != -1) throw std::invalid_argument("joint 0 must be the root");
    for (int k = 1; k < size(); ++k) {
        if (parent[static_cast<size_t>(k)] == -1)
            throw std::invalid_argument("kinematic tree has more than one root");
        if (parent[static_cast<size_t>(k)] < 0 || parent[static_cast<size_t>(k)] >= k)
            throw std::invalid_argument("kinematic tree is not in topological order");
    }
    if (names.size() != parent.size())
        throw std::invalid_argument("kinematic tree has mismatched name table");
}

BodyParams BodyParams::rest(int joints, int betas) {
    BodyParams p;
    p.beta.assign(static_cast<size_t>(betas), 0.0);
    p.theta.assign(static_cast<size_t>(joints), Rotation::identity());
    return p;
}

void BodyModel::validate() const {
    tree.validate();
    const int v = vertex_count();
    const int k = joint_count();
    if (joint_regressor.rows() != k || joint_regressor.cols() != v)
        throw std::invalid_argument("joint regressor shape mismatch");
    if (skinning.rows() != v || skinning.cols() != k)
        throw std::invalid_argument("skinning matrix shape mismatch");
    for (int r = 0; r < k; ++r) {
        if (std::abs(joint_regressor.row(r).sum() - 1.0) > 1e-6)
            throw std::invalid_argument("joint regressor row " + std::to_string(r) +
                                        " does not sum to 1");
        if (joint_regressor.row(r).minCoeff() < 0.0)
            throw std::invalid_argument("joint regressor has negative weights");
    }
    for (int r = 0; r < v; ++r) {
        if (std::abs(skinning.row(r).sum() - 1.0) > 1e-6)
            throw std::invalid_argument("skinning row " + std::to_string(r) + " does not sum to 1");
        if (skinning.row(r).minCoeff() < 0.0)
            throw std::invalid_argument("skinning has negative weights");
        int nonzero = 0;
        for (int c = 0; c < k; ++c)
            if (skinning(r, c) != 0.0) ++nonzero;
        if (nonzero > 4)
            throw std::invalid_argument("vertex " + std::to_string(r) +
                                        " has more than 4 skinning weights");
    }
    for (const auto& column : shape_dirs) {
        Vec3 mean = Vec3::Zero();
        for (const Vec3& d : column) mean += d;
        mean /= static_cast<double>(v);
        if (mean.norm() > 1e-9)
            throw std::invalid_argument("shape basis column is not mean-centered");
    }
    if (static_cast<int>(pose_dirs.size()) != 9 * (k - 1))
        throw std::invalid_argument("pose basis must have 9*(K-1) columns");
    for (const auto& f : faces)
        for (int idx : f)
            if (idx < 0 || idx >= v) throw std::invalid_argument("face index out of range");
    if (face_part.size() != faces.size())
        throw std::invalid_argument("face_part size mismatch");
}

std::vector<Vec3> BodyModel::rest_joints(const std::vector<double>& beta) const {
    if (static_cast<int>(beta.size()) != beta_count())
        throw std::invalid_argument("beta length " + std::to_string(beta.size()) + " != " +
                                    std::to_string(beta_count()));
    const int v = vertex_count();
    Eigen::MatrixXd shaped(v, 3);
    for (int i = 0; i < v; ++i) {
        Vec3 p = template_vertices[static_cast<size_t>(i)];
        for (size_t b = 0; b < beta.size(); ++b) p += beta[b] * shape_dirs[b][static_cast<size_t>(i)];
        shaped.row(i) = p.transpose();
    }
    Eigen::MatrixXd joints = joint_regressor * shaped;
    std::vector<Vec3> out(static_cast<size_t>(joint_count()));
    for (int k = 0; k < joint_count(); ++k) out[static_cast<size_t>(k)] = joints.row(k).transpose();
    return out;
}

// ---------------------------------------------------------------------------------
// Procedural toy body
// ---------------------------------------------------------------------------------

namespace {

struct JointSpec {
    const char* name;
    int parent;
    double x, y, z;
    double axis_x, axis_y, axis_z;  // primary bend axis for pose sampling
};

struct BoneSpec {
    int part;        // owning joint (capsule starts at its rest position)
    int child;       // joint at the far end, or -1 for tip extensions
    Vec3 tip;        // used when child == -1
    double radius;
};

// y-up humanoid, ~1.7 m tall before scaling.
const std::vector<JointSpec>& skeleton16() {
    static const std::vector<JointSpec> joints = {
        {"pelvis", -1, 0.00, 0.95, 0.0, 0, 1, 0},  {"spine", 0, 0.00, 1.10, 0.0, 1, 0, 0},
        {"chest", 1, 0.00, 1.30, 0.0, 1, 0, 0},    {"head", 2, 0.00, 1.48, 0.0, 1, 0, 0},
        {"l_hip", 0, 0.10, 0.90, 0.0, 1, 0, 0},    {"l_knee", 4, 0.12, 0.50, 0.0, 1, 0, 0},
        {"l_ankle", 5, 0.13, 0.10, 0.0, 1, 0, 0},  {"r_hip", 0, -0.10, 0.90, 0.0, 1, 0, 0},
        {"r_knee", 7, -0.12, 0.50, 0.0, 1, 0, 0},  {"r_ankle", 8, -0.13, 0.10, 0.0, 1, 0, 0},
        {"l_shoulder", 2, 0.18, 1.40, 0.0, 0, 0, 1}, {"l_elbow", 10, 0.46, 1.40, 0.0, 0, 0, 1},
        {"l_wrist", 11, 0.72, 1.40, 0.0, 0, 0, 1}, {"r_shoulder", 2, -0.18, 1.40, 0.0, 0, 0, 1},
        {"r_elbow", 13, -0.46, 1.40, 0.0, 0, 0, 1}, {"r_wrist", 14, -0.72, 1.40, 0.0, 0, 0, 1},
    };
    return joints;
}

const std::vector<JointSpec>& skeleton22() {
    static const std::vector<JointSpec> joints = {
        {"pelvis", -1, 0.00, 0.95, 0.0, 0, 1, 0},   {"l_hip", 0, 0.10, 0.90, 0.0, 1, 0, 0},
        {"r_hip", 0, -0.10, 0.90, 0.0, 1, 0, 0},    {"spine1", 0, 0.00, 1.06, 0.0, 1, 0, 0},
        {"l_knee", 1, 0.12, 0.50, 0.0, 1, 0, 0},    {"r_knee", 2, -0.12, 0.50, 0.0, 1, 0, 0},
        {"spine2", 3, 0.00, 1.18, 0.0, 1, 0, 0},    {"l_ankle", 4, 0.13, 0.10, 0.0, 1, 0, 0},
        {"r_ankle", 5, -0.13, 0.10, 0.0, 1, 0, 0},  {"spine3", 6, 0.00, 1.30, 0.0, 1, 0, 0},
        {"l_foot", 7, 0.13, 0.03, 0.10, 1, 0, 0},   {"r_foot", 8, -0.13, 0.03, 0.10, 1, 0, 0},
        {"neck", 9, 0.00, 1.44, 0.0, 1, 0, 0},      {"l_collar", 9, 0.08, 1.38, 0.0, 0, 0, 1},
        {"r_collar", 9, -0.08, 1.38, 0.0, 0, 0, 1}, {"head", 12, 0.00, 1.52, 0.0, 1, 0, 0},
        {"l_shoulder", 13, 0.20, 1.40, 0.0, 0, 0, 1}, {"r_shoulder", 14, -0.20, 1.40, 0.0, 0, 0, 1},
        {"l_elbow", 16, 0.46, 1.40, 0.0, 0, 0, 1},  {"r_elbow", 17, -0.46, 1.40, 0.0, 0, 0, 1},
        {"l_wrist", 18, 0.72, 1.40, 0.0, 0, 0, 1},  {"r_wrist", 19, -0.72, 1.40, 0.0, 0, 0, 1},
    };
    return joints;
}

// Radius by bone kind, keyed on the owning part's name prefix.
double bone_radius(const std::string& part_name, bool is_tip) {
    auto has = [&](const char* s) { return part_name.find(s) != std::string::npos; };
    if (part_name == "pelvis") return 0.105;
    if (has("spine") || part_name == "chest") return has("hip") ? 0.09 : 0.115;
    if (has("neck")) return 0.05;
    if (has("head")) return 0.088;
    if (has("collar")) return 0.06;
    if (has("hip")) return 0.072;
    if (has("knee")) return 0.052;
    if (has("ankle") || has("foot")) return 0.035;
    if (has("shoulder")) return 0.047;
    if (has("elbow")) return 0.038;
    if (has("wrist")) return is_tip ? 0.032 : 0.035;
    return 0.06;
}

double smoothstep(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

}  // namespace

BodyModel build_toy_body(const ToyBodyConfig& config) {
    const std::vector<JointSpec>* layout = nullptr;
    if (config.joints == 16)
        layout = &skeleton16();
    else if (config.joints == 22)
        layout = &skeleton22();
    else
        throw std::invalid_argument("build_toy_body: supported joint counts are 16 and 22, got " +
                                    std::to_string(config.joints));

    const double unit = config.height / 1.7;
    const int K = config.joints;

    BodyModel model;
    model.tree.parent.reserve(static_cast<size_t>(K));
    std::vector<Vec3> joint_pos;
    for (const JointSpec& j : *layout) {
        model.tree.parent.push_back(j.parent);
        model.tree.names.emplace_back(j.name);
        joint_pos.emplace_back(j.x * unit, j.y * unit, j.z * unit);
        model.joint_axes.push_back(Vec3(j.axis_x, j.axis_y, j.axis_z).normalized());
        model.joint_limits.push_back(2.1);
    }
    model.tree.validate();

    // One capsule per bone (joint -> each child), plus tip capsules at leaves.
    std::vector<BoneSpec> bones;
    std::vector<int> tip_parts;
    for (int k = 0; k < K; ++k) {
        bool leaf = true;
        for (int c = k + 1; c < K; ++c) {
            if (model.tree.parent[static_cast<size_t>(c)] != k) continue;
            leaf = false;
            bones.push_back({k, c, Vec3::Zero(),
                             bone_radius(model.tree.names[static_cast<size_t>(c)], false)});
        }
        if (leaf) {
            const std::string& name = model.tree.names[static_cast<size_t>(k)];
            Vec3 tip = joint_pos[static_cast<size_t>(k)];
            if (name.find("head") != std::string::npos)
                tip += Vec3(0.0, 0.22 * unit, 0.0);
            else if (name.find("wrist") != std::string::npos)
                tip += Vec3(tip.x() > 0 ? 0.13 * unit : -0.13 * unit, 0.0, 0.0);
            else  // ankles / feet extend forward
                tip += Vec3(0.0, -0.07 * unit, 0.16 * unit);
            bones.push_back({k, -1, tip, bone_radius(name, true)});
            tip_parts.push_back(k);
        }
    }

    const int n_around = 8;
    const int min_rings = 3;
    const auto n_bones = static_cast<int>(bones.size());
    if (config.vertex_budget < n_bones * (min_rings * n_around + 2))
        throw std::invalid_argument("vertex budget too small: need at least " +
                                    std::to_string(n_bones * (min_rings * n_around + 2)));

    // Distribute rings proportionally to bone length.
    double total_len = 0.0;
    std::vector<double> lengths;
    for (const BoneSpec& b : bones) {
        const Vec3 end = b.child >= 0 ? joint_pos[static_cast<size_t>(b.child)] : b.tip;
        lengths.push_back((end - joint_pos[static_cast<size_t>(b.part)]).norm());
        total_len += lengths.back();
    }
    const int ring_budget = (config.vertex_budget - 2 * n_bones) / n_around;
    std::vector<int> rings(bones.size());
    for (size_t b = 0; b < bones.size(); ++b)
        rings[b] = std::max(min_rings,
                            static_cast<int>(std::floor(ring_budget * lengths[b] / total_len)));

    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::vector<int> face_part;
    Eigen::MatrixXd dense_skin;  // filled after verts are known
    std::vector<std::array<std::pair<int, double>, 2>> vert_weights;  // <= 2 influences
    std::vector<int> vert_bone;       // owning capsule per vertex
    std::vector<double> vert_t;       // axial parameter per vertex
    std::vector<std::vector<int>> joint_ring(static_cast<size_t>(K));  // regressor rings
    std::vector<int> tip_marker;

    for (size_t b = 0; b < bones.size(); ++b) {
        const BoneSpec& bone = bones[b];
        const Vec3 a = joint_pos[static_cast<size_t>(bone.part)];
        const Vec3 end = bone.child >= 0 ? joint_pos[static_cast<size_t>(bone.child)] : bone.tip;
        const Vec3 axis = (end - a).normalized();
        const Vec3 ref = std::abs(axis.y()) < 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
        const Vec3 e1 = axis.cross(ref).normalized();
        const Vec3 e2 = axis.cross(e1);
        const double len = lengths[b];
        const double radius = bone.radius * unit * config.radius_scale;
        const double zone_a = std::clamp(0.08 * unit / len, 0.15, 0.45);
        const double zone_b = std::clamp(0.08 * unit / len, 0.15, 0.45);
        const int parent_part = model.tree.parent[static_cast<size_t>(bone.part)];

        auto weights_at = [&](double t) -> std::array<std::pair<int, double>, 2> {
            if (t < zone_a && parent_part >= 0) {
                const double w = 0.5 + 0.5 * smoothstep(t / zone_a);
                return {{{bone.part, w}, {parent_part, 1.0 - w}}};
            }
            if (t > 1.0 - zone_b && bone.child >= 0) {
                const double w = 0.5 * smoothstep((t - (1.0 - zone_b)) / zone_b);
                return {{{bone.part, 1.0 - w}, {bone.child, w}}};
            }
            return {{{bone.part, 1.0}, {-1, 0.0}}};
        };

        const int nr = rings[b];
        const int ring0 = static_cast<int>(verts.size());
        for (int i = 0; i < nr; ++i) {
            const double t = static_cast<double>(i) / (nr - 1);
            for (int s = 0; s < n_around; ++s) {
                const double ang = 2.0 * std::numbers::pi * s / n_around;
                verts.push_back(a + t * len * axis + radius * (std::cos(ang) * e1 + std::sin(ang) * e2));
                vert_weights.push_back(weights_at(t));
                vert_bone.push_back(static_cast<int>(b));
                vert_t.push_back(t);
            }
        }
        const int pole_bottom = static_cast<int>(verts.size());
        verts.push_back(a - 0.6 * radius * axis);
        vert_weights.push_back(weights_at(0.0));
        vert_bone.push_back(static_cast<int>(b));
        vert_t.push_back(0.0);
        const int pole_top = static_cast<int>(verts.size());
        verts.push_back(end + 0.6 * radius * axis);
        vert_weights.push_back(weights_at(1.0));
        vert_bone.push_back(static_cast<int>(b));
        vert_t.push_back(1.0);

        // The ring at t=0 sits exactly on the joint: regressor + marker anchor.
        if (joint_ring[static_cast<size_t>(bone.part)].empty())
            for (int s = 0; s < n_around; ++s)
                joint_ring[static_cast<size_t>(bone.part)].push_back(ring0 + s);
        if (bone.child < 0) tip_marker.push_back(pole_top);

        // Side quads; winding chosen so normals point outward.
        for (int i = 0; i + 1 < nr; ++i)
            for (int s = 0; s < n_around; ++s) {
                const int s1 = (s + 1) % n_around;
                const int v00 = ring0 + i * n_around + s;
                const int v01 = ring0 + i * n_around + s1;
                const int v10 = ring0 + (i + 1) * n_around + s;
                const int v11 = ring0 + (i + 1) * n_around + s1;
                faces.push_back({v00, v01, v11});
                faces.push_back({v00, v11, v10});
                face_part.push_back(bone.part);
                face_part.push_back(bone.part);
            }
        // End fans.
        for (int s = 0; s < n_around; ++s) {
            const int s1 = (s + 1) % n_around;
            faces.push_back({pole_bottom, ring0 + s1, ring0 + s});
            face_part.push_back(bone.part);
            const int top0 = ring0 + (nr - 1) * n_around;
            faces.push_back({pole_top, top0 + s, top0 + s1});
            face_part.push_back(bone.part);
        }
    }

    const auto V = static_cast<int>(verts.size());
    model.template_vertices = verts;
    model.faces = std::move(faces);
    model.face_part = std::move(face_part);

    // Skinning matrix from the per-vertex influence pairs.
    model.skinning = Eigen::MatrixXd::Zero(V, K);
    for (int i = 0; i < V; ++i)
        for (const auto& [part, w] : vert_weights[static_cast<size_t>(i)])
            if (part >= 0 && w != 0.0) model.skinning(i, part) += w;

    // Joint regressor: uniform average of the ring sitting on each joint.
    model.joint_regressor = Eigen::MatrixXd::Zero(K, V);
    for (int k = 0; k < K; ++k) {
        const auto& ring = joint_ring[static_cast<size_t>(k)];
        if (ring.empty()) throw std::logic_error("joint without geometry: " + model.tree.names[static_cast<size_t>(k)]);
        for (int idx : ring) model.joint_regressor(k, idx) = 1.0 / static_cast<double>(ring.size());
    }

    // Markers: one ring vertex per joint plus the tip poles.
    for (int k = 0; k < K; ++k) model.marker_vertices.push_back(joint_ring[static_cast<size_t>(k)][0]);
    for (int idx : tip_marker) model.marker_vertices.push_back(idx);

    // -- shape basis: parameterized limb scalings -----------------------------------
    const Vec3 pelvis = joint_pos[0];
    auto part_name = [&](int vi) {
        return model.tree.names[static_cast<size_t>(bones[static_cast<size_t>(vert_bone[static_cast<size_t>(vi)])].part)];
    };
    auto bone_axis_point = [&](int vi) {
        const BoneSpec& bn = bones[static_cast<size_t>(vert_bone[static_cast<size_t>(vi)])];
        const Vec3 a = joint_pos[static_cast<size_t>(bn.part)];
        const Vec3 end = bn.child >= 0 ? joint_pos[static_cast<size_t>(bn.child)] : bn.tip;
        return a + vert_t[static_cast<size_t>(vi)] * (end - a);
    };
    const double y_pelvis = pelvis.y();
    const double y_chest = 1.30 * unit;
    const double y_ankle = 0.10 * unit;
    const double y_belly = 1.05 * unit;
    const double y_arm = 1.40 * unit;

    std::vector<std::vector<Vec3>> basis;
    basis.reserve(static_cast<size_t>(config.betas));
    for (int b = 0; b < config.betas; ++b) {
        std::vector<Vec3> column(static_cast<size_t>(V), Vec3::Zero());
        for (int i = 0; i < V; ++i) {
            const Vec3& v = verts[static_cast<size_t>(i)];
            const std::string name = part_name(i);
            auto on = [&](const char* s) { return name.find(s) != std::string::npos; };
            const bool on_arm = on("shoulder") || on("elbow") || on("wrist") || on("collar");
            const bool on_leg = on("hip") || on("knee") || on("ankle") || on("foot");
            Vec3 d = Vec3::Zero();
            switch (b) {
                case 0:  // overall size
                    d = 0.06 * (v - pelvis);
                    break;
                case 1:  // girth: radial about the owning bone axis
                    d = 0.04 * (v - bone_axis_point(i));
                    break;
                case 2:  // torso length
                    d = Vec3(0, 0.05 * unit * smoothstep((v.y() - y_pelvis) / (y_chest - y_pelvis)), 0);
                    break;
                case 3:  // leg length
                    d = Vec3(0, -0.05 * unit * smoothstep((y_pelvis - v.y()) / (y_pelvis - y_ankle)), 0);
                    break;
                case 4:  // arm length
                    if (on_arm && !on("collar"))
                        d = Vec3(0.05 * (v.x() - (v.x() > 0 ? 0.18 : -0.18) * unit), 0, 0);
                    break;
                case 5:  // head size
                    if (on("head")) d = 0.05 * (v - joint_pos[static_cast<size_t>(bones[static_cast<size_t>(vert_bone[static_cast<size_t>(i)])].part)]);
                    break;
                case 6:  // shoulder width
                    if (on_arm || on("chest") || on("spine"))
                        d = Vec3(0.03 * unit * smoothstep(std::abs(v.x()) / (0.2 * unit)) * (v.x() > 0 ? 1 : -1), 0, 0);
                    break;
                case 7:  // hip width
                    if (on_leg || name == "pelvis")
                        d = Vec3(0.03 * unit * smoothstep(std::abs(v.x()) / (0.12 * unit)) * (v.x() > 0 ? 1 : -1), 0, 0);
                    break;
                case 8: {  // belly bulge
                    const double g = std::exp(-std::pow((v.y() - y_belly) / (0.20 * unit), 2.0));
                    if (v.z() > 0 && !on_arm && !on_leg) d = Vec3(0, 0, 0.05 * unit * g);
                    break;
                }
                case 9: {  // upper/lower limb ratio: slide knees/elbows along the limb
                    if (on_leg) {
                        const double bump = std::max(0.0, 1.0 - std::abs(v.y() - 0.50 * unit) / (0.35 * unit));
                        d = Vec3(0, -0.04 * unit * bump, 0);
                    } else if (on_arm && !on("collar")) {
                        const double bump = std::max(0.0, 1.0 - std::abs(std::abs(v.x()) - 0.46 * unit) / (0.22 * unit));
                        d = Vec3(0.04 * unit * bump * (v.x() > 0 ? 1 : -1), 0, 0);
                    }
                    (void)y_arm;
                    break;
                }
                default: {  // extra coefficients beyond 10: smooth axis wobbles
                    const double f = 0.5 * (b - 9);
                    d = 0.01 * Vec3(std::sin(f * v.y() / unit), std::sin(f * v.x() / unit),
                                    std::cos(f * v.y() / unit));
                    break;
                }
            }
            column[static_cast<size_t>(i)] = config.shape_magnitude * d;
        }
        Vec3 mean = Vec3::Zero();
        for (const Vec3& d : column) mean += d;
        mean /= static_cast<double>(V);
        for (Vec3& d : column) d -= mean;
        basis.push_back(std::move(column));
    }
    model.shape_dirs = std::move(basis);

    // -- pose-corrective basis: zero by default, seeded smooth bumps otherwise ------
    model.pose_dirs.assign(static_cast<size_t>(9 * (K - 1)), {});
    Rng pose_rng(config.seed);
    for (int k = 1; k < K; ++k) {
        const Vec3 center = joint_pos[static_cast<size_t>(k)];
        for (int e = 0; e < 9; ++e) {
            auto& column = model.pose_dirs[static_cast<size_t>((k - 1) * 9 + e)];
            column.assign(static_cast<size_t>(V), Vec3::Zero());
            if (config.pose_dirs_scale == 0.0) continue;
            const Vec3 dir(pose_rng.normal(), pose_rng.normal(), pose_rng.normal());
            const Vec3 u = dir.norm() > 1e-12 ? Vec3(dir.normalized()) : Vec3(1, 0, 0);
            for (int i = 0; i < V; ++i) {
                const double r2 = (verts[static_cast<size_t>(i)] - center).squaredNorm();
                column[static_cast<size_t>(i)] =
                    config.pose_dirs_scale * 0.01 * std::exp(-r2 / (0.01 * unit * unit)) * u;
            }
        }
    }

    model.validate();
    return model;
}

// ---------------------------------------------------------------------------------
// Posing
// ---------------------------------------------------------------------------------

std::vector<Vec3> rest_pose_mesh(const BodyModel& model, const BodyParams& params) {
    if (static_cast<int>(params.beta.size()) != model.beta_count())
        throw std::invalid_argument("beta length mismatch: " + std::to_string(params.beta.size()) +
                                    " vs " + std::to_string(model.beta_count()));
    const int V = model.vertex_count();
    const int K = model.joint_count();
    std::vector<Vec3> out = model.template_vertices;
    for (size_t b = 0; b < params.beta.size(); ++b) {
        const double c = params.beta[b];
        if (c == 0.0) continue;
        for (int i = 0; i < V; ++i) out[static_cast<size_t>(i)] += c * model.shape_dirs[b][static_cast<size_t>(i)];
    }
    for (int k = 1; k < K; ++k) {
        const Mat3 delta = params.theta[static_cast<size_t>(k)].matrix() - Mat3::Identity();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                const double coeff = delta(r, c);
                if (coeff == 0.0) continue;
                const auto& column = model.pose_dirs[static_cast<size_t>((k - 1) * 9 + r * 3 + c)];
                if (column.empty()) continue;
                for (int i = 0; i < V; ++i) out[static_cast<size_t>(i)] += coeff * column[static_cast<size_t>(i)];
            }
    }
    return out;
}

FkResult forward_kinematics(const BodyModel& model, const BodyParams& params) {
    const int K = model.joint_count();
    if (static_cast<int>(params.theta.size()) != K)
        throw std::invalid_argument("theta count mismatch");
    const std::vector<Vec3> rest = model.rest_joints(params.beta);
    FkResult fk;
    fk.part_transforms.resize(static_cast<size_t>(K));
    fk.posed_joints.resize(static_cast<size_t>(K));
    fk.global_rotations.resize(static_cast<size_t>(K), Rotation::identity());
    for (int k = 0; k < K; ++k) {
        const Mat3 local = params.theta[static_cast<size_t>(k)].matrix();
        const int p = model.tree.parent[static_cast<size_t>(k)];
        RigidTransform tf;
        if (p < 0) {
            tf.rot = local;
            tf.t = rest[static_cast<size_t>(k)] - local * rest[static_cast<size_t>(k)];
        } else {
            const RigidTransform& pt = fk.part_transforms[static_cast<size_t>(p)];
            tf.rot = pt.rot * local;
            tf.t = pt.apply(rest[static_cast<size_t>(k)]) - tf.rot * rest[static_cast<size_t>(k)];
        }
        fk.part_transforms[static_cast<size_t>(k)] = tf;
        fk.global_rotations[static_cast<size_t>(k)] = Rotation::from_matrix_unchecked(tf.rot);
    }
    for (int k = 0; k < K; ++k) {
        fk.part_transforms[static_cast<size_t>(k)].t += params.trans;
        fk.posed_joints[static_cast<size_t>(k)] =
            fk.part_transforms[static_cast<size_t>(k)].apply(rest[static_cast<size_t>(k)]);
    }
    return fk;
}

std::vector<Vec3> lbs(const BodyModel& model, const BodyParams& params) {
    const std::vector<Vec3> rest = rest_pose_mesh(model, params);
    const FkResult fk = forward_kinematics(model, params);
    const int V = model.vertex_count();
    const int K = model.joint_count();
    std::vector<Vec3> out(static_cast<size_t>(V), Vec3::Zero());
    for (int i = 0; i < V; ++i) {
        Vec3 acc = Vec3::Zero();
        for (int k = 0; k < K; ++k) {
            const double w = model.skinning(i, k);
            if (w == 0.0) continue;
            acc += w * fk.part_transforms[static_cast<size_t>(k)].apply(rest[static_cast<size_t>(i)]);
        }
        out[static_cast<size_t>(i)] = acc;
    }
    return out;
}

std::vector<Rotation> local_from_global(const KinematicTree& tree,
                                        const std::vector<Rotation>& global_rots) {
    tree.validate();
    if (static_cast<int>(global_rots.size()) != tree.size())
        throw std::invalid_argument("global rotation count mismatch");
    std::vector<Rotation> locals;
    locals.reserve(global_rots.size());
    for (int k = 0; k < tree.size(); ++k) {
        const int p = tree.parent[static_cast<size_t>(k)];
        if (p < 0)
            locals.push_back(global_rots[static_cast<size_t>(k)]);
        else
            locals.push_back(Rotation::from_matrix_unchecked(
                global_rots[static_cast<size_t>(p)].matrix().transpose() *
                global_rots[static_cast<size_t>(k)].matrix()));
    }
    return locals;
}

std::vector<Rotation> global_from_local(const KinematicTree& tree,
                                        const std::vector<Rotation>& local_rots) {
    tree.validate();
    if (static_cast<int>(local_rots.size()) != tree.size())
        throw std::invalid_argument("local rotation count mismatch");
    std::vector<Rotation> globals;
    globals.reserve(local_rots.size());
    for (int k = 0; k < tree.size(); ++k) {
        const int p = tree.parent[static_cast<size_t>(k)];
        if (p < 0)
            globals.push_back(local_rots[static_cast<size_t>(k)]);
        else
            globals.push_back(Rotation::from_matrix_unchecked(
                globals[static_cast<size_t>(p)].matrix() * local_rots[static_cast<size_t>(k)].matrix()));
    }
    return globals;
}

// ---------------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------------

SampleRecord sample_point_cloud(const BodyModel& model, const BodyParams& params, int n,
                                double noise, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_point_cloud: n must be >= 1");
    SampleRecord record;
    record.gt_params = params;
    record.gt_vertices = lbs(model, params);
    const FkResult fk = forward_kinematics(model, params);
    record.gt_joints = fk.posed_joints;
    record.gt_global_rots = fk.global_rotations;

    const auto& verts = record.gt_vertices;
    const auto n_faces = model.faces.size();

    // Face areas / normals and area-weighted vertex normals, on the posed mesh.
    std::vector<double> area(n_faces);
    std::vector<Vec3> vert_normal(verts.size(), Vec3::Zero());
    for (size_t f = 0; f < n_faces; ++f) {
        const auto& face = model.faces[f];
        const Vec3 cross = (verts[static_cast<size_t>(face[1])] - verts[static_cast<size_t>(face[0])])
                               .cross(verts[static_cast<size_t>(face[2])] - verts[static_cast<size_t>(face[0])]);
        area[f] = 0.5 * cross.norm();
        for (int idx : face) vert_normal[static_cast<size_t>(idx)] += cross;
    }
    for (Vec3& vn : vert_normal) {
        const double len = vn.norm();
        if (len > 1e-15) vn /= len;
    }

    Rng root(seed);
    Rng region_rng = root.stream(1);
    Rng point_rng = root.stream(2);

    // Non-uniformity: one log-normal multiplier per part per cloud.
    std::vector<double> part_mult(static_cast<size_t>(model.joint_count()));
    for (double& m : part_mult) m = std::exp(0.5 * region_rng.normal());

    std::vector<double> cumulative(n_faces);
    double total = 0.0;
    for (size_t f = 0; f < n_faces; ++f) {
        total += area[f] * part_mult[static_cast<size_t>(model.face_part[f])];
        cumulative[f] = total;
    }
    if (!(total > 0.0)) throw std::invalid_argument("sample_point_cloud: degenerate mesh");

    record.points.reserve(static_cast<size_t>(n));
    record.part_label.reserve(static_cast<size_t>(n));
    const int K = model.joint_count();
    for (int i = 0; i < n; ++i) {
        const double u = point_rng.uniform01() * total;
        const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
        const auto f = static_cast<size_t>(std::min<std::ptrdiff_t>(
            std::distance(cumulative.begin(), it), static_cast<std::ptrdiff_t>(n_faces) - 1));
        const auto& face = model.faces[f];

        const double su = std::sqrt(point_rng.uniform01());
        const double r2 = point_rng.uniform01();
        const double b0 = 1.0 - su, b1 = su * (1.0 - r2), b2 = su * r2;

        Vec3 p = b0 * verts[static_cast<size_t>(face[0])] + b1 * verts[static_cast<size_t>(face[1])] +
                 b2 * verts[static_cast<size_t>(face[2])];
        Vec3 nrm = b0 * vert_normal[static_cast<size_t>(face[0])] +
                   b1 * vert_normal[static_cast<size_t>(face[1])] +
                   b2 * vert_normal[static_cast<size_t>(face[2])];
        const double nl = nrm.norm();
        if (nl > 1e-12) nrm /= nl;
        const double displacement = point_rng.uniform(-noise, noise);
        p += displacement * nrm;

        int label = 0;
        double best = -1.0;
        for (int k = 0; k < K; ++k) {
            const double w = b0 * model.skinning(face[0], k) + b1 * model.skinning(face[1], k) +
                             b2 * model.skinning(face[2], k);
            if (w > best) {
                best = w;
                label = k;
            }
        }
        record.points.push_back(p);
        record.part_label.push_back(label);
    }
    return record;
}

std::vector<int> merge_parts(const std::vector<int>& labels, const std::vector<int>& mapping) {
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) {
        if (l < 0 || l >= static_cast<int>(mapping.size()) || mapping[static_cast<size_t>(l)] < 0)
            throw std::invalid_argument("merge_parts: unmapped label " + std::to_string(l));
        out.push_back(mapping[static_cast<size_t>(l)]);
    }
    return out;
}

std::vector<int> smpl24_to_20_mapping() {
    // Hands (22, 23) fold into wrists (20, 21); feet/toes (10, 11) into the
    // ankles (7, 8); surviving ids are compacted to 0..19.
    std::vector<int> target(24);
    for (int i = 0; i < 24; ++i) target[static_cast<size_t>(i)] = i;
    target[10] = 7;
    target[11] = 8;
    target[22] = 20;
    target[23] = 21;
    std::vector<int> compact(24, -1);
    int next = 0;
    for (int i = 0; i < 24; ++i)
        if (target[static_cast<size_t>(i)] == i) compact[static_cast<size_t>(i)] = next++;
    std::vector<int> mapping(24);
    for (int i = 0; i < 24; ++i) mapping[static_cast<size_t>(i)] = compact[static_cast<size_t>(target[static_cast<size_t>(i)])];
    return mapping;
}

void export_obj(const std::string& path, const std::vector<Vec3>& vertices,
                const std::vector<std::array<int, 3>>& faces) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    os << "# equipose mesh export\n";
    char line[128];
    for (const Vec3& v : vertices) {
        std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
        os << line;
    }
    for (const auto& f : faces) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

}  // namespace equipose::body

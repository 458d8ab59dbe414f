#include "twinsplat/dataset.hpp"

#include "twinsplat/camera.hpp"
#include "twinsplat/errors.hpp"
#include "twinsplat/isosurface.hpp"
#include "twinsplat/mesh_raster.hpp"
#include "twinsplat/random.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace twinsplat {

namespace {

struct Primitive {
    enum class Shape { capsule, ellipsoid } shape;
    Eigen::Vector3d a, b;   // capsule endpoints; ellipsoid center in a
    Eigen::Vector3d radii;  // capsule radius in x; ellipsoid semi-axes
    std::uint8_t part;

    [[nodiscard]] double sdf(const Eigen::Vector3d& p) const {
        if (shape == Shape::capsule) {
            const Eigen::Vector3d ab = b - a;
            const double h = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
            return (p - a - h * ab).norm() - radii.x();
        }
        // Scaled-sphere bound; exact on the surface, which is all the mesher needs.
        const Eigen::Vector3d q = p - a;
        const double k0 = q.cwiseQuotient(radii).norm();
        const double k1 = q.cwiseQuotient(radii.cwiseProduct(radii)).norm();
        if (k1 <= 0.0) return -radii.minCoeff();
        return k0 * (k0 - 1.0) / k1;
    }

    void extend(Eigen::Vector3d& lo, Eigen::Vector3d& hi) const {
        const double r = shape == Shape::capsule ? radii.x() : radii.maxCoeff();
        for (const auto& p : {a, b}) {
            lo = lo.cwiseMin(p - Eigen::Vector3d::Constant(r));
            hi = hi.cwiseMax(p + Eigen::Vector3d::Constant(r));
        }
    }
};

Primitive capsule(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double r, BodyPart part) {
    return {Primitive::Shape::capsule, a, b, Eigen::Vector3d(r, r, r), static_cast<std::uint8_t>(part)};
}

Primitive ellipsoid(const Eigen::Vector3d& c, const Eigen::Vector3d& radii, BodyPart part) {
    return {Primitive::Shape::ellipsoid, c, c, radii, static_cast<std::uint8_t>(part)};
}

double deg(double d) { return d * std::numbers::pi / 180.0; }

/// Direction of a limb hanging down, swung outward by `abduct` (toward +x when side = +1) and forward by `flex`.
Eigen::Vector3d limb_direction(double side, double abduct, double flex) {
    const Eigen::Vector3d down(0.0, -1.0, 0.0);
    const Eigen::Matrix3d r = (Eigen::AngleAxisd(flex, -Eigen::Vector3d::UnitX()) *
                               Eigen::AngleAxisd(side * abduct, Eigen::Vector3d::UnitZ()))
                                  .toRotationMatrix();
    return r * down;
}

struct Palette {
    Eigen::Vector3f skin, shirt, pants, shoes;
};

Palette pick_palette(Rng& rng, double jitter) {
    static const std::array<Eigen::Vector3f, 4> skins = {Eigen::Vector3f(0.93f, 0.78f, 0.65f), {0.80f, 0.60f, 0.45f},
                                                         {0.60f, 0.42f, 0.30f}, {0.42f, 0.28f, 0.20f}};
    static const std::array<Eigen::Vector3f, 6> shirts = {Eigen::Vector3f(0.80f, 0.15f, 0.15f), {0.15f, 0.35f, 0.75f},
                                                          {0.20f, 0.60f, 0.30f}, {0.90f, 0.80f, 0.20f},
                                                          {0.55f, 0.25f, 0.65f}, {0.92f, 0.92f, 0.90f}};
    static const std::array<Eigen::Vector3f, 4> pants = {Eigen::Vector3f(0.15f, 0.20f, 0.40f), {0.30f, 0.30f, 0.32f},
                                                         {0.55f, 0.45f, 0.30f}, {0.20f, 0.35f, 0.25f}};
    auto jittered = [&](Eigen::Vector3f c) {
        for (int k = 0; k < 3; ++k)
            c[k] = std::clamp(c[k] + static_cast<float>(rng.uniform(-jitter, jitter)), 0.05f, 0.95f);
        return c;
    };
    Palette p;
    p.skin = jittered(skins[rng.index(skins.size())]);
    p.shirt = jittered(shirts[rng.index(shirts.size())]);
    p.pants = jittered(pants[rng.index(pants.size())]);
    p.shoes = jittered(Eigen::Vector3f(0.12f, 0.10f, 0.10f));
    return p;
}

std::vector<Primitive> build_body(Rng& rng, const SynthConfig& cfg) {
    const double j = cfg.proportion_jitter;
    const double s = cfg.pose_scale;
    auto len = [&](double base) { return base * (1.0 + rng.uniform(-j, j)); };
    auto angle = [&](double center, double half_range) { return deg(center + s * rng.uniform(-half_range, half_range)); };

    std::vector<Primitive> prims;
    const double torso_h = len(0.56);
    const Eigen::Vector3d pelvis(0.0, 0.0, 0.0);
    const Eigen::Vector3d chest = pelvis + Eigen::Vector3d(0.0, 0.5 * torso_h, 0.0);
    prims.push_back(ellipsoid(chest, {0.18 * (1.0 + rng.uniform(-j, j)), 0.5 * torso_h + 0.04, 0.11}, BodyPart::torso));
    prims.push_back(ellipsoid(pelvis + Eigen::Vector3d(0.0, 0.02, 0.0), {0.16, 0.11, 0.105}, BodyPart::torso));
    const Eigen::Vector3d neck_base = pelvis + Eigen::Vector3d(0.0, torso_h, 0.0);
    const Eigen::Vector3d neck_top = neck_base + Eigen::Vector3d(0.0, 0.09, 0.0);
    prims.push_back(capsule(neck_base, neck_top, 0.045, BodyPart::torso));
    prims.push_back(capsule({-0.2, torso_h - 0.06, 0.0}, {0.2, torso_h - 0.06, 0.0}, 0.065, BodyPart::torso));
    const double head_r = 0.105 * (1.0 + rng.uniform(-j, j));
    prims.push_back(ellipsoid(neck_top + Eigen::Vector3d(0.0, 0.09, 0.01), {head_r, 1.18 * head_r, 1.08 * head_r},
                              BodyPart::head));

    for (const double side : {1.0, -1.0}) {
        const bool left = side > 0.0;
        const Eigen::Vector3d shoulder(side * 0.21, torso_h - 0.05, 0.0);
        const double abduct = angle(24.0, 9.0);
        const double flex = angle(0.0, 20.0);
        const double elbow = angle(15.0, 15.0);
        const Eigen::Vector3d upper_dir = limb_direction(side, abduct, flex);
        const Eigen::Vector3d elbow_p = shoulder + len(0.29) * upper_dir;
        const Eigen::Vector3d fore_dir = limb_direction(side, abduct, flex + elbow);
        const Eigen::Vector3d wrist = elbow_p + len(0.25) * fore_dir;
        const BodyPart arm = left ? BodyPart::left_arm : BodyPart::right_arm;
        prims.push_back(capsule(shoulder, elbow_p, 0.052, arm));
        prims.push_back(capsule(elbow_p, wrist, 0.043, arm));
        prims.push_back(
            capsule(wrist + 0.035 * fore_dir, wrist + 0.11 * fore_dir, 0.038, left ? BodyPart::left_hand : BodyPart::right_hand));

        const Eigen::Vector3d hip(side * 0.09, -0.03, 0.0);
        const double hip_abduct = angle(5.0, 3.0);
        const double hip_flex = angle(0.0, 14.0);
        const double knee = angle(-10.0, 10.0);
        const Eigen::Vector3d thigh_dir = limb_direction(side, hip_abduct, hip_flex);
        const Eigen::Vector3d knee_p = hip + len(0.42) * thigh_dir;
        const Eigen::Vector3d shin_dir = limb_direction(side, hip_abduct, hip_flex + knee);
        const Eigen::Vector3d ankle = knee_p + len(0.40) * shin_dir;
        const BodyPart leg = left ? BodyPart::left_leg : BodyPart::right_leg;
        prims.push_back(capsule(hip, knee_p, 0.078, leg));
        prims.push_back(capsule(knee_p, ankle, 0.06, leg));
        prims.push_back(capsule(ankle + Eigen::Vector3d(0.0, -0.03, -0.02), ankle + Eigen::Vector3d(0.0, -0.04, 0.12),
                                0.042, leg));
    }
    return prims;
}

Eigen::Vector3f part_color(std::uint8_t part, const Palette& p, double foot_height, double y) {
    switch (static_cast<BodyPart>(part)) {
        case BodyPart::head:
        case BodyPart::left_hand:
        case BodyPart::right_hand: return p.skin;
        case BodyPart::torso:
        case BodyPart::left_arm:
        case BodyPart::right_arm: return p.shirt;
        default: return y < foot_height ? p.shoes : p.pants;
    }
}

} // namespace

const char* part_name(int part_id) {
    static const char* names[] = {"background", "head",      "torso",      "left_arm", "right_arm",
                                  "left_hand",  "right_hand", "left_leg", "right_leg"};
    if (part_id < 0 || part_id > kNumParts) throw InputError("part_name: id out of range");
    return names[part_id];
}

void ScanSample::validate() const {
    mesh.validate();
    if (mesh.empty()) throw InputError("scan " + meta.id + ": empty mesh");
    if (!mesh.has_colors()) throw InputError("scan " + meta.id + ": mesh has no vertex colors");
    for (const auto& v : mesh.vertices)
        if (!(v.cwiseAbs().maxCoeff() <= 1.0)) throw InputError("scan " + meta.id + ": mesh leaves the [-1,1]^3 box");
    if (front_image.channels != 3 || front_image.width != label_mask.width ||
        front_image.height != label_mask.height)
        throw InputError("scan " + meta.id + ": front image and label mask disagree in shape");
    for (auto l : label_mask.labels)
        if (l > kNumParts) throw InputError("scan " + meta.id + ": label id out of range");
}

double silhouette_label_iou(const ScanSample& scan) {
    std::size_t inter = 0, uni = 0;
    const auto& img = scan.front_image;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const bool sil = img.at(x, y, 0) > 0.0f || img.at(x, y, 1) > 0.0f || img.at(x, y, 2) > 0.0f;
            const bool lab = scan.label_mask.at(x, y) != 0;
            inter += sil && lab;
            uni += sil || lab;
        }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ScanSample make_scan(TriMesh mesh, ScanMeta meta, int resolution) {
    if (mesh.empty()) throw InputError("make_scan: empty mesh");
    if (!mesh.has_colors()) throw InputError("make_scan: mesh needs vertex colors");
    if (mesh.vertex_labels.empty()) throw InputError("make_scan: mesh needs vertex part labels");
    const Eigen::Vector3d lo = mesh.bbox_min(), hi = mesh.bbox_max();
    const double height = hi.y() - lo.y();
    if (!(height > 0.0)) throw InputError("make_scan: mesh has zero height");
    const double scale = kSubjectHeight / height;
    mesh = transform_mesh(mesh, scale * Eigen::Matrix3d::Identity(), -scale * 0.5 * (lo + hi));

    ScanSample scan;
    const CameraSpec cam = front_camera(resolution);
    scan.front_image = render_mesh_maps(mesh, cam).color;
    scan.label_mask = render_labels(mesh, cam);
    scan.mesh = std::move(mesh);
    meta.height_cm = kSubjectHeight * kCmPerUnit;
    scan.meta = std::move(meta);
    scan.validate();
    return scan;
}

ScanSample synth_scan(std::uint64_t seed, const SynthConfig& config) {
    config.validate();
    Rng rng(derive_seed(seed, 0x5CA9));
    const Palette palette = pick_palette(rng, config.palette_jitter);
    const std::vector<Primitive> prims = build_body(rng, config);

    Eigen::Vector3d lo = Eigen::Vector3d::Constant(1e9), hi = Eigen::Vector3d::Constant(-1e9);
    for (const auto& p : prims) p.extend(lo, hi);
    const double h = config.grid_spacing;
    lo -= Eigen::Vector3d::Constant(3 * h);
    hi += Eigen::Vector3d::Constant(3 * h);
    const Eigen::Vector3i n = ((hi - lo) / h).array().ceil().cast<int>() + 1;

    auto field = [&prims](const Eigen::Vector3d& p) {
        double d = 1e9;
        for (const auto& prim : prims) d = std::min(d, prim.sdf(p));
        return -d;
    };
    TriMesh mesh = extract_isosurface(sample_grid(field, n.x(), n.y(), n.z(), lo, h), 0.0);
    mesh = largest_component(mesh);
    if (mesh.empty()) throw ExtractionError("synth_scan: humanoid meshing produced no surface");

    const double foot_height = mesh.bbox_min().y() + 0.07;
    mesh.vertex_labels.resize(mesh.vertices.size());
    mesh.colors.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const auto& v = mesh.vertices[i];
        std::size_t best = 0;
        double best_d = prims[0].sdf(v);
        for (std::size_t k = 1; k < prims.size(); ++k) {
            const double d = prims[k].sdf(v);
            if (d < best_d) best_d = d, best = k;
        }
        mesh.vertex_labels[i] = prims[best].part;
        mesh.colors[i] = part_color(prims[best].part, palette, foot_height, v.y());
    }

    char id[32];
    std::snprintf(id, sizeof id, "synth_%016llx", static_cast<unsigned long long>(seed));
    return make_scan(std::move(mesh), ScanMeta{id, ScanSource::synthetic, 180.0, seed}, config.image_resolution);
}

} // namespace twinsplat

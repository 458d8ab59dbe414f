#include "twinsplat/evaluate.hpp"

#include "twinsplat/camera.hpp"
#include "twinsplat/dataset.hpp"
#include "twinsplat/errors.hpp"
#include "twinsplat/mesh_raster.hpp"
#include "twinsplat/metrics.hpp"
#include "twinsplat/spatial.hpp"

#include <cmath>
#include <cstdio>

namespace twinsplat {

EvalReport evaluate(const TriMesh& pred, const TriMesh& gt, const EvalConfig& config) {
    config.validate();
    if (pred.empty() || gt.empty()) throw InputError("evaluate: empty mesh");

    auto to_cm = [](std::vector<Eigen::Vector3d> pts) {
        for (auto& p : pts) p *= kCmPerUnit;
        return pts;
    };
    // One seed for both sides, so identical meshes give identical samples.
    const SurfaceSamples ps = sample_surface(pred, config.samples, config.seed);
    const SurfaceSamples gs = sample_surface(gt, config.samples, config.seed);
    const auto pred_cm = to_cm(ps.points);
    const auto gt_cm = to_cm(gs.points);

    EvalReport r;
    std::tie(r.geo.cd_p2s, r.geo.cd_s2p) = chamfer(pred_cm, gt_cm);
    r.geo.nc = normal_consistency(pred_cm, ps.normals, gt_cm, gs.normals);
    r.geo.fscore = f_score(pred_cm, gt_cm, config.fscore_tau_cm);

    const CameraSpec front = front_camera(config.render_resolution);
    const CameraSpec back = back_camera(config.render_resolution);
    const ImageScores f = image_metrics(render_mesh_maps(pred, front).color, render_mesh_maps(gt, front).color);
    const ImageScores b = image_metrics(render_mesh_maps(pred, back).color, render_mesh_maps(gt, back).color);
    r.tex = {f.psnr, b.psnr, f.ssim, b.ssim, f.perceptual, b.perceptual};
    return r;
}

std::string report_row(const std::string& case_name, const EvalReport& r) {
    if (case_name.find_first_of(",\n") != std::string::npos)
        throw InputError("report_row: case name must not contain commas or newlines");
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f,%.6f,%.6f,%.6f,%.6f", case_name.c_str(),
                  r.geo.cd_p2s, r.geo.cd_s2p, r.geo.nc, r.geo.fscore, r.tex.psnr_f, r.tex.psnr_b, r.tex.ssim_f,
                  r.tex.ssim_b, r.tex.perc_f, r.tex.perc_b);
    return buf;
}

TriMesh transfer_colors(const TriMesh& mesh, const GaussianSet& texture) {
    if (texture.empty()) throw InputError("transfer_colors: empty Gaussian set");
    std::vector<Eigen::Vector3d> centers;
    std::vector<Eigen::Matrix3d> precisions;
    double reach = 0.0;
    for (const auto& g : texture.gaussians) {
        centers.push_back(g.center.cast<double>());
        precisions.push_back(covariance(g).inverse());
        reach = std::max(reach, 3.0 * static_cast<double>(g.scale.maxCoeff()));
    }
    reach = std::min(reach, 0.05);
    const KdTree tree(centers);

    TriMesh out = mesh;
    out.colors.assign(mesh.vertices.size(), Eigen::Vector3f::Constant(0.5f));
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        const Eigen::Vector3d& p = mesh.vertices[v];
        Eigen::Vector3d acc = Eigen::Vector3d::Zero();
        double wsum = 0.0;
        for (int i : tree.within(p, reach)) {
            const Eigen::Vector3d d = p - centers[i];
            const double w = texture.gaussians[i].opacity * std::exp(-0.5 * d.dot(precisions[i] * d));
            acc += w * texture.gaussians[i].color.cast<double>();
            wsum += w;
        }
        if (wsum > 1e-8)
            out.colors[v] = (acc / wsum).cast<float>();
        else
            out.colors[v] = texture.gaussians[tree.nearest(p).index].color;
    }
    return out;
}

} // namespace twinsplat

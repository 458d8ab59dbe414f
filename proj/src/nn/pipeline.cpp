#include "twinsplat/pipeline.hpp"

#include "twinsplat/camera.hpp"
#include "twinsplat/coarse_mesh.hpp"
#include "twinsplat/errors.hpp"
#include "twinsplat/mesh_raster.hpp"
#include "twinsplat/metrics.hpp"
#include "twinsplat/remesher.hpp"
#include "twinsplat/splat_renderer.hpp"

#include <fstream>
#include <map>

namespace twinsplat {

Prediction predict(TwinsModel& model, const Image& image, const LabelMap& labels, const RemeshConfig& remesh_config,
                   bool refine) {
    remesh_config.validate();
    Prediction p;
    p.gaussians = reconstruct(model, image, labels);
    TriMesh mesh = init_coarse_mesh(p.gaussians.normal, remesh_config);
    if (refine) mesh = refine_mesh(mesh, p.gaussians.normal, remesh_config).mesh;
    p.mesh = transfer_colors(mesh, p.gaussians.texture);
    return p;
}

SplatFidelity splat_fidelity(const GaussianSet& texture, const ScanSample& scan) {
    const int res = scan.front_image.width;
    const Eigen::Vector3d black = Eigen::Vector3d::Zero();
    auto side = [&](const CameraSpec& cam) {
        return psnr(color_image(render(texture, cam, black)), render_mesh_maps(scan.mesh, cam).color);
    };
    return {side(front_camera(res)), side(back_camera(res))};
}

std::vector<AblationVariant> ablation_variants() {
    return {
        {"no_shape_module", false, true, true},
        {"no_twins_fusion", true, false, true},
        {"no_remeshing", true, true, false},
        {"full", true, true, true},
    };
}

std::vector<AblationRow> run_ablation(const DatasetManifest& manifest, const PipelineConfig& config,
                                      const std::filesystem::path& out_dir, const AblationProgress& progress) {
    config.validate();
    const auto entries = manifest.accepted();
    if (entries.empty()) throw InputError("ablate: manifest has no accepted entries");
    std::vector<ScanSample> samples;
    std::vector<TrainingScan> scans;
    for (const auto& e : entries) {
        samples.push_back(load_scan(manifest, e));
        scans.push_back(prepare_training_scan(samples.back(), config));
    }
    std::filesystem::create_directories(out_dir);

    // Variants differing only in post-processing share one trained model.
    std::map<std::pair<bool, bool>, TwinsModel> models;
    std::vector<AblationRow> rows;
    for (const AblationVariant& v : ablation_variants()) {
        const std::pair<bool, bool> key{v.shape_module, v.fusion};
        auto it = models.find(key);
        if (it == models.end()) {
            PipelineConfig c = config;
            c.model.shape_module = v.shape_module;
            c.model.fusion = v.fusion;
            TrainHooks hooks;
            if (progress) hooks.on_step = [&](const StepLog& s) { progress(v.name, s); };
            TwinsModel m = train_model(scans, c, hooks).model;
            const std::string tag = v.shape_module && v.fusion ? "full" : v.name;
            save_checkpoint(m, out_dir / ("checkpoint_" + tag + ".bin"));
            it = models.emplace(key, m).first;
        }
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const Prediction p =
                predict(it->second, samples[i].front_image, samples[i].label_mask, config.remesh, v.refine);
            rows.push_back({v.name, samples[i].meta.id, evaluate(p.mesh, samples[i].mesh, config.eval)});
        }
    }

    std::ofstream csv(out_dir / "ablation.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (out_dir / "ablation.csv").string());
    csv << kReportHeader << '\n';
    for (const auto& r : rows) csv << report_row(r.variant + "/" + r.scan_id, r.report) << '\n';
    return rows;
}

} // namespace twinsplat

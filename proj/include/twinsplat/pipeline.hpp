#pragma once

#include "twinsplat/config.hpp"
#include "twinsplat/dataset.hpp"
#include "twinsplat/evaluate.hpp"
#include "twinsplat/training.hpp"
#include "twinsplat/twins.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace twinsplat {

/// Everything predicted for one input image.
struct Prediction {
    Reconstruction gaussians;
    TriMesh mesh;  // colored from the texture Gaussians
};

/// Reconstructs both Gaussian sets, extracts the coarse mesh from G_n, optionally refines it, then
/// transfers colors from G_c.
[[nodiscard]] Prediction predict(TwinsModel& model, const Image& image, const LabelMap& labels,
                                 const RemeshConfig& remesh_config, bool refine = true);

/// Front and back PSNR of the texture Gaussians against the ground-truth color renders.
struct SplatFidelity {
    double psnr_front = 0.0;
    double psnr_back = 0.0;
};
[[nodiscard]] SplatFidelity splat_fidelity(const GaussianSet& texture, const ScanSample& scan);

struct AblationVariant {
    std::string name;
    bool shape_module = true;
    bool fusion = true;
    bool refine = true;
};

/// w/o shape module, w/o twins fusion, w/o remeshing, full.
[[nodiscard]] std::vector<AblationVariant> ablation_variants();

struct AblationRow {
    std::string variant;
    std::string scan_id;
    EvalReport report;
};

using AblationProgress = std::function<void(const std::string& variant, const StepLog&)>;

/// Trains each distinct model configuration once on the accepted scans, predicts every accepted scan with
/// every variant, and writes out_dir/ablation.csv (case = variant/scan id) plus one checkpoint per model.
[[nodiscard]] std::vector<AblationRow> run_ablation(const DatasetManifest& manifest, const PipelineConfig& config,
                                                    const std::filesystem::path& out_dir,
                                                    const AblationProgress& progress = {});

} // namespace twinsplat

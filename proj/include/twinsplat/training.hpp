#pragma once

#include "twinsplat/camera.hpp"
#include "twinsplat/config.hpp"
#include "twinsplat/dataset.hpp"
#include "twinsplat/splat_renderer.hpp"
#include "twinsplat/twins.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace twinsplat {

struct LossWeights {
    double w_mse = 1.0;
    double w_mask = 1.0;
    double w_perc = 0.5;

    void validate() const;
};

struct SupervisionView {
    CameraSpec cam;
    Image color;   // H x W x 3, black background
    Image mask;    // H x W x 1
    Image normal;  // H x W x 3, world normals encoded (n + 1) / 2, 0.5 background
};
using SupervisionBatch = std::vector<SupervisionView>;

[[nodiscard]] SupervisionBatch render_supervision(const ScanSample& scan, std::span<const CameraSpec> cams);

/// Background used when rendering normal Gaussians and normal targets.
inline const Eigen::Vector3d kNormalBackground{0.5, 0.5, 0.5};

struct SplatImages {
    torch::Tensor color;  // H x W x 3
    torch::Tensor alpha;  // H x W
};

/// Differentiable splatting of activated N x 14 parameters (file order); computed in double, returned in the
/// input dtype.
[[nodiscard]] SplatImages splat_render(const torch::Tensor& params, const CameraSpec& cam,
                                       const Eigen::Vector3d& background, const RenderOptions& opts = {});

/// Torch twin of PerceptualProxy::distance on H x W x 3 images, same weights.
[[nodiscard]] torch::Tensor perceptual_distance(const torch::Tensor& a, const torch::Tensor& b);

struct LossTerms {
    torch::Tensor total, mse, mask, perc;  // scalars
};

/// w_mse * mean((color - gt)^2) + w_mask * mean((alpha - mask)^2) + w_perc * perceptual(color, gt).
[[nodiscard]] LossTerms loss_2d(const torch::Tensor& color, const torch::Tensor& alpha, const torch::Tensor& gt_color,
                                const torch::Tensor& gt_mask, const LossWeights& w);

struct LossValues {
    double total = 0, mse = 0, mask = 0, perc = 0;
};
[[nodiscard]] LossValues loss_2d(const RenderOutput& pred, const Image& gt_color, const Image& gt_mask,
                                 const LossWeights& w);

/// Double tensor views of images: H x W x C, or H x W for single-channel images.
[[nodiscard]] torch::Tensor image_tensor_hwc(const Image& img);

struct StepLog {
    int step = 0;
    double total = 0, mse = 0, mask = 0, perc = 0, normal_total = 0;
};
inline constexpr const char* kMetricsHeader = "step,total,mse,mask,perc,normal_total";
[[nodiscard]] std::string format_log_line(const StepLog& s);

/// One training scan with everything a step needs, prepared once.
struct TrainingScan {
    std::string id;
    Image image;
    LabelMap labels;
    SupervisionBatch views;
    std::vector<torch::Tensor> color, mask, normal;  // per view, double tensors
};

[[nodiscard]] TrainingScan prepare_training_scan(const ScanSample& scan, const PipelineConfig& config);

struct TrainHooks {
    std::function<void(const StepLog&)> on_step;
    std::function<void(int step, TwinsModel&)> on_checkpoint;  // every checkpoint_every steps and at the end
};

struct TrainResult {
    TwinsModel model{nullptr};
    std::vector<StepLog> log;
};

/// Loss of one reconstruction against the given views (texture and normal branch, averaged over views).
struct StepLoss {
    torch::Tensor total;
    StepLog parts;
};
[[nodiscard]] StepLoss supervision_loss(TwinsModel& model, const TrainingScan& scan, std::span<const int> views,
                                        const LossWeights& w);

/// Seeded training from a fresh model (or `init` when given).
[[nodiscard]] TrainResult train_model(const std::vector<TrainingScan>& scans, const PipelineConfig& config,
                                      const TrainHooks& hooks = {}, TwinsModel init = nullptr);

/// Trains on the accepted entries of a manifest, writing metrics.csv and checkpoint.bin into out_dir.
TrainResult train(const DatasetManifest& manifest, const PipelineConfig& config, const std::filesystem::path& out_dir,
                  const std::function<void(const StepLog&)>& progress = {});

} // namespace twinsplat

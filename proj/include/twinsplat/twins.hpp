#pragma once

#include "twinsplat/anatomy.hpp"
#include "twinsplat/config.hpp"
#include "twinsplat/gaussian.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <utility>
#include <vector>

namespace twinsplat {

/// conv3x3 - GroupNorm - SiLU twice, with a residual path (1x1 conv when widths differ).
struct ConvBlockImpl : torch::nn::Module {
    ConvBlockImpl(int in, int out);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
    torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(ConvBlock);

/// Residual cross-attention from a feature map into the shape tokens.
struct FeatureAttentionImpl : torch::nn::Module {
    FeatureAttentionImpl(int channels, int token_dim, int heads);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& tokens);

    torch::nn::LayerNorm norm{nullptr};
    torch::nn::MultiheadAttention attn{nullptr};
};
TORCH_MODULE(FeatureAttention);

/// One U-Net of the pair. The up path is exposed stage by stage so the caller can fuse between stages.
struct TwinNetImpl : torch::nn::Module {
    explicit TwinNetImpl(const ModelConfig& config);

    struct Down {
        std::vector<torch::Tensor> skips;  // 5 maps, full resolution first
        torch::Tensor middle;              // Middle-Block output at H/32
    };

    /// x: 1 x (w0 + d) x H x W; tokens: n_q x d.
    Down down(const torch::Tensor& x, const torch::Tensor& tokens);
    /// Up-Block `stage` (1..5): upsample `input`, concatenate the matching skip, convolve.
    torch::Tensor up(int stage, const torch::Tensor& input, const Down& d);
    /// 1x1 output head, 14 channels per pixel.
    torch::Tensor head(const torch::Tensor& x);

    torch::nn::ModuleList down_blocks{nullptr}, downsamplers{nullptr}, up_blocks{nullptr};
    ConvBlock middle_block{nullptr};
    FeatureAttention low_attention{nullptr}, middle_attention{nullptr};
    torch::nn::Conv2d out_head{nullptr};
};
TORCH_MODULE(TwinNet);

struct TwinsActivations {
    torch::Tensor F_c;                    // 1 x w0 x H x W
    torch::Tensor F_g;                    // n_q x d
    torch::Tensor F_c0, F_n0, F_f0;       // Middle-Block outputs and their sum
    std::vector<torch::Tensor> F_c_up;    // F_c1..F_c5
    std::vector<torch::Tensor> F_n_up;    // F_n1..F_n5
    std::vector<torch::Tensor> ub_in_c;   // inputs of Up-Blocks 1..5 and the head of R_c (6 entries)
    std::vector<torch::Tensor> ub_in_n;
    torch::Tensor raw_c, raw_n;           // H x W x 14, including the output prior
};

struct TwinsForwardOptions {
    bool zero_n0 = false;  // replace F_n0 by zeros before fusion
};

/// Image encoder, shape module and the two U-Nets (parameters "unet_c.*" and "unet_n.*").
struct TwinsModelImpl : torch::nn::Module {
    explicit TwinsModelImpl(const ModelConfig& config);

    /// image: 1 x 3 x H x W in [0,1] -> 1 x w0 x H x W.
    torch::Tensor encode_image(const torch::Tensor& image);
    /// F_g for the given crops; zeros when the shape module is disabled.
    torch::Tensor shape_features(const std::vector<PartCropTensor>& crops);
    TwinsActivations twins_forward(const torch::Tensor& F_c, const torch::Tensor& F_g,
                                   const TwinsForwardOptions& opts = {});
    /// Full forward from an image and its part labels.
    TwinsActivations forward(const Image& image, const LabelMap& labels);

    ModelConfig config;
    ConvBlock encoder{nullptr};
    ShapeModule shape{nullptr};
    TwinNet unet_c{nullptr}, unet_n{nullptr};
    torch::Tensor prior;  // buffer, 1 x 14 x H x W
};
TORCH_MODULE(TwinsModel);

/// Fixed bias added to both raw maps: each pixel's Gaussian starts at the pixel's world position on the
/// z = 0 plane of the front camera, with a scale of half a pixel footprint and identity rotation.
[[nodiscard]] torch::Tensor output_prior(int resolution);

/// Differentiable torch version of activate_raw_params on N x 14 rows.
[[nodiscard]] torch::Tensor activate_raw_tensor(const torch::Tensor& raw);

/// Per-pixel activation of an H x W x 14 map into H*W Gaussians in raster order.
[[nodiscard]] GaussianSet decode_gaussians(const torch::Tensor& raw, GaussianKind kind);

struct Reconstruction {
    GaussianSet texture;
    GaussianSet normal;
};

/// Single no-grad forward pass producing G_c and G_n.
[[nodiscard]] Reconstruction reconstruct(TwinsModel& model, const Image& image, const LabelMap& labels);

// Checkpoint: "UCKP", u32 version, u32 length + config text, u32 count, then per array:
// u32 length + name, u32 rank, rank x i64 dims, float32 data. Little endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(TwinsModel& model, const std::filesystem::path& path);
[[nodiscard]] TwinsModel load_checkpoint(const std::filesystem::path& path);
/// Config stored in a checkpoint (only the model section is meaningful).
[[nodiscard]] PipelineConfig checkpoint_config(const std::filesystem::path& path);

} // namespace twinsplat

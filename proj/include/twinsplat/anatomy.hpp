#pragma once

#include "twinsplat/config.hpp"
#include "twinsplat/part_crops.hpp"

#include <torch/torch.h>

#include <utility>
#include <vector>

namespace twinsplat {

/// Image (H x W x C) as a 1 x C x H x W float32 tensor.
[[nodiscard]] torch::Tensor image_to_tensor(const Image& img);
/// Inverse of image_to_tensor; accepts 1 x C x H x W or C x H x W.
[[nodiscard]] Image tensor_to_image(const torch::Tensor& t);

/// Pre-norm self-attention over the queries, cross-attention into the body tokens, then an MLP; all residual.
struct InteractionBlockImpl : torch::nn::Module {
    InteractionBlockImpl(int dim, int heads);

    /// query: n_q x d, body: n_kv x d (n_kv >= 1) -> n_q x d.
    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& body);

    int dim;
    torch::nn::LayerNorm norm_self{nullptr}, norm_cross{nullptr}, norm_body{nullptr}, norm_mlp{nullptr};
    torch::nn::MultiheadAttention self_attn{nullptr}, cross_attn{nullptr};
    torch::nn::Sequential mlp{nullptr};
};
TORCH_MODULE(InteractionBlock);

/// One crop as a tensor: part id (1..8) and a 1 x 3 x S x S image in [0,1].
using PartCropTensor = std::pair<int, torch::Tensor>;

[[nodiscard]] std::vector<PartCropTensor> crop_tensors(const PartCropSet& crops);

/// Produces the shape features F_g (n_q x d) from per-part crops.
struct ShapeModuleImpl : torch::nn::Module {
    explicit ShapeModuleImpl(const ModelConfig& config);

    /// Patch tokens (n_p x d) of one crop; `part_id` selects the identity embedding.
    torch::Tensor patchify(const torch::Tensor& crop, int part_id);

    /// Body tokens concatenated in the order given; each absent part adds one null token after them.
    torch::Tensor body_tokens(const std::vector<PartCropTensor>& crops);

    /// Initial queries: pooled head tokens, or the null token when no head crop is given.
    torch::Tensor initial_query(const std::vector<PartCropTensor>& crops);

    /// F_g for crops given in any order.
    torch::Tensor forward(const std::vector<PartCropTensor>& crops);

    ModelConfig config;
    int grid;  // patches per crop side
    torch::nn::Conv2d patch_proj{nullptr};
    torch::Tensor pos_embed, part_embed, null_token, query_embed;
    torch::nn::ModuleList blocks{nullptr};
    torch::nn::Sequential out_mlp{nullptr};
};
TORCH_MODULE(ShapeModule);

/// crop_parts followed by the shape module.
[[nodiscard]] torch::Tensor extract_shape_features(const Image& image, const LabelMap& labels, ShapeModule& module);

} // namespace twinsplat

#include "twinsplat/anatomy.hpp"

#include "twinsplat/errors.hpp"

#include <array>
#include <cmath>
#include <string>

namespace twinsplat {

torch::Tensor image_to_tensor(const Image& img) {
    torch::Tensor t = torch::empty({img.height, img.width, img.channels}, torch::kFloat32);
    std::copy(img.data.begin(), img.data.end(), t.data_ptr<float>());
    return t.permute({2, 0, 1}).unsqueeze(0).contiguous();
}

Image tensor_to_image(const torch::Tensor& t) {
    torch::Tensor x = t.dim() == 4 ? t.squeeze(0) : t;
    if (x.dim() != 3) throw InputError("tensor_to_image: expected C x H x W");
    x = x.detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
    Image img(static_cast<int>(x.size(1)), static_cast<int>(x.size(0)), static_cast<int>(x.size(2)));
    std::copy(x.data_ptr<float>(), x.data_ptr<float>() + x.numel(), img.data.begin());
    return img;
}

InteractionBlockImpl::InteractionBlockImpl(int dim_, int heads) : dim(dim_) {
    norm_self = register_module("norm_self", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm_cross = register_module("norm_cross", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm_body = register_module("norm_body", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm_mlp = register_module("norm_mlp", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    self_attn = register_module("self_attn", torch::nn::MultiheadAttention(dim, heads));
    cross_attn = register_module("cross_attn", torch::nn::MultiheadAttention(dim, heads));
    mlp = register_module("mlp", torch::nn::Sequential(torch::nn::Linear(dim, 4 * dim), torch::nn::GELU(),
                                                       torch::nn::Linear(4 * dim, dim)));
}

torch::Tensor InteractionBlockImpl::forward(const torch::Tensor& query, const torch::Tensor& body) {
    if (query.dim() != 2 || body.dim() != 2 || query.size(1) != dim || body.size(1) != dim)
        throw InputError("interaction_block: expected n x " + std::to_string(dim) + " query and body tokens");
    if (body.size(0) < 1) throw InputError("interaction_block: no body tokens");
    // MultiheadAttention works on (length, batch, width).
    torch::Tensor q = query.unsqueeze(1);
    const torch::Tensor kv = norm_body(body).unsqueeze(1);
    torch::Tensor h = norm_self(q);
    q = q + std::get<0>(self_attn(h, h, h));
    q = q + std::get<0>(cross_attn(norm_cross(q), kv, kv));
    q = q + mlp->forward(norm_mlp(q));
    return q.squeeze(1);
}

std::vector<PartCropTensor> crop_tensors(const PartCropSet& crops) {
    std::vector<PartCropTensor> out;
    for (const auto& [id, img] : crops.crops) out.emplace_back(id, image_to_tensor(img));
    return out;
}

ShapeModuleImpl::ShapeModuleImpl(const ModelConfig& cfg) : config(cfg) {
    config.validate();
    const int d = config.shape_dim;
    grid = config.crop_size / config.patch_size;
    patch_proj = register_module(
        "patch_proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, d, config.patch_size).stride(config.patch_size)));
    pos_embed = register_parameter("pos_embed", torch::randn({grid * grid, d}) * 0.02);
    part_embed = register_parameter("part_embed", torch::randn({8, d}) * 0.02);
    null_token = register_parameter("null_token", torch::randn({d}) * 0.02);
    query_embed = register_parameter("query_embed", torch::randn({config.num_queries, d}) * 0.02);
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (int i = 0; i < config.interaction_blocks; ++i) blocks->push_back(InteractionBlock(d, config.attention_heads));
    out_mlp = register_module("out_mlp", torch::nn::Sequential(torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})),
                                                               torch::nn::Linear(d, d), torch::nn::GELU(),
                                                               torch::nn::Linear(d, d)));
}

torch::Tensor ShapeModuleImpl::patchify(const torch::Tensor& crop, int part_id) {
    if (part_id < 1 || part_id > 8) throw InputError("patchify: part id " + std::to_string(part_id) + " outside 1..8");
    torch::Tensor x = crop.dim() == 3 ? crop.unsqueeze(0) : crop;
    if (x.dim() != 4 || x.size(0) != 1 || x.size(1) != 3 || x.size(2) != x.size(3))
        throw InputError("patchify: expected a square 3-channel crop");
    const auto side = x.size(2);
    if (side % config.patch_size != 0)
        throw ConfigError("patchify: crop side " + std::to_string(side) + " is not divisible by patch size " +
                          std::to_string(config.patch_size));
    if (side / config.patch_size != grid)
        throw ConfigError("patchify: crop side " + std::to_string(side) + " does not match crop_size " +
                          std::to_string(config.crop_size));
    torch::Tensor tokens = patch_proj(x * 2.0 - 1.0).flatten(2).squeeze(0).transpose(0, 1);
    return tokens + pos_embed + part_embed[part_id - 1];
}

torch::Tensor ShapeModuleImpl::body_tokens(const std::vector<PartCropTensor>& crops) {
    std::array<bool, 8> present{};
    std::vector<torch::Tensor> parts;
    for (const auto& [id, crop] : crops) {
        if (id < 1 || id > 8 || present[id - 1]) throw InputError("shape module: invalid or repeated part id");
        present[id - 1] = true;
        parts.push_back(patchify(crop, id));
    }
    for (int p = 0; p < 8; ++p)
        if (!present[p]) parts.push_back((null_token + part_embed[p]).unsqueeze(0));
    return torch::cat(parts, 0);
}

torch::Tensor ShapeModuleImpl::initial_query(const std::vector<PartCropTensor>& crops) {
    const int q = static_cast<int>(std::lround(std::sqrt(static_cast<double>(config.num_queries))));
    for (const auto& [id, crop] : crops) {
        if (id != 1) continue;
        const torch::Tensor head = patchify(crop, id).transpose(0, 1).reshape({1, config.shape_dim, grid, grid});
        const torch::Tensor pooled = torch::adaptive_avg_pool2d(head, {q, q}).flatten(2).squeeze(0).transpose(0, 1);
        return pooled + query_embed;
    }
    return null_token.unsqueeze(0).expand({config.num_queries, config.shape_dim}) + query_embed;
}

torch::Tensor ShapeModuleImpl::forward(const std::vector<PartCropTensor>& crops) {
    const torch::Tensor body = body_tokens(crops);
    torch::Tensor q = initial_query(crops);
    for (const auto& block : *blocks) q = block->as<InteractionBlock>()->forward(q, body);
    return out_mlp->forward(q);
}

torch::Tensor extract_shape_features(const Image& image, const LabelMap& labels, ShapeModule& module) {
    return module->forward(crop_tensors(crop_parts(image, labels, module->config.crop_size)));
}

} // namespace twinsplat

#include "twinsplat/twins.hpp"

#include "../binary_io.hpp"
#include "twinsplat/errors.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

namespace twinsplat {

namespace {

int group_count(int channels) { return std::gcd(channels, 8); }

int attention_heads(int channels, int requested) { return channels % requested == 0 ? requested : 1; }

void check_finite(const torch::Tensor& t, const std::string& stage) {
    if (!torch::isfinite(t).all().item<bool>()) throw NumericError("twins_forward: non-finite activations at " + stage);
}

torch::Tensor to_raw_map(const torch::Tensor& x) { return x.squeeze(0).permute({1, 2, 0}); }

} // namespace

ConvBlockImpl::ConvBlockImpl(int in, int out) {
    conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
    norm1 = register_module("norm1", torch::nn::GroupNorm(group_count(out), out));
    conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1)));
    norm2 = register_module("norm2", torch::nn::GroupNorm(group_count(out), out));
    if (in != out) skip = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
    torch::Tensor h = torch::silu(norm1(conv1(x)));
    h = torch::silu(norm2(conv2(h)));
    return h + (skip ? skip(x) : x);
}

FeatureAttentionImpl::FeatureAttentionImpl(int channels, int token_dim, int heads) {
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
    attn = register_module("attn", torch::nn::MultiheadAttention(
                                       torch::nn::MultiheadAttentionOptions(channels, attention_heads(channels, heads))
                                           .kdim(token_dim)
                                           .vdim(token_dim)));
}

torch::Tensor FeatureAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& tokens) {
    const auto c = x.size(1), h = x.size(2), w = x.size(3);
    const torch::Tensor seq = x.flatten(2).permute({2, 0, 1});  // hw x 1 x c
    const torch::Tensor kv = tokens.unsqueeze(1);
    const torch::Tensor out = std::get<0>(attn(norm(seq), kv, kv));
    return x + out.permute({1, 2, 0}).reshape({1, c, h, w});
}

TwinNetImpl::TwinNetImpl(const ModelConfig& cfg) {
    const auto& w = cfg.widths;
    down_blocks = register_module("down", torch::nn::ModuleList());
    downsamplers = register_module("downsample", torch::nn::ModuleList());
    up_blocks = register_module("up", torch::nn::ModuleList());
    for (int s = 0; s < 5; ++s) {
        const int in = s == 0 ? w[0] + cfg.shape_dim : w[s - 1];
        down_blocks->push_back(ConvBlock(in, w[s]));
        downsamplers->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(w[s], w[s], 3).stride(2).padding(1)));
    }
    middle_block = register_module("middle", ConvBlock(w[4], w[4]));
    low_attention = register_module("low_attention", FeatureAttention(w[4], cfg.shape_dim, cfg.attention_heads));
    middle_attention = register_module("middle_attention", FeatureAttention(w[4], cfg.shape_dim, cfg.attention_heads));
    for (int k = 1; k <= 5; ++k) {
        const int prev = k == 1 ? w[4] : w[6 - k];
        up_blocks->push_back(ConvBlock(prev + w[5 - k], w[5 - k]));
    }
    out_head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(w[0], kGaussianParams, 1)));
    // Small head so the output prior dominates at initialization.
    torch::NoGradGuard guard;
    out_head->weight.mul_(0.1);
    out_head->bias.zero_();
}

TwinNetImpl::Down TwinNetImpl::down(const torch::Tensor& x, const torch::Tensor& tokens) {
    Down d;
    torch::Tensor h = x;
    for (int s = 0; s < 5; ++s) {
        h = down_blocks[s]->as<ConvBlock>()->forward(h);
        if (s == 4) h = low_attention(h, tokens);
        d.skips.push_back(h);
        h = downsamplers[s]->as<torch::nn::Conv2d>()->forward(h);
    }
    d.middle = middle_attention(middle_block(h), tokens);
    return d;
}

torch::Tensor TwinNetImpl::up(int stage, const torch::Tensor& input, const Down& d) {
    const torch::Tensor upsampled = torch::nn::functional::interpolate(
        input, torch::nn::functional::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
    const torch::Tensor cat = torch::cat({upsampled, d.skips[5 - stage]}, 1);
    return up_blocks[stage - 1]->as<ConvBlock>()->forward(cat);
}

torch::Tensor TwinNetImpl::head(const torch::Tensor& x) { return out_head(x); }

torch::Tensor output_prior(int resolution) {
    torch::Tensor prior = torch::zeros({1, kGaussianParams, resolution, resolution});
    const double footprint = 2.0 / resolution;
    const double scale = 0.5 * footprint - static_cast<double>(kMinScale);
    const double inv_softplus = std::log(std::expm1(scale));
    auto acc = prior.accessor<float, 4>();
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j) {
            const double x = -1.0 + (j + 0.5) * footprint, y = 1.0 - (i + 0.5) * footprint;
            acc[0][0][i][j] = static_cast<float>(std::atanh(std::clamp(x / kCenterBound, -0.99, 0.99)));
            acc[0][1][i][j] = static_cast<float>(std::atanh(std::clamp(y / kCenterBound, -0.99, 0.99)));
            for (int c = 3; c < 6; ++c) acc[0][c][i][j] = static_cast<float>(inv_softplus);
            acc[0][6][i][j] = 1.0f;
        }
    return prior;
}

TwinsModelImpl::TwinsModelImpl(const ModelConfig& cfg) : config(cfg) {
    config.validate();
    encoder = register_module("encoder", ConvBlock(3, config.widths[0]));
    if (config.shape_module) shape = register_module("shape", ShapeModule(config));
    unet_c = register_module("unet_c", TwinNet(config));
    unet_n = register_module("unet_n", TwinNet(config));
    prior = register_buffer("prior", output_prior(config.resolution));
}

torch::Tensor TwinsModelImpl::encode_image(const torch::Tensor& image) {
    if (image.dim() != 4 || image.size(0) != 1 || image.size(1) != 3 || image.size(2) != config.resolution ||
        image.size(3) != config.resolution)
        throw ConfigError("encode_image: expected a 1 x 3 x " + std::to_string(config.resolution) + " x " +
                          std::to_string(config.resolution) + " image");
    return encoder(image * 2.0 - 1.0);
}

torch::Tensor TwinsModelImpl::shape_features(const std::vector<PartCropTensor>& crops) {
    if (!shape) return torch::zeros({config.num_queries, config.shape_dim});
    return shape(crops);
}

TwinsActivations TwinsModelImpl::twins_forward(const torch::Tensor& F_c, const torch::Tensor& F_g,
                                               const TwinsForwardOptions& opts) {
    const int res = config.resolution;
    if (F_c.dim() != 4 || F_c.size(1) != config.widths[0] || F_c.size(2) != res || F_c.size(3) != res)
        throw InputError("twins_forward: color features do not match the configuration");
    if (F_g.dim() != 2 || F_g.size(0) != config.num_queries || F_g.size(1) != config.shape_dim)
        throw InputError("twins_forward: shape features do not match the configuration");

    TwinsActivations a;
    a.F_c = F_c;
    a.F_g = F_g;
    const torch::Tensor pooled = F_g.mean(0).view({1, config.shape_dim, 1, 1}).expand({1, config.shape_dim, res, res});
    const torch::Tensor input = torch::cat({F_c, pooled}, 1);

    const TwinNetImpl::Down dc = unet_c->down(input, F_g);
    const TwinNetImpl::Down dn = unet_n->down(input, F_g);
    a.F_c0 = dc.middle;
    a.F_n0 = opts.zero_n0 ? torch::zeros_like(dn.middle) : dn.middle;
    check_finite(a.F_c0, "middle block (texture)");
    check_finite(a.F_n0, "middle block (normal)");

    torch::Tensor in_c = a.F_c0, in_n = a.F_n0;
    if (config.fusion) {
        a.F_f0 = a.F_c0 + a.F_n0;
        in_c = in_n = a.F_f0;
    }
    for (int stage = 1; stage <= 5; ++stage) {
        a.ub_in_c.push_back(in_c);
        a.ub_in_n.push_back(in_n);
        const torch::Tensor oc = unet_c->up(stage, in_c, dc);
        const torch::Tensor on = unet_n->up(stage, in_n, dn);
        check_finite(oc, "up block " + std::to_string(stage) + " (texture)");
        check_finite(on, "up block " + std::to_string(stage) + " (normal)");
        a.F_c_up.push_back(oc);
        a.F_n_up.push_back(on);
        if (config.fusion) {
            in_c = in_n = oc + on;
        } else {
            in_c = oc;
            in_n = on;
        }
    }
    a.ub_in_c.push_back(in_c);
    a.ub_in_n.push_back(in_n);
    a.raw_c = to_raw_map(unet_c->head(in_c) + prior);
    a.raw_n = to_raw_map(unet_n->head(in_n) + prior);
    check_finite(a.raw_c, "output head (texture)");
    check_finite(a.raw_n, "output head (normal)");
    return a;
}

TwinsActivations TwinsModelImpl::forward(const Image& image, const LabelMap& labels) {
    if (image.width != config.resolution || image.height != config.resolution)
        throw ConfigError("reconstruct: image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                          ", model expects " + std::to_string(config.resolution));
    std::vector<PartCropTensor> crops;
    if (config.shape_module) crops = crop_tensors(crop_parts(image, labels, config.crop_size));
    else if (image.width != labels.width || image.height != labels.height)
        throw InputError("reconstruct: image and mask sizes differ");
    return twins_forward(encode_image(image_to_tensor(image)), shape_features(crops));
}

torch::Tensor activate_raw_tensor(const torch::Tensor& raw) {
    using torch::indexing::Slice;
    const torch::Tensor center = kCenterBound * torch::tanh(raw.index({Slice(), Slice(0, 3)}));
    const torch::Tensor scale = kMinScale + torch::nn::functional::softplus(raw.index({Slice(), Slice(3, 6)}));
    const torch::Tensor q = raw.index({Slice(), Slice(6, 10)});
    const torch::Tensor norm = q.norm(2, 1, true);
    const torch::Tensor identity = torch::zeros_like(q).index_fill(1, torch::tensor({0}), 1.0);
    const torch::Tensor small = norm < 1e-8;
    const torch::Tensor rot = torch::where(small, identity, q / torch::where(small, torch::ones_like(norm), norm));
    const torch::Tensor rest = torch::sigmoid(raw.index({Slice(), Slice(10, 14)}));
    return torch::cat({center, scale, rot, rest}, 1);
}

GaussianSet decode_gaussians(const torch::Tensor& raw, GaussianKind kind) {
    if (raw.dim() != 3 || raw.size(2) != kGaussianParams) throw InputError("decode_gaussians: expected H x W x 14");
    const torch::Tensor flat = raw.detach().to(torch::kFloat64).reshape({-1, kGaussianParams}).contiguous();
    const double* p = flat.data_ptr<double>();
    GaussianSet set;
    set.kind = kind;
    set.gaussians.reserve(static_cast<std::size_t>(flat.size(0)));
    for (std::int64_t i = 0; i < flat.size(0); ++i)
        set.gaussians.push_back(activate_raw_params(std::span<const double>(p + i * kGaussianParams, kGaussianParams)));
    return set;
}

Reconstruction reconstruct(TwinsModel& model, const Image& image, const LabelMap& labels) {
    torch::NoGradGuard guard;
    const TwinsActivations a = model->forward(image, labels);
    return {decode_gaussians(a.raw_c, GaussianKind::texture), decode_gaussians(a.raw_n, GaussianKind::normal)};
}

namespace {

constexpr char kCheckpointMagic[4] = {'U', 'C', 'K', 'P'};

void write_string(std::ostream& out, const std::string& s) {
    detail::write_le(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::filesystem::path& path) {
    std::uint32_t n = 0;
    if (!detail::read_le(in, n) || n > (1u << 26)) throw FormatError("checkpoint " + path.string() + ": bad string");
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) throw FormatError("checkpoint " + path.string() + ": truncated");
    return s;
}

std::ifstream open_checkpoint(const std::filesystem::path& path, PipelineConfig& config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[4];
    std::uint32_t version = 0;
    if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw FormatError("checkpoint " + path.string() + ": bad magic");
    if (!detail::read_le(in, version) || version != kCheckpointVersion)
        throw FormatError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
    try {
        config = parse_config(read_string(in, path));
    } catch (const ConfigError& e) {
        throw FormatError("checkpoint " + path.string() + ": " + e.what());
    }
    return in;
}

} // namespace

void save_checkpoint(TwinsModel& model, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 4);
    detail::write_le(out, kCheckpointVersion);
    PipelineConfig cfg;
    cfg.model = model->config;
    write_string(out, format_config(cfg));
    const auto params = model->named_parameters(true);
    detail::write_le(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& item : params) {
        write_string(out, item.key());
        const torch::Tensor t = item.value().detach().to(torch::kFloat32).contiguous();
        detail::write_le(out, static_cast<std::uint32_t>(t.dim()));
        for (auto s : t.sizes()) detail::write_le(out, static_cast<std::int64_t>(s));
        out.write(reinterpret_cast<const char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * 4));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

PipelineConfig checkpoint_config(const std::filesystem::path& path) {
    PipelineConfig cfg;
    (void)open_checkpoint(path, cfg);
    return cfg;
}

TwinsModel load_checkpoint(const std::filesystem::path& path) {
    PipelineConfig cfg;
    std::ifstream in = open_checkpoint(path, cfg);
    TwinsModel model(cfg.model);
    auto params = model->named_parameters(true);
    std::uint32_t count = 0;
    if (!detail::read_le(in, count) || count != params.size())
        throw FormatError("checkpoint " + path.string() + ": parameter count does not match the model");
    torch::NoGradGuard guard;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = read_string(in, path);
        torch::Tensor* target = params.find(name);
        if (!target) throw FormatError("checkpoint " + path.string() + ": unknown parameter " + name);
        std::uint32_t rank = 0;
        if (!detail::read_le(in, rank) || rank > 8) throw FormatError("checkpoint " + path.string() + ": bad rank");
        std::vector<std::int64_t> dims(rank);
        for (auto& d : dims)
            if (!detail::read_le(in, d)) throw FormatError("checkpoint " + path.string() + ": truncated");
        if (target->sizes() != torch::IntArrayRef(dims))
            throw FormatError("checkpoint " + path.string() + ": shape mismatch for " + name);
        torch::Tensor data = torch::empty(dims, torch::kFloat32);
        if (!in.read(reinterpret_cast<char*>(data.data_ptr<float>()), static_cast<std::streamsize>(data.numel() * 4)))
            throw FormatError("checkpoint " + path.string() + ": truncated data for " + name);
        target->copy_(data);
    }
    return model;
}

} // namespace twinsplat

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace twinsplat {

struct ModelConfig {
    int resolution = 128;                              // input image side, divisible by 32
    std::array<int, 5> widths = {64, 128, 256, 512, 512};
    int shape_dim = 256;                               // token width of the shape features
    int crop_size = 224;
    int patch_size = 16;
    int num_queries = 16;
    int interaction_blocks = 2;
    int attention_heads = 4;
    bool fusion = true;
    bool shape_module = true;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
    int steps = 2000;
    double lr = 2e-4;
    int warmup_steps = 0;
    double w_mse = 1.0;
    double w_mask = 1.0;
    double w_perc = 0.5;
    int num_views = 8;
    int views_per_step = 4;
    std::uint64_t seed = 0;
    int checkpoint_every = 500;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct RemeshConfig {
    int grid_resolution = 128;
    double iso = 0.3;
    int steps = 400;
    double step_size = 5e-3;
    double laplacian_weight = 1.0;
    int num_views = 8;
    int render_resolution = 128;

    void validate() const;
    bool operator==(const RemeshConfig&) const = default;
};

struct SynthConfig {
    int image_resolution = 128;
    double grid_spacing = 0.0125;  // SDF lattice spacing before height normalization
    double pose_scale = 1.0;       // multiplies every joint-angle range
    double proportion_jitter = 0.05;
    double palette_jitter = 0.08;

    void validate() const;
    bool operator==(const SynthConfig&) const = default;
};

struct EvalConfig {
    int samples = 100000;
    std::uint64_t seed = 0;
    double fscore_tau_cm = 1.0;
    int render_resolution = 256;

    void validate() const;
    bool operator==(const EvalConfig&) const = default;
};

struct PipelineConfig {
    ModelConfig model;
    TrainConfig train;
    RemeshConfig remesh;
    SynthConfig synth;
    EvalConfig eval;

    void validate() const;
    bool operator==(const PipelineConfig&) const = default;
};

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string description;
};

/// Every recognized key with its default, in documentation order.
[[nodiscard]] std::vector<ConfigKey> config_keys();

/// Parses flat `key = value` lines over the defaults. '#' starts a comment.
/// Unknown keys, duplicate keys, malformed lines and out-of-range values raise ConfigError.
[[nodiscard]] PipelineConfig parse_config(const std::string& text);
[[nodiscard]] PipelineConfig load_config(const std::filesystem::path& path);

/// Writes every key; parse_config(format_config(c)) == c.
[[nodiscard]] std::string format_config(const PipelineConfig& config);

} // namespace twinsplat

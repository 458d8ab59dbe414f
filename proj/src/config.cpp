#include "twinsplat/config.hpp"

#include "twinsplat/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace twinsplat {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size())
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty() || !std::isfinite(out))
        throw ConfigError(key + ": expected a finite number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt_double(double x) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

struct KeyDef {
    std::string name;
    std::string description;
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

#define TS_INT(key, field, doc)                                                             \
    KeyDef {                                                                                \
        key, doc, [](PipelineConfig& c, const std::string& v) { c.field = parse_int(key, v); }, \
            [](const PipelineConfig& c) { return std::to_string(c.field); }                  \
    }
#define TS_U64(key, field, doc)                                                             \
    KeyDef {                                                                                \
        key, doc, [](PipelineConfig& c, const std::string& v) { c.field = parse_u64(key, v); }, \
            [](const PipelineConfig& c) { return std::to_string(c.field); }                  \
    }
#define TS_DBL(key, field, doc)                                                                \
    KeyDef {                                                                                   \
        key, doc, [](PipelineConfig& c, const std::string& v) { c.field = parse_double(key, v); }, \
            [](const PipelineConfig& c) { return fmt_double(c.field); }                         \
    }
#define TS_BOOL(key, field, doc)                                                              \
    KeyDef {                                                                                  \
        key, doc, [](PipelineConfig& c, const std::string& v) { c.field = parse_bool(key, v); }, \
            [](const PipelineConfig& c) { return std::string(c.field ? "true" : "false"); }    \
    }

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = {
        TS_INT("resolution", model.resolution, "input image side in pixels; divisible by 32"),
        KeyDef{"widths", "channel widths of the five U-Net stages, comma separated",
               [](PipelineConfig& c, const std::string& v) {
                   std::stringstream ss(v);
                   std::string item;
                   std::size_t i = 0;
                   while (std::getline(ss, item, ',')) {
                       if (i >= c.model.widths.size()) throw ConfigError("widths: expected exactly 5 values");
                       c.model.widths[i++] = parse_int("widths", trim(item));
                   }
                   if (i != c.model.widths.size()) throw ConfigError("widths: expected exactly 5 values");
               },
               [](const PipelineConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.model.widths.size(); ++i)
                       out += (i ? "," : "") + std::to_string(c.model.widths[i]);
                   return out;
               }},
        TS_INT("shape_dim", model.shape_dim, "token width of the shape features"),
        TS_INT("crop_size", model.crop_size, "side of each body-part crop"),
        TS_INT("patch_size", model.patch_size, "patch side for crop tokenization; divides crop_size"),
        TS_INT("num_queries", model.num_queries, "number of shape query tokens; a perfect square"),
        TS_INT("interaction_blocks", model.interaction_blocks, "stacked attention interaction blocks"),
        TS_INT("attention_heads", model.attention_heads, "heads per attention layer; divides shape_dim"),
        TS_BOOL("fusion", model.fusion, "add the two U-Nets' features from the middle block on"),
        TS_BOOL("shape_module", model.shape_module, "use the part-crop shape features"),
        TS_INT("steps", train.steps, "training steps"),
        TS_DBL("lr", train.lr, "Adam learning rate"),
        TS_INT("warmup_steps", train.warmup_steps, "linear learning-rate warmup length"),
        TS_DBL("w_mse", train.w_mse, "weight of the color MSE term"),
        TS_DBL("w_mask", train.w_mask, "weight of the mask term"),
        TS_DBL("w_perc", train.w_perc, "weight of the perceptual term"),
        TS_INT("num_views", train.num_views, "supervision cameras on the orbit circle"),
        TS_INT("views_per_step", train.views_per_step, "cameras sampled per training step"),
        TS_U64("seed", train.seed, "seed for initialization and data order"),
        TS_INT("checkpoint_every", train.checkpoint_every, "steps between checkpoints; 0 keeps only the final one"),
        TS_INT("remesh_grid", remesh.grid_resolution, "density lattice resolution per axis"),
        TS_DBL("remesh_iso", remesh.iso, "density iso level of the coarse mesh"),
        TS_INT("remesh_steps", remesh.steps, "vertex optimization steps"),
        TS_DBL("remesh_step_size", remesh.step_size, "vertex step size in world units"),
        TS_DBL("remesh_laplacian", remesh.laplacian_weight, "weight of the Laplacian smoothing term"),
        TS_INT("remesh_views", remesh.num_views, "refinement cameras on the orbit circle"),
        TS_INT("remesh_resolution", remesh.render_resolution, "refinement render side in pixels"),
        TS_INT("synth_resolution", synth.image_resolution, "front image and label mask side"),
        TS_DBL("synth_grid_spacing", synth.grid_spacing, "lattice spacing for humanoid meshing"),
        TS_DBL("synth_pose_scale", synth.pose_scale, "scale of the joint-angle ranges, in [0, 2]"),
        TS_DBL("synth_proportion_jitter", synth.proportion_jitter, "relative limb length jitter, in [0, 0.2]"),
        TS_DBL("synth_palette_jitter", synth.palette_jitter, "per-channel color jitter, in [0, 0.3]"),
        TS_INT("eval_samples", eval.samples, "surface samples per mesh for geometric metrics"),
        TS_U64("eval_seed", eval.seed, "seed for surface sampling"),
        TS_DBL("fscore_tau_cm", eval.fscore_tau_cm, "F-score distance threshold in cm"),
        TS_INT("eval_resolution", eval.render_resolution, "side of front/back evaluation renders"),
    };
    return table;
}

#undef TS_INT
#undef TS_U64
#undef TS_DBL
#undef TS_BOOL

} // namespace

void ModelConfig::validate() const {
    require(resolution >= 32 && resolution % 32 == 0, "resolution must be a positive multiple of 32");
    for (int w : widths) require(w >= 1, "widths must be positive");
    require(shape_dim >= 1, "shape_dim must be positive");
    require(attention_heads >= 1 && shape_dim % attention_heads == 0, "attention_heads must divide shape_dim");
    require(patch_size >= 1 && crop_size >= patch_size && crop_size % patch_size == 0,
            "patch_size must divide crop_size");
    const int q = static_cast<int>(std::lround(std::sqrt(static_cast<double>(num_queries))));
    require(num_queries >= 1 && q * q == num_queries, "num_queries must be a perfect square");
    require(q <= crop_size / patch_size, "num_queries exceeds the head token grid");
    require(interaction_blocks >= 1, "interaction_blocks must be >= 1");
}

void TrainConfig::validate() const {
    require(steps >= 0, "steps must be >= 0");
    require(lr >= 0.0, "lr must be >= 0");
    require(warmup_steps >= 0, "warmup_steps must be >= 0");
    require(w_mse >= 0.0 && w_mask >= 0.0 && w_perc >= 0.0, "loss weights must be >= 0");
    require(num_views >= 1, "num_views must be >= 1");
    require(views_per_step >= 1 && views_per_step <= num_views, "views_per_step must lie in [1, num_views]");
    require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
}

void RemeshConfig::validate() const {
    require(grid_resolution >= 8, "remesh_grid must be >= 8");
    require(iso > 0.0, "remesh_iso must be > 0");
    require(steps >= 0, "remesh_steps must be >= 0");
    require(step_size > 0.0, "remesh_step_size must be > 0");
    require(laplacian_weight >= 0.0, "remesh_laplacian must be >= 0");
    require(num_views >= 1, "remesh_views must be >= 1");
    require(render_resolution >= 8, "remesh_resolution must be >= 8");
}

void SynthConfig::validate() const {
    require(image_resolution >= 16, "synth_resolution must be >= 16");
    require(grid_spacing >= 0.002 && grid_spacing <= 0.05, "synth_grid_spacing must lie in [0.002, 0.05]");
    require(pose_scale >= 0.0 && pose_scale <= 2.0, "synth_pose_scale must lie in [0, 2]");
    require(proportion_jitter >= 0.0 && proportion_jitter <= 0.2, "synth_proportion_jitter must lie in [0, 0.2]");
    require(palette_jitter >= 0.0 && palette_jitter <= 0.3, "synth_palette_jitter must lie in [0, 0.3]");
}

void EvalConfig::validate() const {
    require(samples >= 1, "eval_samples must be >= 1");
    require(fscore_tau_cm > 0.0, "fscore_tau_cm must be > 0");
    require(render_resolution >= 11, "eval_resolution must be >= 11");
}

void PipelineConfig::validate() const {
    model.validate();
    train.validate();
    remesh.validate();
    synth.validate();
    eval.validate();
}

std::vector<ConfigKey> config_keys() {
    const PipelineConfig defaults;
    std::vector<ConfigKey> out;
    for (const auto& k : key_table()) out.push_back({k.name, k.get(defaults), k.description});
    return out;
}

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig config;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& table = key_table();
        const auto it = std::find_if(table.begin(), table.end(), [&](const KeyDef& k) { return k.name == key; });
        if (it == table.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (!seen.insert(key).second)
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        it->set(config, value);
    }
    config.validate();
    return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string format_config(const PipelineConfig& config) {
    std::string out;
    for (const auto& k : key_table()) out += k.name + " = " + k.get(config) + "\n";
    return out;
}

} // namespace twinsplat

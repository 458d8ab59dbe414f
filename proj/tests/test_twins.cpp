#include "test_support.hpp"

#include "twinsplat/errors.hpp"
#include "twinsplat/twins.hpp"

#undef CHECK  // torch logging macro; doctest owns CHECK here
#include <doctest.h>

#include <fstream>

using namespace twinsplat;

namespace {

ModelConfig tiny_config(int resolution = 32) {
    ModelConfig c;
    c.resolution = resolution;
    c.widths = {8, 8, 16, 16, 16};
    c.shape_dim = 16;
    c.crop_size = 16;
    c.patch_size = 8;
    c.num_queries = 4;
    c.attention_heads = 2;
    return c;
}

struct Inputs {
    Image image;
    LabelMap labels;
};

Inputs random_inputs(int res, std::uint64_t seed) {
    torch::manual_seed(seed);
    const torch::Tensor t = torch::rand({1, 3, res, res});
    Inputs in{tensor_to_image(t), LabelMap(res, res)};
    for (int y = res / 8; y < res - res / 8; ++y)
        for (int x = res / 4; x < res - res / 4; ++x) in.labels.at(x, y) = static_cast<std::uint8_t>(1 + (y * 8) / res);
    return in;
}

double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().max().item<double>(); }

/// Squared norm of the gradients currently held by parameters whose name starts with `prefix`.
double grad_norm2(TwinsModel& m, const std::string& prefix) {
    double total = 0.0;
    for (const auto& p : m->named_parameters()) {
        if (p.key().rfind(prefix, 0) != 0 || !p.value().grad().defined()) continue;
        total += p.value().grad().pow(2).sum().item<double>();
    }
    return total;
}

} // namespace

TEST_CASE("image encoder shape, determinism and sensitivity") {
    torch::manual_seed(1);
    torch::NoGradGuard guard;
    ModelConfig cfg = tiny_config(128);
    cfg.widths[0] = 64;
    TwinsModel model(cfg);
    const torch::Tensor img = torch::rand({1, 3, 128, 128});
    const torch::Tensor f = model->encode_image(img);
    CHECK(f.sizes() == torch::IntArrayRef({1, 64, 128, 128}));
    CHECK(torch::equal(f, model->encode_image(img.clone())));
    CHECK(max_abs_diff(f, model->encode_image(img + 0.1)) > 0.0);
    CHECK_THROWS_AS((void)model->encode_image(torch::rand({1, 3, 64, 64})), ConfigError);
}

TEST_CASE("fusion wiring: F_n0 forced to zero feeds F_c0 to both Up-Block-1s") {
    torch::manual_seed(2);
    torch::NoGradGuard guard;
    TwinsModel model(tiny_config());
    const Inputs in = random_inputs(32, 3);
    const torch::Tensor F_c = model->encode_image(image_to_tensor(in.image));
    const torch::Tensor F_g = torch::randn({4, 16});
    TwinsForwardOptions opts;
    opts.zero_n0 = true;
    const TwinsActivations a = model->twins_forward(F_c, F_g, opts);
    CHECK(torch::equal(a.ub_in_c[0], a.F_c0));
    CHECK(torch::equal(a.ub_in_n[0], a.F_c0));
    CHECK(a.F_f0.sizes() == a.F_c0.sizes());
    CHECK(a.F_c0.sizes() == torch::IntArrayRef({1, 16, 1, 1}));
    CHECK(a.raw_c.sizes() == torch::IntArrayRef({32, 32, 14}));
    CHECK(a.raw_n.sizes() == torch::IntArrayRef({32, 32, 14}));

    const TwinsActivations b = model->twins_forward(F_c, F_g);
    CHECK(torch::equal(b.F_f0, b.F_c0 + b.F_n0));
    for (int s = 1; s <= 5; ++s) {
        CHECK(torch::equal(b.ub_in_c[s], b.F_c_up[s - 1] + b.F_n_up[s - 1]));
        CHECK(torch::equal(b.ub_in_c[s], b.ub_in_n[s]));
    }
    CHECK(b.F_c_up[4].sizes() == torch::IntArrayRef({1, 8, 32, 32}));
}

TEST_CASE("without fusion the texture map ignores the normal net") {
    torch::manual_seed(3);
    torch::NoGradGuard guard;
    ModelConfig cfg = tiny_config();
    cfg.fusion = false;
    TwinsModel model(cfg);
    const Inputs in = random_inputs(32, 4);
    const torch::Tensor before = model->forward(in.image, in.labels).raw_c;
    for (auto& p : model->unet_n->parameters()) p.zero_();
    const TwinsActivations after = model->forward(in.image, in.labels);
    CHECK(torch::equal(before, after.raw_c));
    CHECK(!torch::equal(before, after.raw_n));
}

TEST_CASE("cross-gradient coupling follows the fusion flag") {
    for (bool fusion : {true, false}) {
        torch::manual_seed(4);
        ModelConfig cfg = tiny_config();
        cfg.fusion = fusion;
        TwinsModel model(cfg);
        const Inputs in = random_inputs(32, 5);
        const TwinsActivations a = model->forward(in.image, in.labels);
        a.raw_n.pow(2).mean().backward();
        const double coupled = grad_norm2(model, "unet_c.");
        INFO("fusion " << fusion);
        CHECK(grad_norm2(model, "unet_n.") > 0.0);
        if (fusion)
            CHECK(coupled > 0.0);
        else
            CHECK(coupled == 0.0);
    }
}

TEST_CASE("swapping the two nets swaps the outputs") {
    torch::manual_seed(5);
    torch::NoGradGuard guard;
    TwinsModel model(tiny_config());
    const Inputs in = random_inputs(32, 6);
    const TwinsActivations a = model->forward(in.image, in.labels);
    auto pc = model->unet_c->parameters();
    auto pn = model->unet_n->parameters();
    REQUIRE(pc.size() == pn.size());
    for (std::size_t i = 0; i < pc.size(); ++i) {
        const torch::Tensor tmp = pc[i].clone();
        pc[i].copy_(pn[i]);
        pn[i].copy_(tmp);
    }
    const TwinsActivations b = model->forward(in.image, in.labels);
    CHECK(torch::equal(a.raw_c, b.raw_n));
    CHECK(torch::equal(a.raw_n, b.raw_c));
}

TEST_CASE("no NaN over 100 random initializations and inputs") {
    torch::NoGradGuard guard;
    bool all_finite = true;
    for (int i = 0; i < 100; ++i) {
        torch::manual_seed(1000 + i);
        TwinsModel model(tiny_config());
        const Inputs in = random_inputs(32, 2000 + i);
        const TwinsActivations a = model->forward(in.image, in.labels);
        all_finite = all_finite && torch::isfinite(a.raw_c).all().item<bool>() && torch::isfinite(a.raw_n).all().item<bool>();
    }
    CHECK(all_finite);
}

TEST_CASE("torch activation matches activate_raw_params") {
    torch::manual_seed(6);
    torch::Tensor raw = torch::randn({50, 14}, torch::kFloat64) * 3.0;
    raw.index_put_({0, torch::indexing::Slice(6, 10)}, 0.0);
    const torch::Tensor act = activate_raw_tensor(raw);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> row(14);
        for (int k = 0; k < 14; ++k) row[k] = raw[i][k].item<double>();
        const RawParams expected = activate_raw_params(row).packed();
        for (int k = 0; k < 14; ++k) CHECK(act[i][k].item<double>() == doctest::Approx(expected[k]).epsilon(1e-6));
    }
}

TEST_CASE("decode_gaussians count, zero map and raster order") {
    const GaussianSet zero = decode_gaussians(torch::zeros({64, 64, 14}), GaussianKind::normal);
    CHECK(zero.size() == 4096);
    CHECK(zero.kind == GaussianKind::normal);
    const Gaussian z = activate_raw_params(std::vector<double>(14, 0.0));
    for (const auto& g : zero.gaussians) CHECK(g == z);

    torch::Tensor raw = torch::zeros({64, 64, 14});
    raw[2][3][0] = 1.0;
    const GaussianSet marked = decode_gaussians(raw, GaussianKind::texture);
    CHECK(marked.gaussians[131].center.x() > 0.5f);
    CHECK(marked.gaussians[130].center.x() == 0.0f);
    CHECK_THROWS_AS((void)decode_gaussians(torch::zeros({4, 4, 13}), GaussianKind::texture), InputError);
}

TEST_CASE("reconstruct produces two valid, deterministic sets") {
    torch::manual_seed(7);
    ModelConfig cfg = tiny_config(128);
    TwinsModel model(cfg);
    const Inputs in = random_inputs(128, 8);
    const Reconstruction a = reconstruct(model, in.image, in.labels);
    const Reconstruction b = reconstruct(model, in.image, in.labels);
    CHECK(a.texture.size() == 16384);
    CHECK(a.normal.size() == 16384);
    CHECK(a.texture.kind == GaussianKind::texture);
    CHECK(a.normal.kind == GaussianKind::normal);
    CHECK(a.texture == b.texture);
    CHECK(a.normal == b.normal);
    bool valid = true;
    for (const auto& g : a.texture.gaussians) valid = valid && g.valid();
    for (const auto& g : a.normal.gaussians) valid = valid && g.valid();
    CHECK(valid);
    // The output prior places each pixel's Gaussian near the pixel's world position.
    const Gaussian& g = a.texture.gaussians[64 * 128 + 10];
    CHECK(g.center.x() == doctest::Approx(-1.0 + 10.5 / 64.0).epsilon(0.05));
}

TEST_CASE("shape module off means zero shape features") {
    torch::manual_seed(8);
    torch::NoGradGuard guard;
    ModelConfig cfg = tiny_config();
    cfg.shape_module = false;
    TwinsModel model(cfg);
    CHECK(torch::equal(model->shape_features({}), torch::zeros({4, 16})));
    for (const auto& p : model->named_parameters()) CHECK(p.key().rfind("shape.", 0) != 0);
}

TEST_CASE("checkpoint round trip and corruption") {
    testing::TempDir dir("ckpt");
    torch::manual_seed(9);
    ModelConfig cfg = tiny_config();
    cfg.fusion = false;
    TwinsModel model(cfg);
    save_checkpoint(model, dir.path / "m.bin");
    TwinsModel loaded = load_checkpoint(dir.path / "m.bin");
    CHECK(loaded->config == cfg);
    CHECK(checkpoint_config(dir.path / "m.bin").model == cfg);
    const auto a = model->named_parameters(), b = loaded->named_parameters();
    REQUIRE(a.size() == b.size());
    for (const auto& p : a) CHECK(torch::equal(p.value(), b[p.key()]));
    const Inputs in = random_inputs(32, 10);
    CHECK(reconstruct(model, in.image, in.labels).texture == reconstruct(loaded, in.image, in.labels).texture);

    {
        std::ofstream bad(dir.path / "bad.bin", std::ios::binary);
        bad << "NOPE";
    }
    CHECK_THROWS_AS((void)load_checkpoint(dir.path / "bad.bin"), FormatError);
    CHECK_THROWS_AS((void)load_checkpoint(dir.path / "missing.bin"), IoError);
    std::filesystem::resize_file(dir.path / "m.bin", std::filesystem::file_size(dir.path / "m.bin") - 10);
    CHECK_THROWS_AS((void)load_checkpoint(dir.path / "m.bin"), FormatError);
}

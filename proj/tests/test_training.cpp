#include "test_support.hpp"

#include "twinsplat/camera.hpp"
#include "twinsplat/errors.hpp"
#include "twinsplat/metrics.hpp"
#include "twinsplat/training.hpp"

#undef CHECK  // torch logging macro; doctest owns CHECK here
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace twinsplat;

namespace {

ScanSample mesh_scan(TriMesh mesh) {
    mesh.colors.assign(mesh.vertices.size(), Eigen::Vector3f(0.8f, 0.3f, 0.2f));
    ScanSample s;
    s.mesh = std::move(mesh);
    return s;
}

PipelineConfig toy_config() {
    PipelineConfig c;
    c.model.resolution = 32;
    c.model.widths = {8, 8, 16, 16, 16};
    c.model.shape_dim = 16;
    c.model.crop_size = 16;
    c.model.patch_size = 8;
    c.model.num_queries = 4;
    c.model.attention_heads = 2;
    c.train.lr = 1e-3;
    c.train.num_views = 4;
    c.train.views_per_step = 2;
    c.train.seed = 11;
    c.synth.image_resolution = 32;
    return c;
}

const TrainingScan& toy_scan() {
    static const TrainingScan scan = [] {
        const PipelineConfig c = toy_config();
        return prepare_training_scan(synth_scan(3, c.synth), c);
    }();
    return scan;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("supervision of a cube seen from the front") {
    const ScanSample cube = mesh_scan(make_box({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}));
    const std::vector<CameraSpec> cams{front_camera(64)};
    const SupervisionBatch batch = render_supervision(cube, cams);
    REQUIRE(batch.size() == 1);
    const SupervisionView& v = batch[0];
    CHECK(v.mask.at(32, 32, 0) == 1.0f);
    CHECK(v.normal.at(32, 32, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(v.normal.at(32, 32, 1) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(v.normal.at(32, 32, 2) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(v.color.at(32, 32, 0) == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(v.mask.at(2, 2, 0) == 0.0f);
    CHECK(v.normal.at(2, 2, 2) == 0.5f);
    CHECK(v.color.at(2, 2, 1) == 0.0f);

    CHECK(render_supervision(cube, std::vector<CameraSpec>{}).empty());
    CHECK_THROWS_AS((void)render_supervision(ScanSample{}, cams), InputError);
}

TEST_CASE("sphere supervision covers the analytic disk and encodes unit normals") {
    const double r = 0.5;
    const ScanSample sphere = mesh_scan(make_icosphere(5, r));
    const std::vector<CameraSpec> cams = orbit_cameras(4, 128);
    const SupervisionBatch batch = render_supervision(sphere, cams);
    for (const auto& v : batch) {
        const double expected = std::numbers::pi * r * r /
                                (v.cam.width * v.cam.height * v.cam.pixel_scale * v.cam.pixel_scale);
        double covered = 0.0;
        double worst = 0.0;
        for (int y = 0; y < v.cam.height; ++y)
            for (int x = 0; x < v.cam.width; ++x) {
                if (v.mask.at(x, y, 0) != 1.0f) continue;
                covered += 1.0;
                Eigen::Vector3d n;
                for (int c = 0; c < 3; ++c) n[c] = 2.0 * v.normal.at(x, y, c) - 1.0;
                worst = std::max(worst, std::abs(n.norm() - 1.0));
            }
        const double fraction = covered / (v.cam.width * v.cam.height);
        CHECK(fraction == doctest::Approx(expected).epsilon(0.02));
        CHECK(worst < 2e-2);
    }
}

TEST_CASE("loss_2d examples and breakdown") {
    const LossWeights w;
    torch::manual_seed(1);
    const torch::Tensor gt = torch::rand({8, 8, 3}, torch::kFloat64) * 0.8;
    const torch::Tensor mask = (torch::rand({8, 8}, torch::kFloat64) > 0.5).to(torch::kFloat64);

    const LossTerms same = loss_2d(gt, mask, gt, mask, w);
    CHECK(same.total.item<double>() == 0.0);
    CHECK(same.mse.item<double>() == 0.0);
    CHECK(same.mask.item<double>() == 0.0);
    CHECK(same.perc.item<double>() == 0.0);

    const LossTerms shifted = loss_2d(gt + 0.1, mask, gt, mask, w);
    CHECK(shifted.mse.item<double>() == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(shifted.perc.item<double>() >= 0.0);
    const double sum = w.w_mse * shifted.mse.item<double>() + w.w_mask * shifted.mask.item<double>() +
                       w.w_perc * shifted.perc.item<double>();
    CHECK(std::abs(shifted.total.item<double>() - sum) <= 1e-6);

    const LossTerms saturated =
        loss_2d(gt, torch::ones({8, 8}, torch::kFloat64), gt, torch::zeros({8, 8}, torch::kFloat64), {0, 1, 0});
    CHECK(saturated.total.item<double>() == 1.0);

    CHECK_THROWS_AS((void)loss_2d(gt, mask, torch::rand({8, 7, 3}, torch::kFloat64), mask, w), InputError);
    CHECK_THROWS_AS((void)loss_2d(gt, torch::ones({8, 7}, torch::kFloat64), gt, mask, w), InputError);
    CHECK_THROWS_AS((LossWeights{1, -1, 0}.validate()), ConfigError);
}

TEST_CASE("loss_2d on renderer outputs matches the tensor version") {
    RenderOutput pred;
    pred.width = pred.height = 8;
    Image gt_color(8, 8, 3), gt_mask(8, 8, 1);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 64; ++i) {
        for (int c = 0; c < 3; ++c) {
            pred.color.push_back(u(rng));
            gt_color.data[3 * i + c] = static_cast<float>(u(rng));
        }
        pred.alpha.push_back(u(rng));
        gt_mask.data[i] = u(rng) > 0.5 ? 1.0f : 0.0f;
    }
    const LossValues v = loss_2d(pred, gt_color, gt_mask, {});
    const torch::Tensor c = torch::tensor(pred.color, torch::kFloat64).reshape({8, 8, 3});
    const torch::Tensor a = torch::tensor(pred.alpha, torch::kFloat64).reshape({8, 8});
    const LossTerms t = loss_2d(c, a, image_tensor_hwc(gt_color), image_tensor_hwc(gt_mask), {});
    CHECK(v.total == doctest::Approx(t.total.item<double>()).epsilon(1e-12));
    CHECK(v.mse == doctest::Approx(t.mse.item<double>()).epsilon(1e-12));
    CHECK(v.total > 0.0);
    CHECK_THROWS_AS((void)loss_2d(pred, Image(8, 9, 3), gt_mask, {}), InputError);
}

TEST_CASE("loss_2d gradient matches central differences on 8x8 images") {
    torch::manual_seed(2);
    const torch::Tensor gt = torch::rand({8, 8, 3}, torch::kFloat64);
    const torch::Tensor gm = (torch::rand({8, 8}, torch::kFloat64) > 0.5).to(torch::kFloat64);
    const torch::Tensor color = torch::rand({8, 8, 3}, torch::kFloat64).requires_grad_(true);
    const torch::Tensor alpha = torch::rand({8, 8}, torch::kFloat64).requires_grad_(true);
    const LossWeights w;
    loss_2d(color, alpha, gt, gm, w).total.backward();
    const torch::Tensor gc = color.grad().clone(), ga = alpha.grad().clone();

    torch::NoGradGuard guard;
    const double h = 1e-6;
    auto loss_at = [&](const torch::Tensor& c, const torch::Tensor& a) {
        return loss_2d(c, a, gt, gm, w).total.item<double>();
    };
    double worst = 0.0;
    int checked = 0;
    for (int i = 0; i < 192; ++i) {
        torch::Tensor cp = color.detach().clone(), cm = color.detach().clone();
        cp.view(-1)[i] += h;
        cm.view(-1)[i] -= h;
        const double fd = (loss_at(cp, alpha.detach()) - loss_at(cm, alpha.detach())) / (2 * h);
        const double an = gc.view(-1)[i].item<double>();
        if (std::abs(an) <= 1e-6) continue;
        worst = std::max(worst, std::abs(fd - an) / std::abs(an));
        ++checked;
    }
    for (int i = 0; i < 64; ++i) {
        torch::Tensor ap = alpha.detach().clone(), am = alpha.detach().clone();
        ap.view(-1)[i] += h;
        am.view(-1)[i] -= h;
        const double fd = (loss_at(color.detach(), ap) - loss_at(color.detach(), am)) / (2 * h);
        const double an = ga.view(-1)[i].item<double>();
        if (std::abs(an) <= 1e-6) continue;
        worst = std::max(worst, std::abs(fd - an) / std::abs(an));
        ++checked;
    }
    CHECK(checked > 200);
    CHECK(worst < 1e-3);
}

TEST_CASE("torch perceptual distance agrees with the evaluation proxy") {
    const PerceptualProxy proxy;
    torch::manual_seed(3);
    for (int trial = 0; trial < 5; ++trial) {
        const torch::Tensor a = torch::rand({24, 20, 3}, torch::kFloat64);
        const torch::Tensor b = (a + 0.2 * torch::randn({24, 20, 3}, torch::kFloat64)).clamp(0.0, 1.0);
        Image ia(20, 24, 3), ib(20, 24, 3);
        const torch::Tensor fa = a.to(torch::kFloat32).contiguous(), fb = b.to(torch::kFloat32).contiguous();
        std::copy_n(fa.data_ptr<float>(), ia.data.size(), ia.data.begin());
        std::copy_n(fb.data_ptr<float>(), ib.data.size(), ib.data.begin());
        const double expected = proxy.distance(ia, ib);
        CHECK(expected > 0.0);
        CHECK(perceptual_distance(fa.to(torch::kFloat64), fb.to(torch::kFloat64)).item<double>() ==
              doctest::Approx(expected).epsilon(1e-4));
    }
}

TEST_CASE("splat_render forwards the renderer and backpropagates its VJP") {
    std::mt19937_64 rng(4);
    GaussianSet set;
    for (int i = 0; i < 3; ++i) set.gaussians.push_back(testing::random_gaussian(rng, 0.4, 0.1, 0.3));
    const std::vector<double> packed = set.packed();
    const CameraSpec cam = front_camera(16);
    const Eigen::Vector3d bg(0.2, 0.3, 0.4);
    RenderOptions opts;
    opts.min_alpha = 0.0;

    const torch::Tensor params =
        torch::tensor(packed, torch::kFloat64).reshape({3, 14});
    const torch::Tensor p = params.clone().requires_grad_(true);
    const SplatImages img = splat_render(p, cam, bg, opts);
    const RenderOutput ref = render(packed, cam, bg, opts);
    CHECK(img.color.sizes() == torch::IntArrayRef({16, 16, 3}));
    CHECK(img.alpha.sizes() == torch::IntArrayRef({16, 16}));
    CHECK(torch::equal(img.color.reshape(-1), torch::tensor(ref.color, torch::kFloat64)));
    CHECK(torch::equal(img.alpha.reshape(-1), torch::tensor(ref.alpha, torch::kFloat64)));

    torch::manual_seed(4);
    const torch::Tensor wc = torch::randn({16, 16, 3}, torch::kFloat64), wa = torch::randn({16, 16}, torch::kFloat64);
    ((img.color * wc).sum() + (img.alpha * wa).sum()).backward();
    const auto wc_ptr = wc.contiguous(), wa_ptr = wa.contiguous();
    const std::vector<double> expected =
        render_backward(packed, cam, bg, std::span<const double>(wc_ptr.data_ptr<double>(), 768),
                        std::span<const double>(wa_ptr.data_ptr<double>(), 256), opts);
    CHECK(torch::equal(p.grad().reshape(-1), torch::tensor(expected, torch::kFloat64)));
}

TEST_CASE("lr = 0 leaves parameters bit-identical") {
    PipelineConfig c = toy_config();
    c.train.lr = 0.0;
    c.train.steps = 3;
    torch::manual_seed(5);
    TwinsModel init(c.model);
    std::vector<torch::Tensor> before;
    for (const auto& p : init->parameters()) before.push_back(p.detach().clone());
    const TrainResult r = train_model({toy_scan()}, c, {}, init);
    const auto after = r.model->parameters();
    REQUIRE(after.size() == before.size());
    bool same = true;
    for (std::size_t i = 0; i < before.size(); ++i) same = same && torch::equal(before[i], after[i]);
    CHECK(same);
    CHECK(r.log.size() == 3);
}

TEST_CASE("same seed gives identical loss curves, different seed does not") {
    PipelineConfig c = toy_config();
    c.train.steps = 4;
    auto totals = [&](std::uint64_t seed) {
        c.train.seed = seed;
        std::vector<double> out;
        for (const auto& s : train_model({toy_scan()}, c).log) out.push_back(s.total);
        return out;
    };
    const auto a = totals(21);
    CHECK(a == totals(21));
    CHECK(a != totals(22));
}

TEST_CASE("training on one toy scan lowers the loss") {
    PipelineConfig c = toy_config();
    c.train.steps = 500;
    c.train.views_per_step = 4;
    const TrainResult r = train_model({toy_scan()}, c);
    REQUIRE(r.log.size() == 500);
    double tail = 0.0;
    for (int i = 490; i < 500; ++i) tail += r.log[i].total;
    MESSAGE("step 0 loss " << r.log.front().total << ", final " << r.log.back().total);
    CHECK(r.log.back().total < r.log.front().total);
    CHECK(tail / 10.0 < 0.5 * r.log.front().total);
}

TEST_CASE("non-finite values abort training with the step index") {
    PipelineConfig c = toy_config();
    c.train.steps = 2;
    torch::manual_seed(6);
    TwinsModel init(c.model);
    {
        torch::NoGradGuard guard;
        init->unet_c->parameters().back().fill_(std::numeric_limits<float>::quiet_NaN());
    }
    try {
        (void)train_model({toy_scan()}, c, {}, init);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
}

TEST_CASE("train writes metrics and checkpoint") {
    testing::TempDir dir("train");
    PipelineConfig c = toy_config();
    c.train.steps = 3;
    c.train.checkpoint_every = 2;
    DatasetManifest m = build_dataset(1, 7, dir.path / "data", c.synth);
    for (auto& e : m.entries) e.status = QualityStatus::accepted;
    std::vector<int> seen;
    (void)train(m, c, dir.path / "run", [&](const StepLog& s) { seen.push_back(s.step); });
    CHECK(seen == std::vector<int>{0, 1, 2});
    std::istringstream lines(read_file(dir.path / "run" / "metrics.csv"));
    std::string line;
    std::getline(lines, line);
    CHECK(line == kMetricsHeader);
    int rows = 0;
    while (std::getline(lines, line)) {
        CHECK(line.rfind(std::to_string(rows) + ",", 0) == 0);
        ++rows;
    }
    CHECK(rows == 3);
    CHECK(checkpoint_config(dir.path / "run" / "checkpoint.bin").model == c.model);

    DatasetManifest none = m;
    for (auto& e : none.entries) e.status = QualityStatus::rejected;
    CHECK_THROWS_AS((void)train(none, c, dir.path / "run2"), InputError);
}

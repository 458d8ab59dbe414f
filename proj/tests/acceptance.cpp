// Acceptance harness: one PASS/FAIL line per criterion.
//
//   acceptance [--criteria 1,2,...] [--cli path/to/twinsplat] [--workdir dir]

#include "twinsplat/anatomy.hpp"
#include "twinsplat/camera.hpp"
#include "twinsplat/coarse_mesh.hpp"
#include "twinsplat/dataset.hpp"
#include "twinsplat/metrics.hpp"
#include "twinsplat/pipeline.hpp"
#include "twinsplat/random.hpp"
#include "twinsplat/remesher.hpp"
#include "twinsplat/splat_renderer.hpp"
#include "twinsplat/training.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

using namespace twinsplat;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

class Stopwatch {
public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Context {
    std::string cli;
    fs::path workdir;
};

// 1. Renderer gradients against central differences.
Outcome renderer_gradients(const Context&) {
    Stopwatch clock;
    Rng rng(101);
    const RenderOptions exact{0.0};
    double worst = 0.0;
    int compared = 0;
    const int scenes = 24;
    for (int scene = 0; scene < scenes; ++scene) {
        const int count = 1 + static_cast<int>(rng.index(5));
        std::vector<double> params;
        for (int i = 0; i < count; ++i) {
            std::vector<double> raw(kGaussianParams);
            for (auto& r : raw) r = rng.normal();
            raw[0] *= 0.4;
            raw[1] *= 0.4;
            raw[3] = raw[3] * 0.3 - 2.0;  // scales around 0.12
            raw[4] = raw[4] * 0.3 - 2.0;
            raw[5] = raw[5] * 0.3 - 2.0;
            const RawParams p = activate_raw_params(raw).packed();
            params.insert(params.end(), p.begin(), p.end());
        }
        const CameraSpec cam = orbit_camera(360.0 * rng.uniform(), 16);
        const Eigen::Vector3d bg(rng.uniform(), rng.uniform(), rng.uniform());
        std::vector<double> wc(16 * 16 * 3), wa(16 * 16);
        for (auto& w : wc) w = rng.normal();
        for (auto& w : wa) w = rng.normal();
        auto objective = [&](const std::vector<double>& p) {
            const RenderOutput r = render(p, cam, bg, exact);
            double s = 0.0;
            for (std::size_t i = 0; i < wc.size(); ++i) s += wc[i] * r.color[i];
            for (std::size_t i = 0; i < wa.size(); ++i) s += wa[i] * r.alpha[i];
            return s;
        };
        const std::vector<double> grad = render_backward(params, cam, bg, wc, wa, exact);
        for (std::size_t k = 0; k < params.size(); ++k) {
            if (std::abs(grad[k]) <= 1e-6) continue;
            const double h = 1e-6 * std::max(1.0, std::abs(params[k]));
            std::vector<double> p = params;
            p[k] = params[k] + h;
            const double up = objective(p);
            p[k] = params[k] - h;
            const double down = objective(p);
            const double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - grad[k]) / std::abs(grad[k]));
            ++compared;
        }
    }
    const double t = clock.seconds();
    return {worst < 1e-3 && t < 120.0 && compared > 0,
            fmt("%d scenes, %d gradients compared, max rel err %.2e, %.1f s", scenes, compared, worst, t)};
}

// 2. Metrics against quadratic brute-force oracles.
Outcome metric_oracles(const Context&) {
    Stopwatch clock;
    Rng rng(202);
    auto cloud = [&](int n, std::vector<Eigen::Vector3d>& pts, std::vector<Eigen::Vector3d>& nrm) {
        pts.clear();
        nrm.clear();
        for (int i = 0; i < n; ++i) {
            pts.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
            nrm.push_back(Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized());
        }
    };
    auto nearest = [](const Eigen::Vector3d& q, const std::vector<Eigen::Vector3d>& s) {
        double best = std::numeric_limits<double>::infinity();
        int arg = -1;
        for (std::size_t j = 0; j < s.size(); ++j) {
            const double d = (q - s[j]).norm();
            if (d < best) {
                best = d;
                arg = static_cast<int>(j);
            }
        }
        return std::pair{best, arg};
    };
    int cd_bad = 0, f_bad = 0;
    double nc_err = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Eigen::Vector3d> p, pn, s, sn;
        cloud(1 + static_cast<int>(rng.index(200)), p, pn);
        cloud(1 + static_cast<int>(rng.index(200)), s, sn);
        const double tau = 0.05 + 0.2 * rng.uniform();
        double p2s = 0.0, s2p = 0.0, nc_p = 0.0, nc_s = 0.0;
        int prec = 0, rec = 0;
        for (const auto& q : p) {
            const auto [d, j] = nearest(q, s);
            p2s += d;
            prec += d < tau;
        }
        for (const auto& q : s) {
            const auto [d, j] = nearest(q, p);
            s2p += d;
            rec += d < tau;
        }
        for (std::size_t i = 0; i < p.size(); ++i) nc_p += pn[i].dot(sn[nearest(p[i], s).second]);
        for (std::size_t i = 0; i < s.size(); ++i) nc_s += sn[i].dot(pn[nearest(s[i], p).second]);
        p2s /= static_cast<double>(p.size());
        s2p /= static_cast<double>(s.size());
        const double precision = static_cast<double>(prec) / p.size(), recall = static_cast<double>(rec) / s.size();
        const double f = precision + recall > 0 ? 100.0 * 2 * precision * recall / (precision + recall) : 0.0;
        const double nc = 0.5 * (nc_p / p.size() + nc_s / s.size());

        const auto [cp, cs] = chamfer(p, s);
        cd_bad += (cp != p2s || cs != s2p);
        f_bad += f_score(p, s, tau) != f;
        nc_err = std::max(nc_err, std::abs(normal_consistency(p, pn, s, sn) - nc));
    }
    const double t = clock.seconds();
    return {cd_bad == 0 && f_bad == 0 && nc_err <= 1e-9 && t < 60.0,
            fmt("100 pairs: chamfer mismatches %d, f-score mismatches %d, max NC err %.1e, %.1f s", cd_bad, f_bad,
                nc_err, t)};
}

// 3. Interaction block invariances.
Outcome block_invariance(const Context&) {
    torch::NoGradGuard guard;
    double perm = 0.0, dup = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        torch::manual_seed(300 + trial);
        const int dim = 32 * (1 + trial % 4), heads = 1 << (trial % 3);
        InteractionBlock block(dim, heads);
        const torch::Tensor q = torch::randn({4 + trial, dim});
        const torch::Tensor body = torch::randn({50 + 7 * trial, dim});
        const torch::Tensor order = torch::randperm(body.size(0));
        perm = std::max(perm, (block(q, body) - block(q, body.index({order}))).abs().max().item<double>());
        const torch::Tensor one = torch::randn({1, dim});
        dup = std::max(dup, (block(q, one) - block(q, one.expand({9 + trial, dim}).contiguous()))
                                .abs()
                                .max()
                                .item<double>());
    }
    return {perm <= 1e-5 && dup <= 1e-5,
            fmt("20 parameterizations: permutation %.1e, duplication %.1e", perm, dup)};
}

// 4. Fusion couples the texture net into the normal loss.
Outcome fusion_gradients(const Context&) {
    auto coupled_norm = [](bool fusion) {
        torch::manual_seed(400);
        ModelConfig cfg;
        cfg.fusion = fusion;
        TwinsModel model(cfg);
        Image img(cfg.resolution, cfg.resolution, 3);
        Rng rng(401);
        for (auto& v : img.data) v = static_cast<float>(rng.uniform());
        LabelMap labels(cfg.resolution, cfg.resolution);
        for (int y = 16; y < 112; ++y)
            for (int x = 40; x < 88; ++x) labels.at(x, y) = static_cast<std::uint8_t>(1 + (y - 16) / 12);
        const TwinsActivations a = model->forward(img, labels);
        const torch::Tensor params = activate_raw_tensor(a.raw_n.reshape({-1, kGaussianParams})).to(torch::kFloat64);
        const CameraSpec cam = front_camera(cfg.resolution);
        const SplatImages r = splat_render(params, cam, kNormalBackground);
        torch::manual_seed(402);
        const torch::Tensor target = torch::rand({cfg.resolution, cfg.resolution, 3}, torch::kFloat64);
        const torch::Tensor mask = torch::ones({cfg.resolution, cfg.resolution}, torch::kFloat64);
        loss_2d(r.color, r.alpha, target, mask, {}).total.backward();
        double norm = 0.0;
        for (const auto& p : model->unet_c->parameters())
            if (p.grad().defined()) norm += p.grad().pow(2).sum().item<double>();
        return std::sqrt(norm);
    };
    const double on = coupled_norm(true), off = coupled_norm(false);
    return {on > 0.0 && off == 0.0, fmt("|dL_normal/dtheta_c| fusion on %.3e, off %.3e", on, off)};
}

// 5. Overfit two synthetic scans, then remesh.
Outcome overfit(const Context& ctx) {
    Stopwatch clock;
    PipelineConfig cfg = parse_config(
        "widths = 16,32,64,64,64\n"
        "shape_dim = 64\n"
        "crop_size = 64\n"
        "patch_size = 16\n"
        "num_queries = 4\n"
        "attention_heads = 4\n"
        "lr = 1e-3\n"
        "steps = 4000\n"
        "seed = 5\n");
    std::vector<ScanSample> samples;
    std::vector<TrainingScan> scans;
    for (std::uint64_t i = 0; i < 2; ++i) {
        samples.push_back(synth_scan(derive_seed(5, i), cfg.synth));
        scans.push_back(prepare_training_scan(samples.back(), cfg));
    }
    TrainHooks hooks;
    hooks.on_step = [&](const StepLog& s) {
        if (s.step % 250 == 0)
            std::fprintf(stderr, "  [5] %s  (%.0f s)\n", format_log_line(s).c_str(), clock.seconds());
    };
    TwinsModel model = train_model(scans, cfg, hooks).model;
    save_checkpoint(model, ctx.workdir / "overfit_checkpoint.bin");

    bool pass = true;
    std::string detail;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Prediction p = predict(model, samples[i].front_image, samples[i].label_mask, cfg.remesh);
        const SplatFidelity fid = splat_fidelity(p.gaussians.texture, samples[i]);
        const EvalReport rep = evaluate(p.mesh, samples[i].mesh, cfg.eval);
        const double cd = 0.5 * (rep.geo.cd_p2s + rep.geo.cd_s2p);
        save_obj(p.mesh, ctx.workdir / ("overfit_" + samples[i].meta.id + ".obj"));
        pass = pass && fid.psnr_front >= 28.0 && cd <= 2.0;
        detail += fmt("%s front PSNR %.2f dB, chamfer %.3f cm; ", samples[i].meta.id.c_str(), fid.psnr_front, cd);
    }
    const double t = clock.seconds();
    pass = pass && t <= 4 * 3600.0;
    return {pass, detail + fmt("%d steps, %.0f s", cfg.train.steps, t)};
}

// 6. Perturbed sphere recovery.
Outcome sphere_recovery(const Context&) {
    Stopwatch clock;
    torch::set_num_threads(1);
    const TriMesh clean = make_icosphere(4, 0.5);
    TriMesh noisy = clean;
    Rng rng(3);
    for (auto& v : noisy.vertices) v *= 1.0 + rng.uniform(-0.02, 0.02);
    const RemeshConfig cfg;
    const auto targets = targets_from_mesh(clean, orbit_cameras(cfg.num_views, cfg.render_resolution));
    const RefineResult r = refine_mesh(noisy, targets, cfg);
    const auto pre = surface_chamfer(noisy, clean, 20000, 1);
    const auto post = surface_chamfer(r.mesh, clean, 20000, 1);
    const double ratio = (post.first + post.second) / (pre.first + pre.second);
    bool monotone = true;
    for (std::size_t i = 1; i < r.losses.size(); ++i) monotone = monotone && r.losses[i] <= r.losses[i - 1];
    const double t = clock.seconds();
    return {ratio < 0.25 && monotone && r.accepted_steps <= 400 && t < 300.0,
            fmt("chamfer ratio %.3f after %d accepted steps%s, loss %s, %.1f s", ratio, r.accepted_steps,
                r.stalled ? " (stopped early)" : "", monotone ? "non-increasing" : "INCREASED", t)};
}

// 7. Iso-surface radius of one isotropic Gaussian.
Outcome coarse_radius(const Context&) {
    const double sigma = 0.2, opacity = 0.9;
    GaussianSet set;
    set.kind = GaussianKind::normal;
    Gaussian g;
    g.center = Eigen::Vector3f(0.05f, -0.03f, 0.02f);
    g.scale = Eigen::Vector3f::Constant(static_cast<float>(sigma));
    g.opacity = static_cast<float>(opacity);
    g.color = Eigen::Vector3f::Constant(0.5f);
    set.gaussians.push_back(g);
    const RemeshConfig cfg;
    const TriMesh m = init_coarse_mesh(set, cfg);
    const double expected = sigma * std::sqrt(2.0 * std::log(opacity / cfg.iso));
    const double cell = 2.0 / (cfg.grid_resolution - 1);
    double worst = 0.0;
    for (const auto& v : m.vertices)
        worst = std::max(worst, std::abs((v - g.center.cast<double>()).norm() - expected));
    return {worst < 2.0 * cell, fmt("expected radius %.4f, max deviation %.4f (%.2f cells) at %d^3", expected, worst,
                                    worst / cell, cfg.grid_resolution)};
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const std::string& cmd) {
    std::fprintf(stderr, "  $ %s\n", cmd.c_str());
    return std::system((cmd + " > /dev/null 2>&1").c_str());
}

const char* kSmallConfig =
    "resolution = 32\n"
    "widths = 8,8,16,16,16\n"
    "shape_dim = 16\n"
    "crop_size = 16\n"
    "patch_size = 8\n"
    "num_queries = 4\n"
    "attention_heads = 2\n"
    "steps = 20\n"
    "lr = 1e-3\n"
    "num_views = 4\n"
    "views_per_step = 2\n"
    "seed = 8\n"
    "synth_resolution = 32\n"
    "remesh_grid = 48\n"
    "remesh_steps = 20\n"
    "remesh_resolution = 64\n"
    "remesh_views = 4\n"
    "eval_samples = 5000\n"
    "eval_resolution = 64\n";

// 8. Byte-identical CLI outputs across two runs.
Outcome determinism(const Context& ctx) {
    if (ctx.cli.empty()) return {false, "no --cli given"};
    const fs::path root = ctx.workdir / "determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "small.cfg") << kSmallConfig;
    const std::string cfg = (root / "small.cfg").string();
    for (const char* run_name : {"a", "b"}) {
        const fs::path d = root / run_name;
        const std::string data = (d / "data").string(), out = (d / "train").string();
        if (run(ctx.cli + " synth-data --n 2 --seed 9 --out " + data + " --config " + cfg) != 0 ||
            run(ctx.cli + " train --data " + data + " --config " + cfg + " --out " + out) != 0 ||
            run(ctx.cli + " evaluate --pred " + data + "/scans/scan_0000/mesh.ply --gt " + data +
                "/scans/scan_0001/mesh.ply --config " + cfg + " --out " + (d / "eval.csv").string()) != 0)
            return {false, std::string("CLI failed in run ") + run_name};
    }
    int files = 0, differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), root / "a");
        ++files;
        if (!fs::exists(root / "b" / rel) || read_bytes(e.path()) != read_bytes(root / "b" / rel)) ++differing;
    }
    return {files >= 10 && differing == 0,
            fmt("%d output files (synth-data, train, evaluate), %d differ", files, differing)};
}

// 9. Ablation harness produces all four variants with every metric.
Outcome ablation(const Context& ctx) {
    if (ctx.cli.empty()) return {false, "no --cli given"};
    const fs::path root = ctx.workdir / "ablation";
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "small.cfg") << kSmallConfig;
    const std::string cfg = (root / "small.cfg").string();
    if (run(ctx.cli + " synth-data --n 1 --seed 10 --out " + (root / "data").string() + " --config " + cfg) != 0 ||
        run(ctx.cli + " ablate --data " + (root / "data").string() + " --config " + cfg + " --out " +
            (root / "out").string()) != 0)
        return {false, "CLI failed"};
    std::istringstream csv(read_bytes(root / "out" / "ablation.csv"));
    std::string line;
    std::getline(csv, line);
    if (line != kReportHeader) return {false, "unexpected header: " + line};
    std::set<std::string> variants;
    bool complete = true;
    while (std::getline(csv, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        complete = complete && cells.size() == 11;
        for (std::size_t i = 1; i < cells.size(); ++i) complete = complete && std::isfinite(std::stod(cells[i]));
        if (!cells.empty()) variants.insert(cells[0].substr(0, cells[0].find('/')));
    }
    const std::set<std::string> expected{"no_shape_module", "no_twins_fusion", "no_remeshing", "full"};
    return {complete && variants == expected,
            fmt("%zu variants with %s metrics", variants.size(), complete ? "all 10" : "missing")};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> selected;
    Context ctx;
    ctx.workdir = fs::temp_directory_path() / "twinsplat_acceptance";
    std::string workdir = ctx.workdir.string();
    app.add_option("--criteria", selected, "Criteria to run (default all)")->delimiter(',');
    app.add_option("--cli", ctx.cli, "Path to the twinsplat CLI");
    app.add_option("--workdir", workdir, "Scratch directory");
    CLI11_PARSE(app, argc, argv);
    ctx.workdir = workdir;
    fs::create_directories(ctx.workdir);
    torch::set_num_threads(1);

    const std::map<int, std::pair<const char*, std::function<Outcome(const Context&)>>> criteria{
        {1, {"renderer gradients", renderer_gradients}},
        {2, {"metric oracles", metric_oracles}},
        {3, {"interaction block invariance", block_invariance}},
        {4, {"twins fusion gradients", fusion_gradients}},
        {5, {"overfit run", overfit}},
        {6, {"remesher sphere recovery", sphere_recovery}},
        {7, {"coarse mesh radius", coarse_radius}},
        {8, {"determinism", determinism}},
        {9, {"ablation variants", ablation}},
    };
    if (selected.empty())
        for (const auto& [id, c] : criteria) selected.push_back(id);

    int failures = 0;
    for (int id : selected) {
        const auto it = criteria.find(id);
        if (it == criteria.end()) {
            std::printf("FAIL %d unknown criterion\n", id);
            ++failures;
            continue;
        }
        Outcome o;
        try {
            o = it->second.second(ctx);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, it->second.first, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}

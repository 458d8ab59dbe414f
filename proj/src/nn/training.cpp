#include "twinsplat/training.hpp"

#include "twinsplat/errors.hpp"
#include "twinsplat/mesh_raster.hpp"
#include "twinsplat/metrics.hpp"
#include "twinsplat/random.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace twinsplat {

void LossWeights::validate() const {
    if (!(w_mse >= 0.0 && w_mask >= 0.0 && w_perc >= 0.0)) throw ConfigError("loss weights must be >= 0");
}

SupervisionBatch render_supervision(const ScanSample& scan, std::span<const CameraSpec> cams) {
    if (scan.mesh.empty()) throw InputError("render_supervision: empty mesh");
    SupervisionBatch batch;
    for (const auto& cam : cams) {
        MeshMaps maps = render_mesh_maps(scan.mesh, cam);
        batch.push_back({cam, std::move(maps.color), std::move(maps.mask), std::move(maps.normal)});
    }
    return batch;
}

namespace {

using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

// Camera, background and culling threshold flattened into one double tensor for the autograd context.
torch::Tensor pack_render_args(const CameraSpec& cam, const Eigen::Vector3d& bg, const RenderOptions& opts) {
    torch::Tensor t = torch::empty({19}, torch::kFloat64);
    double* p = t.data_ptr<double>();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) *p++ = cam.rotation(r, c);
    for (int i = 0; i < 3; ++i) *p++ = cam.translation[i];
    *p++ = cam.width;
    *p++ = cam.height;
    *p++ = cam.pixel_scale;
    for (int i = 0; i < 3; ++i) *p++ = bg[i];
    *p = opts.min_alpha;
    return t;
}

void unpack_render_args(const torch::Tensor& t, CameraSpec& cam, Eigen::Vector3d& bg, RenderOptions& opts) {
    const double* p = t.data_ptr<double>();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) cam.rotation(r, c) = *p++;
    for (int i = 0; i < 3; ++i) cam.translation[i] = *p++;
    cam.width = static_cast<int>(*p++);
    cam.height = static_cast<int>(*p++);
    cam.pixel_scale = *p++;
    for (int i = 0; i < 3; ++i) bg[i] = *p++;
    opts.min_alpha = *p;
}

std::span<const double> as_span(const torch::Tensor& t) {
    return {t.data_ptr<double>(), static_cast<std::size_t>(t.numel())};
}

struct SplatFunction : torch::autograd::Function<SplatFunction> {
    static variable_list forward(AutogradContext* ctx, const torch::Tensor& params, const torch::Tensor& args) {
        CameraSpec cam;
        Eigen::Vector3d bg;
        RenderOptions opts;
        unpack_render_args(args, cam, bg, opts);
        const torch::Tensor packed = params.detach().to(torch::kFloat64).contiguous();
        const RenderOutput r = render(as_span(packed), cam, bg, opts);
        ctx->save_for_backward({packed, args});
        ctx->saved_data["dtype"] = static_cast<int64_t>(params.scalar_type());
        const auto opt = torch::TensorOptions().dtype(torch::kFloat64);
        torch::Tensor color = torch::from_blob(const_cast<double*>(r.color.data()), {r.height, r.width, 3}, opt).clone();
        torch::Tensor alpha = torch::from_blob(const_cast<double*>(r.alpha.data()), {r.height, r.width}, opt).clone();
        return {color.to(params.scalar_type()), alpha.to(params.scalar_type())};
    }

    static variable_list backward(AutogradContext* ctx, variable_list grads) {
        const auto saved = ctx->get_saved_variables();
        const torch::Tensor& packed = saved[0];
        CameraSpec cam;
        Eigen::Vector3d bg;
        RenderOptions opts;
        unpack_render_args(saved[1], cam, bg, opts);
        const auto shape_c = std::vector<int64_t>{cam.height, cam.width, 3};
        const auto shape_a = std::vector<int64_t>{cam.height, cam.width};
        const auto f64 = torch::TensorOptions().dtype(torch::kFloat64);
        const torch::Tensor gc = grads[0].defined() ? grads[0].to(torch::kFloat64).contiguous() : torch::zeros(shape_c, f64);
        const torch::Tensor ga = grads[1].defined() ? grads[1].to(torch::kFloat64).contiguous() : torch::zeros(shape_a, f64);
        const std::vector<double> g = render_backward(as_span(packed), cam, bg, as_span(gc), as_span(ga), opts);
        torch::Tensor grad = torch::from_blob(const_cast<double*>(g.data()), packed.sizes(), f64).clone();
        const auto dtype = static_cast<torch::ScalarType>(ctx->saved_data["dtype"].toInt());
        return {grad.to(dtype), torch::Tensor()};
    }
};

} // namespace

SplatImages splat_render(const torch::Tensor& params, const CameraSpec& cam, const Eigen::Vector3d& background,
                         const RenderOptions& opts) {
    if (params.dim() != 2 || params.size(1) != kGaussianParams) throw InputError("splat_render: expected N x 14");
    cam.validate();
    const auto out = SplatFunction::apply(params, pack_render_args(cam, background, opts));
    return {out[0], out[1]};
}

namespace {

struct ProxyWeights {
    std::array<torch::Tensor, PerceptualProxy::kStages> weight, bias;
};

const ProxyWeights& proxy_weights() {
    static const ProxyWeights w = [] {
        const PerceptualProxy& proxy = PerceptualProxy::instance();
        ProxyWeights out;
        for (int s = 0; s < PerceptualProxy::kStages; ++s) {
            const int cin = PerceptualProxy::kChannels[s], cout = PerceptualProxy::kChannels[s + 1];
            std::vector<double> wd(proxy.weights(s).begin(), proxy.weights(s).end());
            std::vector<double> bd(proxy.biases(s).begin(), proxy.biases(s).end());
            out.weight[s] = torch::tensor(wd, torch::kFloat64).reshape({cout, cin, 3, 3});
            out.bias[s] = torch::tensor(bd, torch::kFloat64);
        }
        return out;
    }();
    return w;
}

} // namespace

torch::Tensor perceptual_distance(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes() || a.dim() != 3 || a.size(2) != 3)
        throw InputError("perceptual_distance: expected two H x W x 3 images of one size");
    const ProxyWeights& pw = proxy_weights();
    const auto dtype = a.scalar_type();
    torch::Tensor fa = (a.permute({2, 0, 1}).unsqueeze(0) * 2.0 - 1.0);
    torch::Tensor fb = (b.permute({2, 0, 1}).unsqueeze(0) * 2.0 - 1.0);
    torch::Tensor total = torch::zeros({}, a.options());
    for (int s = 0; s < PerceptualProxy::kStages; ++s) {
        const torch::Tensor w = pw.weight[s].to(dtype), bias = pw.bias[s].to(dtype);
        auto stage = [&](const torch::Tensor& x) {
            return torch::leaky_relu(torch::conv2d(x, w, bias, 2, 1), PerceptualProxy::kLeakySlope);
        };
        fa = stage(fa);
        fb = stage(fb);
        const torch::Tensor na = fa / torch::sqrt(fa.pow(2).sum(1, true) + PerceptualProxy::kNormEps);
        const torch::Tensor nb = fb / torch::sqrt(fb.pow(2).sum(1, true) + PerceptualProxy::kNormEps);
        total = total + (na - nb).pow(2).sum(1).mean();
    }
    return total;
}

LossTerms loss_2d(const torch::Tensor& color, const torch::Tensor& alpha, const torch::Tensor& gt_color,
                  const torch::Tensor& gt_mask, const LossWeights& w) {
    w.validate();
    if (color.sizes() != gt_color.sizes() || alpha.sizes() != gt_mask.sizes() || color.dim() != 3 ||
        color.size(2) != 3 || alpha.dim() != 2 || alpha.size(0) != color.size(0) || alpha.size(1) != color.size(1))
        throw InputError("loss_2d: prediction and target shapes differ");
    LossTerms t;
    t.mse = (color - gt_color).pow(2).mean();
    t.mask = (alpha - gt_mask).pow(2).mean();
    t.perc = w.w_perc > 0.0 ? perceptual_distance(color, gt_color) : torch::zeros({}, color.options());
    t.total = w.w_mse * t.mse + w.w_mask * t.mask + w.w_perc * t.perc;
    return t;
}

torch::Tensor image_tensor_hwc(const Image& img) {
    torch::Tensor t = torch::empty({img.height, img.width, img.channels}, torch::kFloat32);
    std::copy(img.data.begin(), img.data.end(), t.data_ptr<float>());
    t = t.to(torch::kFloat64);
    return img.channels == 1 ? t.squeeze(2) : t;
}

LossValues loss_2d(const RenderOutput& pred, const Image& gt_color, const Image& gt_mask, const LossWeights& w) {
    if (gt_color.channels != 3 || gt_mask.channels != 1 || gt_color.width != pred.width ||
        gt_color.height != pred.height || gt_mask.width != pred.width || gt_mask.height != pred.height)
        throw InputError("loss_2d: prediction and target shapes differ");
    torch::NoGradGuard guard;
    const auto opt = torch::TensorOptions().dtype(torch::kFloat64);
    const torch::Tensor color =
        torch::from_blob(const_cast<double*>(pred.color.data()), {pred.height, pred.width, 3}, opt);
    const torch::Tensor alpha = torch::from_blob(const_cast<double*>(pred.alpha.data()), {pred.height, pred.width}, opt);
    const LossTerms t = loss_2d(color, alpha, image_tensor_hwc(gt_color), image_tensor_hwc(gt_mask), w);
    return {t.total.item<double>(), t.mse.item<double>(), t.mask.item<double>(), t.perc.item<double>()};
}

std::string format_log_line(const StepLog& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g", s.step, s.total, s.mse, s.mask, s.perc,
                  s.normal_total);
    return buf;
}

TrainingScan prepare_training_scan(const ScanSample& scan, const PipelineConfig& config) {
    const int res = config.model.resolution;
    if (scan.front_image.width != res || scan.front_image.height != res)
        throw InputError("scan " + scan.meta.id + ": image is " + std::to_string(scan.front_image.width) +
                         " px wide, model expects " + std::to_string(res));
    TrainingScan t;
    t.id = scan.meta.id;
    t.image = scan.front_image;
    t.labels = scan.label_mask;
    const std::vector<CameraSpec> cams = orbit_cameras(config.train.num_views, res);
    t.views = render_supervision(scan, cams);
    for (const auto& v : t.views) {
        t.color.push_back(image_tensor_hwc(v.color));
        t.mask.push_back(image_tensor_hwc(v.mask));
        t.normal.push_back(image_tensor_hwc(v.normal));
    }
    return t;
}

StepLoss supervision_loss(TwinsModel& model, const TrainingScan& scan, std::span<const int> views,
                          const LossWeights& w) {
    if (views.empty()) throw InputError("supervision_loss: no views");
    const TwinsActivations a = model->forward(scan.image, scan.labels);
    const torch::Tensor gc = activate_raw_tensor(a.raw_c.reshape({-1, kGaussianParams})).to(torch::kFloat64);
    const torch::Tensor gn = activate_raw_tensor(a.raw_n.reshape({-1, kGaussianParams})).to(torch::kFloat64);

    StepLoss out;
    out.total = torch::zeros({}, torch::kFloat64);
    for (int v : views) {
        const SplatImages tex = splat_render(gc, scan.views[v].cam, Eigen::Vector3d::Zero());
        const SplatImages nrm = splat_render(gn, scan.views[v].cam, kNormalBackground);
        const LossTerms lt = loss_2d(tex.color, tex.alpha, scan.color[v], scan.mask[v], w);
        const LossTerms ln = loss_2d(nrm.color, nrm.alpha, scan.normal[v], scan.mask[v], w);
        out.total = out.total + lt.total + ln.total;
        out.parts.mse += lt.mse.item<double>();
        out.parts.mask += lt.mask.item<double>();
        out.parts.perc += lt.perc.item<double>();
        out.parts.normal_total += ln.total.item<double>();
    }
    const double n = static_cast<double>(views.size());
    out.total = out.total / n;
    out.parts.total = out.total.item<double>();
    out.parts.mse /= n;
    out.parts.mask /= n;
    out.parts.perc /= n;
    out.parts.normal_total /= n;
    return out;
}

TrainResult train_model(const std::vector<TrainingScan>& scans, const PipelineConfig& config, const TrainHooks& hooks,
                        TwinsModel init) {
    config.model.validate();
    config.train.validate();
    if (scans.empty()) throw InputError("train: no scans");
    const TrainConfig& tc = config.train;
    const LossWeights w{tc.w_mse, tc.w_mask, tc.w_perc};
    for (const auto& s : scans)
        if (static_cast<int>(s.views.size()) != tc.num_views)
            throw InputError("train: scan " + s.id + " was prepared with a different view count");

    torch::set_num_threads(1);
    torch::manual_seed(tc.seed);
    TrainResult result;
    result.model = init ? init : TwinsModel(config.model);
    TwinsModel& model = result.model;
    model->train();
    torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(tc.lr));
    Rng rng(derive_seed(tc.seed, 0x747261696eULL));

    std::vector<int> order(tc.num_views);
    for (int step = 0; step < tc.steps; ++step) {
        const TrainingScan& scan = scans[rng.index(scans.size())];
        std::iota(order.begin(), order.end(), 0);
        for (int i = 0; i < tc.views_per_step; ++i)
            std::swap(order[i], order[i + static_cast<int>(rng.index(static_cast<std::uint64_t>(tc.num_views - i)))]);
        const std::span<const int> views(order.data(), static_cast<std::size_t>(tc.views_per_step));

        double lr = tc.lr;
        if (tc.warmup_steps > 0) lr *= std::min(1.0, static_cast<double>(step + 1) / tc.warmup_steps);
        for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

        opt.zero_grad();
        StepLoss loss;
        try {
            loss = supervision_loss(model, scan, views, w);
        } catch (const NumericError& e) {
            throw NumericError("train: step " + std::to_string(step) + ": " + e.what());
        }
        loss.parts.step = step;
        if (!std::isfinite(loss.parts.total))
            throw NumericError("train: non-finite loss at step " + std::to_string(step) + " (" +
                               format_log_line(loss.parts) + ")");
        loss.total.backward();
        opt.step();

        result.log.push_back(loss.parts);
        if (hooks.on_step) hooks.on_step(loss.parts);
        const bool last = step + 1 == tc.steps;
        if (hooks.on_checkpoint && (last || (tc.checkpoint_every > 0 && (step + 1) % tc.checkpoint_every == 0)))
            hooks.on_checkpoint(step + 1, model);
    }
    model->eval();
    return result;
}

TrainResult train(const DatasetManifest& manifest, const PipelineConfig& config, const std::filesystem::path& out_dir,
                  const std::function<void(const StepLog&)>& progress) {
    std::vector<TrainingScan> scans;
    for (const auto& e : manifest.accepted()) scans.push_back(prepare_training_scan(load_scan(manifest, e), config));
    if (scans.empty()) throw InputError("train: manifest has no accepted entries");

    std::filesystem::create_directories(out_dir);
    std::ofstream log(out_dir / "metrics.csv", std::ios::trunc);
    if (!log) throw IoError("cannot write " + (out_dir / "metrics.csv").string());
    log << kMetricsHeader << '\n';
    TrainHooks hooks;
    hooks.on_step = [&](const StepLog& s) {
        log << format_log_line(s) << '\n';
        log.flush();
        if (progress) progress(s);
    };
    hooks.on_checkpoint = [&](int, TwinsModel& m) { save_checkpoint(m, out_dir / "checkpoint.bin"); };
    TrainResult r = train_model(scans, config, hooks);
    if (config.train.steps == 0) save_checkpoint(r.model, out_dir / "checkpoint.bin");
    return r;
}

} // namespace twinsplat

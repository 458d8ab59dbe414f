#include "twinsplat/splat_renderer.hpp"

#include "twinsplat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace twinsplat {

namespace {

constexpr int kTile = 16;
// Transmittance below this ends a pixel's composite.
constexpr double kMinTransmittance = 1e-10;

struct Prepared {
    Eigen::Vector2d mean;
    Eigen::Matrix2d conic;  // inverse of cov2d
    double depth = 0.0;
    double opacity = 0.0;
    Eigen::Vector3d color;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds
    bool active = false;

    // Kept for the backward pass.
    Eigen::Vector4d quat_unit;
    double quat_norm = 1.0;
    Eigen::Matrix3d rot;
    Eigen::Vector3d scale;
};

Eigen::Matrix3d unit_quat_matrix(const Eigen::Vector4d& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Prepared prepare(std::span<const double> p, const CameraSpec& cam, const Eigen::Matrix<double, 2, 3>& jac,
                 double min_alpha) {
    Prepared g;
    const Eigen::Vector3d center(p[0], p[1], p[2]);
    g.scale = Eigen::Vector3d(p[3], p[4], p[5]);
    const Eigen::Vector4d q(p[6], p[7], p[8], p[9]);
    g.quat_norm = q.norm();
    g.quat_unit = g.quat_norm > 0.0 ? Eigen::Vector4d(q / g.quat_norm) : Eigen::Vector4d(1, 0, 0, 0);
    if (g.quat_norm <= 0.0) g.quat_norm = 1.0;
    g.rot = unit_quat_matrix(g.quat_unit);
    g.opacity = p[10];
    g.color = Eigen::Vector3d(p[11], p[12], p[13]);

    const Eigen::Vector3d uvd = cam.project(center);
    g.mean = uvd.head<2>();
    g.depth = uvd.z();

    const Eigen::Matrix3d m = g.rot * g.scale.asDiagonal();
    const Eigen::Matrix2d cov = jac * (m * m.transpose()) * jac.transpose() +
                                kCovarianceFloor * Eigen::Matrix2d::Identity();
    g.conic = cov.inverse();

    if (!(g.opacity > 0.0) || (min_alpha > 0.0 && g.opacity < min_alpha)) return g;
    if (!g.mean.allFinite() || !g.conic.allFinite()) return g;

    if (min_alpha > 0.0) {
        // alpha' >= min_alpha  <=>  d^T conic d <= 2 ln(opacity / min_alpha)
        const double qmax = 2.0 * std::log(g.opacity / min_alpha);
        const double tr = cov.trace(), det = cov.determinant();
        const double lambda_max = 0.5 * tr + std::sqrt(std::max(0.25 * tr * tr - det, 0.0));
        const double radius = std::sqrt(qmax * lambda_max);
        g.x0 = std::max(0, static_cast<int>(std::floor(g.mean.x() - radius - 0.5)));
        g.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(g.mean.x() + radius - 0.5)));
        g.y0 = std::max(0, static_cast<int>(std::floor(g.mean.y() - radius - 0.5)));
        g.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(g.mean.y() + radius - 0.5)));
    } else {
        g.x0 = 0;
        g.x1 = cam.width - 1;
        g.y0 = 0;
        g.y1 = cam.height - 1;
    }
    g.active = g.x0 <= g.x1 && g.y0 <= g.y1;
    return g;
}

struct Binned {
    std::vector<Prepared> gaussians;
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<int>> tiles;  // front-to-back Gaussian indices per tile
};

Binned bin(std::span<const double> packed, const CameraSpec& cam, double min_alpha) {
    cam.validate();
    if (packed.size() % kGaussianParams != 0)
        throw InputError("render: parameter buffer is not a multiple of 14");
    const std::size_t n = packed.size() / kGaussianParams;
    const auto jac = cam.image_jacobian();

    Binned b;
    b.gaussians.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        b.gaussians.push_back(prepare(packed.subspan(i * kGaussianParams, kGaussianParams), cam, jac, min_alpha));

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int c) { return b.gaussians[a].depth < b.gaussians[c].depth; });

    b.tiles_x = (cam.width + kTile - 1) / kTile;
    b.tiles_y = (cam.height + kTile - 1) / kTile;
    b.tiles.resize(static_cast<std::size_t>(b.tiles_x) * b.tiles_y);
    for (int idx : order) {
        const Prepared& g = b.gaussians[idx];
        if (!g.active) continue;
        for (int ty = g.y0 / kTile; ty <= g.y1 / kTile; ++ty)
            for (int tx = g.x0 / kTile; tx <= g.x1 / kTile; ++tx)
                b.tiles[static_cast<std::size_t>(ty) * b.tiles_x + tx].push_back(idx);
    }
    return b;
}

/// Weight alpha' of Gaussian g at pixel center (px, py); also returns the offset d.
inline double splat_weight(const Prepared& g, double px, double py, Eigen::Vector2d& d) {
    d = Eigen::Vector2d(px, py) - g.mean;
    const double q = d.dot(g.conic * d);
    return g.opacity * std::exp(-0.5 * q);
}

} // namespace

ProjectedGaussian project_gaussian(const Gaussian& g, const CameraSpec& cam) {
    cam.validate();
    const Eigen::Vector3d uvd = cam.project(g.center.cast<double>());
    const auto jac = cam.image_jacobian();
    ProjectedGaussian out;
    out.mean2d = uvd.head<2>();
    out.depth = uvd.z();
    out.cov2d = jac * covariance(g) * jac.transpose() + kCovarianceFloor * Eigen::Matrix2d::Identity();
    return out;
}

RenderOutput render(std::span<const double> packed, const CameraSpec& cam, const Eigen::Vector3d& background,
                    const RenderOptions& opts) {
    const Binned b = bin(packed, cam, opts.min_alpha);
    RenderOutput out;
    out.width = cam.width;
    out.height = cam.height;
    const std::size_t npix = static_cast<std::size_t>(cam.width) * cam.height;
    out.color.assign(npix * 3, 0.0);
    out.alpha.assign(npix, 0.0);
    out.depth.assign(npix, 0.0);

    Eigen::Vector2d d;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const auto& list = b.tiles[static_cast<std::size_t>(y / kTile) * b.tiles_x + x / kTile];
            const double px = x + 0.5, py = y + 0.5;
            double t = 1.0, depth_acc = 0.0;
            Eigen::Vector3d c = Eigen::Vector3d::Zero();
            for (int idx : list) {
                const Prepared& g = b.gaussians[idx];
                if (x < g.x0 || x > g.x1 || y < g.y0 || y > g.y1) continue;
                const double a = splat_weight(g, px, py, d);
                if (a < opts.min_alpha || a <= 0.0) continue;
                c += g.color * (a * t);
                depth_acc += g.depth * a * t;
                t *= 1.0 - a;
                if (t < kMinTransmittance) break;
            }
            const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
            const Eigen::Vector3d rgb = c + background * t;
            for (int k = 0; k < 3; ++k) out.color[pix * 3 + k] = rgb[k];
            out.alpha[pix] = 1.0 - t;
            out.depth[pix] = out.alpha[pix] > 0.0 ? depth_acc / out.alpha[pix] : 0.0;
        }
    }
    return out;
}

RenderOutput render(const GaussianSet& set, const CameraSpec& cam, const Eigen::Vector3d& background,
                    const RenderOptions& opts) {
    const std::vector<double> packed = set.packed();
    return render(packed, cam, background, opts);
}

std::vector<RenderOutput> render_views(const GaussianSet& set, std::span<const CameraSpec> cams,
                                       const Eigen::Vector3d& background, const RenderOptions& opts) {
    const std::vector<double> packed = set.packed();
    std::vector<RenderOutput> outs;
    outs.reserve(cams.size());
    for (const auto& cam : cams) outs.push_back(render(packed, cam, background, opts));
    return outs;
}

std::vector<double> render_backward(std::span<const double> packed, const CameraSpec& cam,
                                    const Eigen::Vector3d& background, std::span<const double> grad_color,
                                    std::span<const double> grad_alpha, const RenderOptions& opts) {
    const Binned b = bin(packed, cam, opts.min_alpha);
    const std::size_t npix = static_cast<std::size_t>(cam.width) * cam.height;
    if (grad_color.size() != npix * 3 || grad_alpha.size() != npix)
        throw InputError("render_backward: upstream gradient size does not match the camera raster");

    const std::size_t n = b.gaussians.size();
    std::vector<Eigen::Vector2d> g_mean(n, Eigen::Vector2d::Zero());
    std::vector<Eigen::Matrix2d> g_conic(n, Eigen::Matrix2d::Zero());
    std::vector<double> g_opacity(n, 0.0);
    std::vector<Eigen::Vector3d> g_color(n, Eigen::Vector3d::Zero());

    struct Hit {
        int idx;
        double alpha;
        double gauss;  // exp(-q/2)
        double trans;  // transmittance before this Gaussian
        Eigen::Vector2d d;
    };
    std::vector<Hit> hits;
    Eigen::Vector2d d;

    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
            const Eigen::Vector3d gc(grad_color[pix * 3], grad_color[pix * 3 + 1], grad_color[pix * 3 + 2]);
            const double ga = grad_alpha[pix];
            if (gc.isZero(0.0) && ga == 0.0) continue;

            const auto& list = b.tiles[static_cast<std::size_t>(y / kTile) * b.tiles_x + x / kTile];
            const double px = x + 0.5, py = y + 0.5;
            hits.clear();
            double t = 1.0;
            for (int idx : list) {
                const Prepared& g = b.gaussians[idx];
                if (x < g.x0 || x > g.x1 || y < g.y0 || y > g.y1) continue;
                const double a = splat_weight(g, px, py, d);
                if (a < opts.min_alpha || a <= 0.0) continue;
                hits.push_back({idx, a, a / g.opacity, t, d});
                t *= 1.0 - a;
                if (t < kMinTransmittance) break;
            }

            // Back-to-front: `behind` is the color composited after the
            // current Gaussian, `after` the transmittance product past it.
            Eigen::Vector3d behind = background;
            double after = 1.0;
            for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
                const Prepared& g = b.gaussians[it->idx];
                const double a = it->alpha;
                const double dl_da = it->trans * (gc.dot(g.color - behind) + ga * after);
                g_color[it->idx] += gc * (a * it->trans);

                g_opacity[it->idx] += dl_da * it->gauss;
                const Eigen::Vector2d conic_d = g.conic * it->d;
                g_mean[it->idx] += dl_da * a * conic_d;
                g_conic[it->idx] += (-0.5 * dl_da * a) * (it->d * it->d.transpose());

                behind = g.color * a + behind * (1.0 - a);
                after *= 1.0 - a;
            }
        }
    }

    const auto jac = cam.image_jacobian();
    std::vector<double> grads(n * kGaussianParams, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Prepared& g = b.gaussians[i];
        double* out = grads.data() + i * kGaussianParams;

        const Eigen::Vector3d d_center = jac.transpose() * g_mean[i];
        const Eigen::Matrix2d d_cov = -g.conic * g_conic[i] * g.conic;
        const Eigen::Matrix3d d_sigma = jac.transpose() * d_cov * jac;
        const Eigen::Matrix3d m = g.rot * g.scale.asDiagonal();
        const Eigen::Matrix3d d_m = (d_sigma + d_sigma.transpose()) * m;

        Eigen::Vector3d d_scale;
        for (int k = 0; k < 3; ++k) d_scale[k] = d_m.col(k).dot(g.rot.col(k));
        const Eigen::Matrix3d d_rot = d_m * g.scale.asDiagonal();

        const double w = g.quat_unit[0], x = g.quat_unit[1], y = g.quat_unit[2], z = g.quat_unit[3];
        const auto& G = d_rot;
        Eigen::Vector4d d_qhat;
        d_qhat[0] = 2 * (-G(0, 1) * z + G(0, 2) * y + G(1, 0) * z - G(1, 2) * x - G(2, 0) * y + G(2, 1) * x);
        d_qhat[1] = 2 * (G(0, 1) * y + G(0, 2) * z + G(1, 0) * y - 2 * G(1, 1) * x - G(1, 2) * w +
                         G(2, 0) * z + G(2, 1) * w - 2 * G(2, 2) * x);
        d_qhat[2] = 2 * (-2 * G(0, 0) * y + G(0, 1) * x + G(0, 2) * w + G(1, 0) * x + G(1, 2) * z -
                         G(2, 0) * w + G(2, 1) * z - 2 * G(2, 2) * y);
        d_qhat[3] = 2 * (-2 * G(0, 0) * z - G(0, 1) * w + G(0, 2) * x + G(1, 0) * w - 2 * G(1, 1) * z +
                         G(1, 2) * y + G(2, 0) * x + G(2, 1) * y);
        const Eigen::Vector4d d_q = (d_qhat - g.quat_unit * g.quat_unit.dot(d_qhat)) / g.quat_norm;

        for (int k = 0; k < 3; ++k) {
            out[k] = d_center[k];
            out[3 + k] = d_scale[k];
            out[11 + k] = g_color[i][k];
        }
        for (int k = 0; k < 4; ++k) out[6 + k] = d_q[k];
        out[10] = g_opacity[i];
    }
    return grads;
}

} // namespace twinsplat

#include "twinsplat/metrics.hpp"

#include "twinsplat/errors.hpp"
#include "twinsplat/random.hpp"
#include "twinsplat/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace twinsplat {

namespace {

void require_nonempty(std::span<const Eigen::Vector3d> pts, const char* what) {
    if (pts.empty()) throw InputError(std::string(what) + ": empty point cloud");
}

void require_unit_normals(std::span<const Eigen::Vector3d> normals, const char* what) {
    for (std::size_t i = 0; i < normals.size(); ++i) {
        const double n = normals[i].norm();
        if (!(n > 0.0)) throw InputError(std::string(what) + ": zero-length normal at index " + std::to_string(i));
        if (std::abs(n - 1.0) > 1e-3)
            throw InputError(std::string(what) + ": normal " + std::to_string(i) + " is not unit length");
    }
}

std::vector<double> nn_distances(std::span<const Eigen::Vector3d> from, std::span<const Eigen::Vector3d> to) {
    const KdTree tree(to);
    std::vector<double> d(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) d[i] = std::sqrt(tree.nearest(from[i]).squared_distance);
    return d;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) throw InputError(std::string(what) + ": image shapes differ");
    if (a.data.empty()) throw InputError(std::string(what) + ": empty image");
}

} // namespace

SurfaceSamples sample_surface(const TriMesh& mesh, int n, std::uint64_t seed) {
    if (n < 1) throw InputError("sample_surface: sample count must be >= 1");
    if (mesh.empty()) throw InputError("sample_surface: empty mesh");
    mesh.validate();
    const auto areas = mesh.face_areas();
    std::vector<double> cdf(areas.size());
    std::partial_sum(areas.begin(), areas.end(), cdf.begin());
    const double total = cdf.back();
    if (!(total > 0.0)) throw InputError("sample_surface: mesh has zero area");
    const auto face_normals = mesh.face_normals();

    Rng rng(seed);
    SurfaceSamples out;
    out.points.reserve(n);
    out.normals.reserve(n);
    out.faces.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform() * total;
        int f = static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        f = std::min(f, static_cast<int>(cdf.size()) - 1);
        while (areas[f] <= 0.0 && f > 0) --f;
        const double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
        const double wa = 1.0 - r1, wb = r1 * (1.0 - r2), wc = r1 * r2;
        const auto& face = mesh.faces[f];
        out.points.push_back(wa * mesh.vertices[face[0]] + wb * mesh.vertices[face[1]] + wc * mesh.vertices[face[2]]);
        out.normals.push_back(face_normals[f]);
        out.faces.push_back(f);
    }
    return out;
}

std::pair<double, double> chamfer(std::span<const Eigen::Vector3d> pred, std::span<const Eigen::Vector3d> gt) {
    require_nonempty(pred, "chamfer");
    require_nonempty(gt, "chamfer");
    return {mean(nn_distances(pred, gt)), mean(nn_distances(gt, pred))};
}

double normal_consistency(std::span<const Eigen::Vector3d> pred_points, std::span<const Eigen::Vector3d> pred_normals,
                          std::span<const Eigen::Vector3d> gt_points, std::span<const Eigen::Vector3d> gt_normals) {
    require_nonempty(pred_points, "normal_consistency");
    require_nonempty(gt_points, "normal_consistency");
    if (pred_points.size() != pred_normals.size() || gt_points.size() != gt_normals.size())
        throw InputError("normal_consistency: point and normal counts differ");
    require_unit_normals(pred_normals, "normal_consistency");
    require_unit_normals(gt_normals, "normal_consistency");

    auto directed = [](std::span<const Eigen::Vector3d> from, std::span<const Eigen::Vector3d> from_n,
                       std::span<const Eigen::Vector3d> to, std::span<const Eigen::Vector3d> to_n) {
        const KdTree tree(to);
        double s = 0.0;
        for (std::size_t i = 0; i < from.size(); ++i) s += from_n[i].dot(to_n[tree.nearest(from[i]).index]);
        return s / static_cast<double>(from.size());
    };
    const double nc = 0.5 * (directed(pred_points, pred_normals, gt_points, gt_normals) +
                             directed(gt_points, gt_normals, pred_points, pred_normals));
    return std::clamp(nc, -1.0, 1.0);
}

double f_score(std::span<const Eigen::Vector3d> pred, std::span<const Eigen::Vector3d> gt, double tau) {
    require_nonempty(pred, "f_score");
    require_nonempty(gt, "f_score");
    if (!(tau > 0.0)) throw InputError("f_score: tau must be positive");
    auto share_within = [tau](const std::vector<double>& d) {
        const auto hits = std::count_if(d.begin(), d.end(), [tau](double x) { return x < tau; });
        return static_cast<double>(hits) / static_cast<double>(d.size());
    };
    const double precision = share_within(nn_distances(pred, gt));
    const double recall = share_within(nn_distances(gt, pred));
    if (precision + recall <= 0.0) return 0.0;
    return 100.0 * 2.0 * precision * recall / (precision + recall);
}

std::pair<double, double> surface_chamfer(const TriMesh& a, const TriMesh& b, int n, std::uint64_t seed) {
    const SurfaceSamples sa = sample_surface(a, n, seed);
    const SurfaceSamples sb = sample_surface(b, n, derive_seed(seed, 1));
    const TriangleBvh ta(a), tb(b);
    double ab = 0.0, ba = 0.0;
    for (const auto& p : sa.points) ab += tb.distance(p);
    for (const auto& p : sb.points) ba += ta.distance(p);
    return {ab / n, ba / n};
}

PerceptualProxy::PerceptualProxy() {
    Rng rng(kSeed);
    for (int s = 0; s < kStages; ++s) {
        const int cin = kChannels[s], cout = kChannels[s + 1];
        const double stddev = std::sqrt(2.0 / (cin * 9));
        weights_[s].resize(static_cast<std::size_t>(cout) * cin * 9);
        for (auto& w : weights_[s]) w = static_cast<float>(rng.normal(0.0, stddev));
        biases_[s].resize(cout);
        for (auto& b : biases_[s]) b = static_cast<float>(rng.normal(0.0, 0.1));
    }
}

const PerceptualProxy& PerceptualProxy::instance() {
    static const PerceptualProxy proxy;
    return proxy;
}

std::vector<PerceptualProxy::Features> PerceptualProxy::features(const Image& img) const {
    if (img.channels != 3) throw InputError("PerceptualProxy: expected a 3-channel image");
    Features cur{img.width, img.height, 3, {}};
    cur.data.resize(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) cur.data[i] = 2.0 * img.data[i] - 1.0;

    std::vector<Features> out;
    for (int s = 0; s < kStages; ++s) {
        const int cin = kChannels[s], cout = kChannels[s + 1];
        Features next{(cur.width - 1) / 2 + 1, (cur.height - 1) / 2 + 1, cout, {}};
        next.data.assign(static_cast<std::size_t>(next.width) * next.height * cout, 0.0);
        const auto& w = weights_[s];
        for (int y = 0; y < next.height; ++y) {
            for (int x = 0; x < next.width; ++x) {
                double* o = &next.data[(static_cast<std::size_t>(y) * next.width + x) * cout];
                for (int co = 0; co < cout; ++co) o[co] = biases_[s][co];
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = 2 * y - 1 + ky;
                    if (iy < 0 || iy >= cur.height) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = 2 * x - 1 + kx;
                        if (ix < 0 || ix >= cur.width) continue;
                        const double* in = &cur.data[(static_cast<std::size_t>(iy) * cur.width + ix) * cin];
                        for (int co = 0; co < cout; ++co) {
                            const float* wk = &w[((static_cast<std::size_t>(co) * cin) * 3 + ky) * 3 + kx];
                            double acc = 0.0;
                            for (int ci = 0; ci < cin; ++ci) acc += wk[static_cast<std::size_t>(ci) * 9] * in[ci];
                            o[co] += acc;
                        }
                    }
                }
                for (int co = 0; co < cout; ++co) o[co] = o[co] >= 0.0 ? o[co] : kLeakySlope * o[co];
            }
        }
        out.push_back(next);
        cur = std::move(next);
    }
    return out;
}

double PerceptualProxy::distance(const Image& a, const Image& b) const {
    require_same_shape(a, b, "PerceptualProxy::distance");
    const auto fa = features(a), fb = features(b);
    double total = 0.0;
    for (int s = 0; s < kStages; ++s) {
        const int c = fa[s].channels;
        const std::size_t npix = static_cast<std::size_t>(fa[s].width) * fa[s].height;
        double acc = 0.0;
        for (std::size_t p = 0; p < npix; ++p) {
            const double* x = &fa[s].data[p * c];
            const double* y = &fb[s].data[p * c];
            double nx = 0.0, ny = 0.0;
            for (int k = 0; k < c; ++k) {
                nx += x[k] * x[k];
                ny += y[k] * y[k];
            }
            nx = std::sqrt(nx + kNormEps);
            ny = std::sqrt(ny + kNormEps);
            for (int k = 0; k < c; ++k) {
                const double d = x[k] / nx - y[k] / ny;
                acc += d * d;
            }
        }
        total += acc / static_cast<double>(npix);
    }
    return total;
}

double psnr(const Image& pred, const Image& gt) {
    require_same_shape(pred, gt, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - gt.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.data.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& pred, const Image& gt) {
    require_same_shape(pred, gt, "ssim");
    constexpr int kWin = 11;
    constexpr int kHalf = kWin / 2;
    if (pred.width < kWin || pred.height < kWin) throw InputError("ssim: images must be at least 11x11");
    double window[kWin][kWin];
    double wsum = 0.0;
    for (int y = 0; y < kWin; ++y)
        for (int x = 0; x < kWin; ++x) {
            const double dx = x - kHalf, dy = y - kHalf;
            window[y][x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            wsum += window[y][x];
        }
    for (auto& row : window)
        for (double& v : row) v /= wsum;

    const double c1 = (0.01 * 1.0) * (0.01 * 1.0), c2 = (0.03 * 1.0) * (0.03 * 1.0);
    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < pred.channels; ++c) {
        for (int cy = kHalf; cy < pred.height - kHalf; ++cy) {
            for (int cx = kHalf; cx < pred.width - kHalf; ++cx) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int y = 0; y < kWin; ++y)
                    for (int x = 0; x < kWin; ++x) {
                        const double w = window[y][x];
                        const double a = pred.at(cx - kHalf + x, cy - kHalf + y, c);
                        const double b = gt.at(cx - kHalf + x, cy - kHalf + y, c);
                        ma += w * a;
                        mb += w * b;
                        saa += w * a * a;
                        sbb += w * b * b;
                        sab += w * a * b;
                    }
                const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

ImageScores image_metrics(const Image& pred, const Image& gt) {
    require_same_shape(pred, gt, "image_metrics");
    return {psnr(pred, gt), ssim(pred, gt), PerceptualProxy::instance().distance(pred, gt)};
}

} // namespace twinsplat

#include "twinsplat/remesher.hpp"

#include "twinsplat/errors.hpp"
#include "twinsplat/mesh_raster.hpp"
#include "twinsplat/splat_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace twinsplat {

namespace {

using torch::indexing::Slice;

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);
const auto kI64 = torch::TensorOptions().dtype(torch::kInt64);

torch::Tensor faces_tensor(const std::vector<Eigen::Vector3i>& faces) {
    torch::Tensor t = torch::empty({static_cast<int64_t>(faces.size()), 3}, kI64);
    auto acc = t.accessor<int64_t, 2>();
    for (std::size_t i = 0; i < faces.size(); ++i)
        for (int k = 0; k < 3; ++k) acc[static_cast<int64_t>(i)][k] = faces[i][k];
    return t;
}

torch::Tensor vertices_tensor(const std::vector<Eigen::Vector3d>& verts) {
    torch::Tensor t = torch::empty({static_cast<int64_t>(verts.size()), 3}, kF64);
    auto acc = t.accessor<double, 2>();
    for (std::size_t i = 0; i < verts.size(); ++i)
        for (int k = 0; k < 3; ++k) acc[static_cast<int64_t>(i)][k] = verts[i][k];
    return t;
}

std::vector<Eigen::Vector3d> to_points(const torch::Tensor& v) {
    const torch::Tensor c = v.detach().to(torch::kFloat64).contiguous();
    auto acc = c.accessor<double, 2>();
    std::vector<Eigen::Vector3d> out(static_cast<std::size_t>(c.size(0)));
    for (int64_t i = 0; i < c.size(0); ++i) out[static_cast<std::size_t>(i)] = {acc[i][0], acc[i][1], acc[i][2]};
    return out;
}

/// Edges where the projected surface folds over (adjacent faces disagree on facing) or ends (boundary).
std::vector<std::pair<int, int>> contour_edges(const std::vector<Eigen::Vector3i>& faces,
                                               const std::vector<Eigen::Vector2d>& uv) {
    struct HalfEdge {
        int a, b;
        bool front;
    };
    std::vector<HalfEdge> edges;
    edges.reserve(faces.size() * 3);
    for (const auto& f : faces) {
        const Eigen::Vector2d e1 = uv[f[1]] - uv[f[0]], e2 = uv[f[2]] - uv[f[0]];
        const bool front = e1.x() * e2.y() - e1.y() * e2.x() > 0.0;
        for (int k = 0; k < 3; ++k) {
            const int a = f[k], b = f[(k + 1) % 3];
            edges.push_back({std::min(a, b), std::max(a, b), front});
        }
    }
    std::sort(edges.begin(), edges.end(), [](const HalfEdge& x, const HalfEdge& y) {
        return std::tie(x.a, x.b, x.front) < std::tie(y.a, y.b, y.front);
    });
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < edges.size();) {
        std::size_t j = i;
        while (j < edges.size() && edges[j].a == edges[i].a && edges[j].b == edges[i].b) ++j;
        // Sorted by facing, so mixed facing shows up as differing ends of the run.
        if (j - i == 1 || edges[i].front != edges[j - 1].front) out.emplace_back(edges[i].a, edges[i].b);
        i = j;
    }
    return out;
}

double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const Eigen::Vector2d ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

} // namespace

MeshRenderTensors render_mesh(const torch::Tensor& vertices, const std::vector<Eigen::Vector3i>& faces,
                              const CameraSpec& cam) {
    if (faces.empty()) throw InputError("render_mesh: empty mesh");
    if (vertices.dim() != 2 || vertices.size(1) != 3) throw InputError("render_mesh: vertices must be V x 3");
    cam.validate();
    const torch::Tensor v = vertices.to(torch::kFloat64);
    TriMesh hard;
    hard.vertices = to_points(v);
    hard.faces = faces;
    const MeshRaster raster = rasterize(hard, cam);
    const int W = cam.width, H = cam.height;
    const std::size_t npix = static_cast<std::size_t>(W) * H;

    // Image-plane positions, differentiable.
    torch::Tensor R = torch::empty({3, 3}, kF64), T = torch::empty({3}, kF64);
    for (int r = 0; r < 3; ++r) {
        T[r] = cam.translation[r];
        for (int c = 0; c < 3; ++c) R[r][c] = cam.rotation(r, c);
    }
    const torch::Tensor q = v.matmul(R.t()) + T;
    const torch::Tensor u = W / 2.0 + q.index({Slice(), 0}) / cam.pixel_scale;
    const torch::Tensor w = H / 2.0 - q.index({Slice(), 1}) / cam.pixel_scale;
    std::vector<Eigen::Vector2d> uv(hard.vertices.size());
    for (std::size_t i = 0; i < uv.size(); ++i) uv[i] = cam.project(hard.vertices[i]).head<2>();

    // Smooth vertex normals.
    const torch::Tensor F = faces_tensor(faces);
    const torch::Tensor fa = F.index({Slice(), 0}), fb = F.index({Slice(), 1}), fc = F.index({Slice(), 2});
    const torch::Tensor pa = v.index({fa}), pb = v.index({fb}), pc = v.index({fc});
    const torch::Tensor fn = torch::cross(pb - pa, pc - pa, 1);
    torch::Tensor vn = torch::zeros_like(v).index_add(0, fa, fn).index_add(0, fb, fn).index_add(0, fc, fn);
    vn = vn / vn.norm(2, 1, true).clamp_min(1e-12);

    // Covered pixels.
    std::vector<int64_t> pix, pix_face;
    std::vector<double> px, py;
    for (std::size_t p = 0; p < npix; ++p) {
        if (raster.face[p] < 0) continue;
        pix.push_back(static_cast<int64_t>(p));
        pix_face.push_back(raster.face[p]);
        px.push_back(static_cast<double>(p % W) + 0.5);
        py.push_back(static_cast<double>(p / W) + 0.5);
    }
    torch::Tensor normal = torch::full({static_cast<int64_t>(npix), 3}, 0.5, kF64);
    torch::Tensor mask = torch::zeros({static_cast<int64_t>(npix)}, kF64);
    if (!pix.empty()) {
        const torch::Tensor pidx = torch::tensor(pix, kI64);
        const torch::Tensor tri = F.index({torch::tensor(pix_face, kI64)});
        const torch::Tensor i0 = tri.index({Slice(), 0}), i1 = tri.index({Slice(), 1}), i2 = tri.index({Slice(), 2});
        const torch::Tensor X = torch::tensor(px, kF64), Y = torch::tensor(py, kF64);
        const torch::Tensor ua = u.index({i0}), ub = u.index({i1}), uc = u.index({i2});
        const torch::Tensor va = w.index({i0}), vb = w.index({i1}), vc = w.index({i2});
        const torch::Tensor area = (ub - ua) * (vc - va) - (vb - va) * (uc - ua);
        const torch::Tensor b0 = ((ub - X) * (vc - Y) - (vb - Y) * (uc - X)) / area;
        const torch::Tensor b1 = ((uc - X) * (va - Y) - (vc - Y) * (ua - X)) / area;
        const torch::Tensor b2 = 1.0 - b0 - b1;
        torch::Tensor n = b0.unsqueeze(1) * vn.index({i0}) + b1.unsqueeze(1) * vn.index({i1}) +
                          b2.unsqueeze(1) * vn.index({i2});
        n = n / n.norm(2, 1, true).clamp_min(1e-12);
        normal = normal.index_put({pidx}, (n + 1.0) * 0.5);
        mask = mask.index_put({pidx}, torch::ones({pidx.size(0)}, kF64));
    }

    // Soft silhouette: every pixel within kReach of a contour edge, plus any pixel next to a coverage change.
    // Using a distance band rather than the coverage band alone keeps the mask continuous when coverage flips.
    constexpr double kReach = 3.0;
    const auto contours = contour_edges(faces, uv);
    std::vector<double> best(npix, std::numeric_limits<double>::infinity());
    std::vector<int> best_edge(npix, -1);
    auto consider = [&](std::size_t p, int e) {
        const Eigen::Vector2d c(static_cast<double>(p % W) + 0.5, static_cast<double>(p / W) + 0.5);
        const double d = segment_distance(c, uv[contours[e].first], uv[contours[e].second]);
        if (d < best[p]) best[p] = d, best_edge[p] = e;
    };
    for (int e = 0; e < static_cast<int>(contours.size()); ++e) {
        const Eigen::Vector2d& a = uv[contours[e].first];
        const Eigen::Vector2d& b = uv[contours[e].second];
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - kReach)));
        const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max(a.x(), b.x()) + kReach)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()) - kReach)));
        const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max(a.y(), b.y()) + kReach)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) consider(static_cast<std::size_t>(y) * W + x, e);
    }
    std::vector<int64_t> band;
    for (int y = 0; y < H && !contours.empty(); ++y)
        for (int x = 0; x < W; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * W + x;
            const bool c = raster.covered(x, y);
            const bool edge = (x > 0 && raster.covered(x - 1, y) != c) || (x + 1 < W && raster.covered(x + 1, y) != c) ||
                              (y > 0 && raster.covered(x, y - 1) != c) || (y + 1 < H && raster.covered(x, y + 1) != c);
            if (edge && best_edge[p] < 0)
                for (int e = 0; e < static_cast<int>(contours.size()); ++e) consider(p, e);
            if (edge || best[p] <= kReach) band.push_back(static_cast<int64_t>(p));
        }
    if (!band.empty()) {
        std::vector<int64_t> ea, eb;
        std::vector<double> bx, by, sign;
        for (auto p64 : band) {
            const auto p = static_cast<std::size_t>(p64);
            ea.push_back(contours[best_edge[p]].first);
            eb.push_back(contours[best_edge[p]].second);
            bx.push_back(static_cast<double>(p % W) + 0.5);
            by.push_back(static_cast<double>(p / W) + 0.5);
            sign.push_back(raster.face[p] >= 0 ? 1.0 : -1.0);
        }
        const torch::Tensor A = torch::stack({u.index({torch::tensor(ea, kI64)}), w.index({torch::tensor(ea, kI64)})}, 1);
        const torch::Tensor B = torch::stack({u.index({torch::tensor(eb, kI64)}), w.index({torch::tensor(eb, kI64)})}, 1);
        const torch::Tensor P = torch::stack({torch::tensor(bx, kF64), torch::tensor(by, kF64)}, 1);
        const torch::Tensor AB = B - A;
        const torch::Tensor t =
            (((P - A) * AB).sum(1) / (AB * AB).sum(1).clamp_min(1e-18)).clamp(0.0, 1.0).unsqueeze(1);
        const torch::Tensor d = torch::sqrt((P - (A + t * AB)).pow(2).sum(1) + 1e-12);
        const torch::Tensor soft = torch::sigmoid(kSilhouetteSharpness * torch::tensor(sign, kF64) * d);
        const torch::Tensor bidx = torch::tensor(band, kI64);
        mask = mask.index_put({bidx}, soft);
        // Fade band normals into the background with the soft mask so the map stays continuous as
        // pixels change coverage; uncovered pixels take the normal interpolated along their contour edge.
        torch::Tensor ne = (1.0 - t) * vn.index({torch::tensor(ea, kI64)}) + t * vn.index({torch::tensor(eb, kI64)});
        ne = ne / ne.norm(2, 1, true).clamp_min(1e-12);
        const torch::Tensor covered = torch::tensor(sign, kF64).gt(0.0).unsqueeze(1);
        const torch::Tensor base = torch::where(covered, normal.index({bidx}), (ne + 1.0) * 0.5);
        normal = normal.index_put({bidx}, soft.unsqueeze(1) * base + (1.0 - soft.unsqueeze(1)) * 0.5);
    }
    return {normal.reshape({H, W, 3}), mask.reshape({H, W})};
}

MeshRenderTensors render_mesh(const TriMesh& mesh, const CameraSpec& cam) {
    if (mesh.empty()) throw InputError("render_mesh: empty mesh");
    mesh.validate();
    torch::NoGradGuard guard;
    return render_mesh(vertices_tensor(mesh.vertices), mesh.faces, cam);
}

std::vector<RemeshTarget> targets_from_gaussians(const GaussianSet& normal_gaussians, std::span<const CameraSpec> cams) {
    if (normal_gaussians.empty()) throw InputError("targets_from_gaussians: empty Gaussian set");
    std::vector<RemeshTarget> out;
    const std::vector<double> packed = normal_gaussians.packed();
    for (const auto& cam : cams) {
        const RenderOutput r = render(packed, cam, Eigen::Vector3d::Constant(0.5));
        RemeshTarget t{cam, torch::tensor(r.color, kF64).reshape({cam.height, cam.width, 3}),
                       torch::tensor(r.alpha, kF64).reshape({cam.height, cam.width})};
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<RemeshTarget> targets_from_mesh(const TriMesh& mesh, std::span<const CameraSpec> cams) {
    std::vector<RemeshTarget> out;
    for (const auto& cam : cams) {
        MeshRenderTensors m = render_mesh(mesh, cam);
        out.push_back({cam, m.normal, m.mask});
    }
    return out;
}

namespace {

struct Laplacian {
    torch::Tensor src, dst, degree;  // directed edges dst <- src
    double edge_scale = 1.0;         // squared mean edge length of the reference mesh

    explicit Laplacian(const TriMesh& mesh) {
        std::vector<std::pair<int, int>> e;
        for (const auto& f : mesh.faces)
            for (int k = 0; k < 3; ++k) {
                e.emplace_back(f[k], f[(k + 1) % 3]);
                e.emplace_back(f[(k + 1) % 3], f[k]);
            }
        std::sort(e.begin(), e.end());
        e.erase(std::unique(e.begin(), e.end()), e.end());
        std::vector<int64_t> s, d;
        for (const auto& [a, b] : e) d.push_back(a), s.push_back(b);
        src = torch::tensor(s, kI64);
        dst = torch::tensor(d, kI64);
        degree = torch::zeros({static_cast<int64_t>(mesh.vertices.size())}, kF64)
                     .index_add(0, dst, torch::ones({dst.size(0)}, kF64))
                     .clamp_min(1.0)
                     .unsqueeze(1);
        const double len = mesh.mean_edge_length();
        edge_scale = len > 0.0 ? len * len : 1.0;
    }

    [[nodiscard]] torch::Tensor residual(const torch::Tensor& v) const {
        return torch::zeros_like(v).index_add(0, dst, v.index({src})) / degree - v;
    }
};

torch::Tensor loss_with(const torch::Tensor& vertices, const TriMesh& reference, std::span<const RemeshTarget> targets,
                        double laplacian_weight, const Laplacian& lap) {
    torch::Tensor data = torch::zeros({}, kF64);
    for (const auto& t : targets) {
        const MeshRenderTensors r = render_mesh(vertices, reference.faces, t.cam);
        data = data + (r.normal - t.normal).pow(2).mean() + (r.mask - t.mask).pow(2).mean();
    }
    if (!targets.empty()) data = data / static_cast<double>(targets.size());
    if (laplacian_weight == 0.0) return data;
    return data + laplacian_weight * lap.residual(vertices).pow(2).sum(1).mean() / lap.edge_scale;
}

} // namespace

torch::Tensor remesh_loss(const torch::Tensor& vertices, const TriMesh& reference, std::span<const RemeshTarget> targets,
                          double laplacian_weight) {
    return loss_with(vertices, reference, targets, laplacian_weight, Laplacian(reference));
}

RefineResult refine_mesh(const TriMesh& mesh, std::span<const RemeshTarget> targets, const RemeshConfig& config) {
    config.validate();
    if (mesh.empty()) throw InputError("refine_mesh: empty mesh");
    mesh.validate();
    RefineResult result;
    result.mesh = mesh;
    const Laplacian lap(mesh);

    auto evaluate = [&](const torch::Tensor& v) {
        torch::Tensor x = v.detach().clone().requires_grad_(true);
        torch::Tensor loss = loss_with(x, mesh, targets, config.laplacian_weight, lap);
        loss.backward();
        return std::pair<double, torch::Tensor>{loss.item<double>(), x.grad().detach()};
    };

    torch::Tensor v = vertices_tensor(mesh.vertices);
    auto [loss, grad] = evaluate(v);
    if (!std::isfinite(loss)) throw NumericError("refine_mesh: non-finite loss at step 0");
    result.losses.push_back(loss);

    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    constexpr int kMaxHalvings = 10;
    torch::Tensor m = torch::zeros_like(v), s = torch::zeros_like(v);
    int first = 1;  // step at which the moments were last reset
    for (int step = 1; step <= config.steps; ++step) {
        m = kBeta1 * m + (1.0 - kBeta1) * grad;
        s = kBeta2 * s + (1.0 - kBeta2) * grad * grad;
        const torch::Tensor direction =
            (m / (1.0 - std::pow(kBeta1, step - first + 1))) / ((s / (1.0 - std::pow(kBeta2, step - first + 1))).sqrt() + kEps);
        auto try_direction = [&](const torch::Tensor& dir) {
            double eta = config.step_size;
            for (int h = 0; h <= kMaxHalvings; ++h, eta *= 0.5) {
                const torch::Tensor candidate = v - eta * dir;
                if (!torch::isfinite(candidate).all().item<bool>()) continue;
                auto [c_loss, c_grad] = evaluate(candidate);
                if (std::isfinite(c_loss) && c_loss <= loss) {
                    v = candidate;
                    loss = c_loss;
                    grad = c_grad;
                    return true;
                }
            }
            return false;
        };
        bool accepted = try_direction(direction);
        if (!accepted) {
            // Stale moments can point uphill; retry once from fresh moments (a normalized gradient step).
            m = (1.0 - kBeta1) * grad;
            s = (1.0 - kBeta2) * grad * grad;
            first = step;
            accepted = try_direction(grad / (grad.abs() + kEps));
        }
        if (!accepted) {
            result.stalled = true;
            break;
        }
        ++result.accepted_steps;
        result.losses.push_back(loss);
    }
    result.mesh.vertices = to_points(v);
    return result;
}

RefineResult refine_mesh(const TriMesh& mesh, const GaussianSet& normal_gaussians, const RemeshConfig& config) {
    config.validate();
    const std::vector<CameraSpec> cams = orbit_cameras(config.num_views, config.render_resolution);
    const std::vector<RemeshTarget> targets = targets_from_gaussians(normal_gaussians, cams);
    return refine_mesh(mesh, targets, config);
}

TriMesh remesh(const GaussianSet& normal_gaussians, const RemeshConfig& config) {
    return refine_mesh(init_coarse_mesh(normal_gaussians, config), normal_gaussians, config).mesh;
}

} // namespace twinsplat

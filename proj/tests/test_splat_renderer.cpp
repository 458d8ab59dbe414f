#include "test_support.hpp"
#include "twinsplat/errors.hpp"
#include "twinsplat/splat_renderer.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>

using namespace twinsplat;

namespace {

CameraSpec identity_camera(int res, double pixel_scale) {
    CameraSpec cam;
    cam.width = cam.height = res;
    cam.pixel_scale = pixel_scale;
    return cam;
}

Gaussian isotropic(const Eigen::Vector3f& c, float s, float opacity, const Eigen::Vector3f& color) {
    Gaussian g;
    g.center = c;
    g.scale = Eigen::Vector3f::Constant(s);
    g.opacity = opacity;
    g.color = color;
    return g;
}

double pixel_loss(const RenderOutput& r, const std::vector<double>& tc, const std::vector<double>& ta) {
    double l = 0.0;
    for (std::size_t i = 0; i < r.color.size(); ++i) l += (r.color[i] - tc[i]) * (r.color[i] - tc[i]);
    for (std::size_t i = 0; i < r.alpha.size(); ++i) l += (r.alpha[i] - ta[i]) * (r.alpha[i] - ta[i]);
    return l;
}

} // namespace

TEST_CASE("projection of an isotropic Gaussian at the origin") {
    const CameraSpec cam = identity_camera(128, 1.0 / 128.0);
    const Gaussian g = isotropic({0, 0, 0}, 0.1f, 1.0f, {1, 1, 1});
    const ProjectedGaussian p = project_gaussian(g, cam);
    CHECK(p.mean2d.x() == doctest::Approx(64.0));
    CHECK(p.mean2d.y() == doctest::Approx(64.0));
    const double var = std::pow(0.1f * 128.0, 2) + kCovarianceFloor;
    CHECK(p.cov2d(0, 0) == doctest::Approx(var).epsilon(1e-6));
    CHECK(p.cov2d(1, 1) == doctest::Approx(var).epsilon(1e-6));
    CHECK(std::abs(p.cov2d(0, 1)) < 1e-9);

    Gaussian moved = g;
    moved.center.x() += 0.5f;
    CHECK(project_gaussian(moved, cam).mean2d.x() - p.mean2d.x() == doctest::Approx(64.0));
}

TEST_CASE("projection of an anisotropic Gaussian rotated about the view axis") {
    const CameraSpec cam = identity_camera(128, 1.0 / 128.0);
    Gaussian g;
    g.center = {0.1f, -0.2f, 0.3f};
    g.scale = {0.2f, 0.05f, 0.1f};
    const double half = M_PI / 8.0;
    g.rotation = Eigen::Vector4d(std::cos(half), 0, 0, std::sin(half)).cast<float>();

    // Independent oracle: explicit 45 degree z rotation and pixel Jacobian.
    const double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
    Eigen::Matrix3d rz;
    rz << c, -s, 0, s, c, 0, 0, 0, 1;
    const Eigen::Vector3d sc = g.scale.cast<double>();
    const Eigen::Matrix3d sigma = rz * sc.cwiseProduct(sc).asDiagonal() * rz.transpose();
    Eigen::Matrix<double, 2, 3> j;
    j << 128, 0, 0, 0, -128, 0;
    const Eigen::Matrix2d expected = j * sigma * j.transpose() + 0.1 * Eigen::Matrix2d::Identity();

    const ProjectedGaussian p = project_gaussian(g, cam);
    CHECK((p.cov2d - expected).cwiseAbs().maxCoeff() < 1e-3);
    CHECK(p.cov2d(0, 1) == doctest::Approx(p.cov2d(1, 0)));
    CHECK(p.cov2d.determinant() > 0.0);
}

TEST_CASE("rendering an empty set yields the background") {
    const CameraSpec cam = identity_camera(8, 0.25);
    const RenderOutput out = render(GaussianSet{}, cam, {0.2, 0.4, 0.6});
    for (int i = 0; i < 64; ++i) {
        CHECK(out.alpha[i] == 0.0);
        CHECK(out.color[i * 3] == doctest::Approx(0.2));
        CHECK(out.color[i * 3 + 2] == doctest::Approx(0.6));
    }
}

TEST_CASE("an opaque Gaussian centered on a pixel paints it exactly") {
    // 17 px at 1/8: a Gaussian at the origin projects onto the center of pixel (8, 8).
    CameraSpec cam = identity_camera(17, 1.0 / 8.0);
    GaussianSet set;
    set.gaussians.push_back(isotropic({0.0f, 0.0f, 0.0f}, 0.2f, 1.0f, {1, 0, 0}));
    const RenderOutput out = render(set, cam, {0, 0, 1});
    const std::size_t center = 8 * 17 + 8;  // pixel center (8.5, 8.5) == projected mean
    CHECK(out.color[center * 3] == 1.0);
    CHECK(out.color[center * 3 + 1] == 0.0);
    CHECK(out.color[center * 3 + 2] == 0.0);
    CHECK(out.alpha[center] == 1.0);
}

TEST_CASE("two overlapping Gaussians composite front to back") {
    CameraSpec cam = identity_camera(17, 1.0 / 8.0);
    GaussianSet set;
    // Listed back-first to exercise the depth sort. Camera depth is 3 - z.
    set.gaussians.push_back(isotropic({0.0f, 0.0f, -0.2f}, 0.15f, 0.8f, {0, 1, 0}));
    set.gaussians.push_back(isotropic({0.125f, 0.0f, 0.3f}, 0.1f, 0.6f, {1, 0, 0}));
    const Eigen::Vector3d bg(0.1, 0.1, 0.1);
    const RenderOutput out = render(set, cam, bg);

    // Manual evaluation at the center pixel (8.5, 8.5).
    const double var_front = std::pow(0.1f * 8.0, 2) + 0.1;
    const double dx = 1.0;  // front Gaussian sits one pixel to the right
    const double a_front = 0.6 * std::exp(-0.5 * dx * dx / var_front);
    const double a_back = 0.8;
    const double t1 = 1.0 - a_front;
    const Eigen::Vector3d expected = Eigen::Vector3d(1, 0, 0) * a_front + Eigen::Vector3d(0, 1, 0) * a_back * t1 +
                                     bg * t1 * (1.0 - a_back);
    const std::size_t c = 8 * 17 + 8;
    for (int k = 0; k < 3; ++k) CHECK(out.color[c * 3 + k] == doctest::Approx(expected[k]).epsilon(1e-6));
    CHECK(out.alpha[c] == doctest::Approx(1.0 - t1 * (1.0 - a_back)).epsilon(1e-6));
}

TEST_CASE("render_views matches per-camera render") {
    std::mt19937_64 rng(2);
    GaussianSet set;
    for (int i = 0; i < 6; ++i) set.gaussians.push_back(testing::random_gaussian(rng, 0.5));
    // One-sided arrangement: everything in front of the z = 0 plane.
    for (auto& g : set.gaussians) g.center.z() = std::abs(g.center.z()) + 0.1f;
    const Eigen::Vector3d bg(0, 0, 0);

    const std::vector<CameraSpec> one{front_camera(24)};
    const auto single = render_views(set, one, bg);
    REQUIRE(single.size() == 1);
    CHECK(single[0].color == render(set, one[0], bg).color);

    const std::vector<CameraSpec> same(3, front_camera(24));
    const auto triple = render_views(set, same, bg);
    CHECK(triple[0].color == triple[1].color);
    CHECK(triple[1].color == triple[2].color);

    const std::vector<CameraSpec> fb{front_camera(24), back_camera(24)};
    const auto both = render_views(set, fb, bg);
    CHECK(both[0].color == render(set, fb[0], bg).color);
    CHECK(both[1].color == render(set, fb[1], bg).color);
    CHECK(both[0].color != both[1].color);
}

TEST_CASE("opaque front Gaussian hides the one behind") {
    CameraSpec cam = identity_camera(17, 1.0 / 8.0);
    GaussianSet set;
    set.gaussians.push_back(isotropic({0, 0, 0.5f}, 0.3f, 1.0f, {1, 1, 1}));
    set.gaussians.push_back(isotropic({0, 0, -0.5f}, 0.3f, 1.0f, {1, 0, 0}));
    const RenderOutput both = render(set, cam, {0, 0, 0});
    set.gaussians.pop_back();
    const RenderOutput front = render(set, cam, {0, 0, 0});
    const std::size_t c = 8 * 17 + 8;
    for (int k = 0; k < 3; ++k) CHECK(std::abs(both.color[c * 3 + k] - front.color[c * 3 + k]) < 1e-6);
}

TEST_CASE("alpha is monotone in a Gaussian's opacity") {
    std::mt19937_64 rng(9);
    const CameraSpec cam = orbit_camera(30.0, 20);
    GaussianSet set;
    for (int i = 0; i < 5; ++i) set.gaussians.push_back(testing::random_gaussian(rng, 0.4, 0.05, 0.3));
    std::vector<double> prev;
    for (float o : {0.0f, 0.1f, 0.3f, 0.5f, 0.9f, 1.0f}) {
        set.gaussians[2].opacity = o;
        const RenderOutput out = render(set, cam, {0, 0, 0});
        if (!prev.empty())
            for (std::size_t i = 0; i < out.alpha.size(); ++i) CHECK(out.alpha[i] >= prev[i] - 1e-12);
        prev = out.alpha;
    }
}

TEST_CASE("rendering is deterministic") {
    std::mt19937_64 rng(4);
    GaussianSet set;
    for (int i = 0; i < 200; ++i) set.gaussians.push_back(testing::random_gaussian(rng));
    const CameraSpec cam = orbit_camera(45.0, 64);
    const RenderOutput a = render(set, cam, {1, 1, 1});
    const RenderOutput b = render(set, cam, {1, 1, 1});
    CHECK(a.color == b.color);
    CHECK(a.alpha == b.alpha);
    CHECK(a.depth == b.depth);
}

TEST_CASE("analytic gradients match central differences") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const RenderOptions exact{0.0};
    for (int scene = 0; scene < 4; ++scene) {
        const CameraSpec cam = orbit_camera(90.0 * scene + 10.0, 16);
        GaussianSet set;
        for (int i = 0; i < 4; ++i) set.gaussians.push_back(testing::random_gaussian(rng, 0.6, 0.08, 0.3));
        std::vector<double> params = set.packed();
        std::vector<double> tc(16 * 16 * 3), ta(16 * 16);
        for (auto& v : tc) v = u01(rng);
        for (auto& v : ta) v = u01(rng);
        const Eigen::Vector3d bg(0.3, 0.5, 0.7);

        const RenderOutput base = render(params, cam, bg, exact);
        std::vector<double> gc(tc.size()), ga(ta.size());
        for (std::size_t i = 0; i < tc.size(); ++i) gc[i] = 2.0 * (base.color[i] - tc[i]);
        for (std::size_t i = 0; i < ta.size(); ++i) ga[i] = 2.0 * (base.alpha[i] - ta[i]);
        const std::vector<double> grad = render_backward(params, cam, bg, gc, ga, exact);

        for (std::size_t p = 0; p < params.size(); ++p) {
            const double h = 1e-4, keep = params[p];
            params[p] = keep + h;
            const double lp = pixel_loss(render(params, cam, bg, exact), tc, ta);
            params[p] = keep - h;
            const double lm = pixel_loss(render(params, cam, bg, exact), tc, ta);
            params[p] = keep;
            const double fd = (lp - lm) / (2 * h);
            if (std::max(std::abs(fd), std::abs(grad[p])) > 1e-6) {
                const double rel = std::abs(fd - grad[p]) / std::max(std::abs(fd), std::abs(grad[p]));
                CHECK_MESSAGE(rel < 1e-3, "scene " << scene << " param " << p << " fd " << fd << " an " << grad[p]);
            }
        }
    }
}

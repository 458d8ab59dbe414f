#pragma once

#include "twinsplat/camera.hpp"
#include "twinsplat/gaussian.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <span>
#include <vector>

namespace twinsplat {

/// 2D covariance floor added to every projected footprint (px^2).
inline constexpr double kCovarianceFloor = 0.1;

struct ProjectedGaussian {
    Eigen::Vector2d mean2d;  // px
    Eigen::Matrix2d cov2d;   // px^2, symmetric positive definite
    double depth = 0.0;
};

[[nodiscard]] ProjectedGaussian project_gaussian(const Gaussian& g, const CameraSpec& cam);

struct RenderOptions {
    /// Per-Gaussian composite weights below this are skipped. 0 disables culling.
    double min_alpha = 1e-4;
};

/// Row-major images: color is H*W*3, alpha and depth are H*W.
struct RenderOutput {
    int width = 0;
    int height = 0;
    std::vector<double> color;
    std::vector<double> alpha;
    std::vector<double> depth;  // alpha-normalized expected depth, 0 where alpha = 0
};

/// Front-to-back alpha compositing of all Gaussians.
///
/// `packed` holds N x 14 parameters in file order. The rotation quaternion
/// is normalized internally, so any non-zero quaternion is accepted.
[[nodiscard]] RenderOutput render(std::span<const double> packed, const CameraSpec& cam,
                                  const Eigen::Vector3d& background, const RenderOptions& opts = {});

[[nodiscard]] RenderOutput render(const GaussianSet& set, const CameraSpec& cam,
                                  const Eigen::Vector3d& background, const RenderOptions& opts = {});

[[nodiscard]] std::vector<RenderOutput> render_views(const GaussianSet& set,
                                                     std::span<const CameraSpec> cams,
                                                     const Eigen::Vector3d& background,
                                                     const RenderOptions& opts = {});

/// Vector-Jacobian product of `render`.
///
/// Given upstream gradients of a scalar loss with respect to the color
/// (H*W*3) and alpha (H*W) images, returns dL/dparams as N x 14 doubles.
/// Depth is not differentiated.
[[nodiscard]] std::vector<double> render_backward(std::span<const double> packed, const CameraSpec& cam,
                                                  const Eigen::Vector3d& background,
                                                  std::span<const double> grad_color,
                                                  std::span<const double> grad_alpha,
                                                  const RenderOptions& opts = {});

} // namespace twinsplat

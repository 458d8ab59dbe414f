#pragma once

#include "twinsplat/camera.hpp"
#include "twinsplat/coarse_mesh.hpp"
#include "twinsplat/config.hpp"
#include "twinsplat/gaussian.hpp"
#include "twinsplat/mesh.hpp"

#include <torch/torch.h>

#include <span>
#include <vector>

namespace twinsplat {

/// Sharpness of the soft silhouette, per pixel of signed distance.
inline constexpr double kSilhouetteSharpness = 20.0;

struct MeshRenderTensors {
    torch::Tensor normal;  // H x W x 3: smooth vertex normals encoded (n + 1) / 2, 0.5 background
    torch::Tensor mask;    // H x W in [0, 1]
};

/// Differentiable in `vertices` (V x 3, double). Visibility comes from a hard z-buffer; along the coverage
/// boundary the mask is sigmoid(sharpness * signed pixel distance to the nearest contour edge), and the
/// normal there fades toward the background by the same amount.
[[nodiscard]] MeshRenderTensors render_mesh(const torch::Tensor& vertices, const std::vector<Eigen::Vector3i>& faces,
                                            const CameraSpec& cam);
[[nodiscard]] MeshRenderTensors render_mesh(const TriMesh& mesh, const CameraSpec& cam);

struct RemeshTarget {
    CameraSpec cam;
    torch::Tensor normal;  // H x W x 3, double
    torch::Tensor mask;    // H x W, double
};

/// Normal and alpha renders of a normal Gaussian set over a 0.5 gray background.
[[nodiscard]] std::vector<RemeshTarget> targets_from_gaussians(const GaussianSet& normal_gaussians,
                                                               std::span<const CameraSpec> cams);
/// render_mesh of a reference mesh.
[[nodiscard]] std::vector<RemeshTarget> targets_from_mesh(const TriMesh& mesh, std::span<const CameraSpec> cams);

struct RefineResult {
    TriMesh mesh;
    std::vector<double> losses;  // loss at the start and after every accepted step
    int accepted_steps = 0;
    bool stalled = false;        // stopped because no halved step decreased the loss
};

/// Mean over cameras of mean squared normal and mask errors, plus laplacian_weight times the mean squared
/// uniform-Laplacian residual divided by the squared mean edge length of `reference`.
[[nodiscard]] torch::Tensor remesh_loss(const torch::Tensor& vertices, const TriMesh& reference,
                                        std::span<const RemeshTarget> targets, double laplacian_weight);

/// Adam-direction descent on vertex positions; a step that raises the loss is halved up to 10 times, after
/// which refinement stops. Faces are never modified.
[[nodiscard]] RefineResult refine_mesh(const TriMesh& mesh, std::span<const RemeshTarget> targets,
                                       const RemeshConfig& config);

/// Targets rendered from G_n on the configured camera circle, then refine_mesh.
[[nodiscard]] RefineResult refine_mesh(const TriMesh& mesh, const GaussianSet& normal_gaussians,
                                       const RemeshConfig& config);

/// init_coarse_mesh followed by refinement against G_n.
[[nodiscard]] TriMesh remesh(const GaussianSet& normal_gaussians, const RemeshConfig& config);

} // namespace twinsplat

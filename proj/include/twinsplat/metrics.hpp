#pragma once

#include "twinsplat/image.hpp"
#include "twinsplat/mesh.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace twinsplat {

struct SurfaceSamples {
    std::vector<Eigen::Vector3d> points;
    std::vector<Eigen::Vector3d> normals;  // face normal of the sampled face
    std::vector<int> faces;
};

/// Area-weighted uniform sampling with barycentric jitter; deterministic per seed.
[[nodiscard]] SurfaceSamples sample_surface(const TriMesh& mesh, int n, std::uint64_t seed);

/// Mean nearest-neighbor distance P->S and S->P (exact search).
[[nodiscard]] std::pair<double, double> chamfer(std::span<const Eigen::Vector3d> pred,
                                                std::span<const Eigen::Vector3d> gt);

/// Symmetric mean cosine between each point's normal and its nearest neighbor's normal.
[[nodiscard]] double normal_consistency(std::span<const Eigen::Vector3d> pred_points,
                                        std::span<const Eigen::Vector3d> pred_normals,
                                        std::span<const Eigen::Vector3d> gt_points,
                                        std::span<const Eigen::Vector3d> gt_normals);

/// 100 x harmonic mean of precision (P within tau of S) and recall (S within tau of P).
/// A point counts when its nearest-neighbor distance is strictly below tau.
[[nodiscard]] double f_score(std::span<const Eigen::Vector3d> pred, std::span<const Eigen::Vector3d> gt,
                             double tau = 1.0);

/// Mean point-to-surface distance from samples of `a` to `b` and from samples of `b` to `a`.
[[nodiscard]] std::pair<double, double> surface_chamfer(const TriMesh& a, const TriMesh& b, int n,
                                                        std::uint64_t seed);

/// Fixed, seeded random-convolution feature distance used as a perceptual (LPIPS-style) proxy.
///
/// Three stages of 3x3 stride-2 convolutions (3 -> 8 -> 16 -> 32 channels, zero
/// padding 1) with leaky ReLU (slope 0.2) on inputs mapped to [-1, 1]. After
/// each stage, channel vectors are normalized by sqrt(|f|^2 + 1e-8); the
/// distance sums, over stages, the pixel mean of squared differences.
class PerceptualProxy {
public:
    static constexpr int kStages = 3;
    static constexpr std::array<int, kStages + 1> kChannels = {3, 8, 16, 32};
    static constexpr std::uint64_t kSeed = 20240611;
    static constexpr double kNormEps = 1e-8;
    static constexpr double kLeakySlope = 0.2;

    PerceptualProxy();

    /// Weights of stage s as [out][in][3][3], row-major.
    [[nodiscard]] const std::vector<float>& weights(int stage) const { return weights_[stage]; }
    [[nodiscard]] const std::vector<float>& biases(int stage) const { return biases_[stage]; }

    [[nodiscard]] double distance(const Image& a, const Image& b) const;

    /// Shared instance; construction is deterministic.
    static const PerceptualProxy& instance();

private:
    struct Features {
        int width, height, channels;
        std::vector<double> data;  // channel-last
    };
    [[nodiscard]] std::vector<Features> features(const Image& img) const;

    std::array<std::vector<float>, kStages> weights_;
    std::array<std::vector<float>, kStages> biases_;
};

struct ImageScores {
    double psnr = 0.0;
    double ssim = 0.0;
    double perceptual = 0.0;
};

inline constexpr double kPsnrCap = 99.0;

[[nodiscard]] double psnr(const Image& pred, const Image& gt);
/// Mean SSIM over channels with an 11x11 Gaussian window (sigma 1.5), k1 = 0.01, k2 = 0.03, range 1,
/// averaged over window positions fully inside the image.
[[nodiscard]] double ssim(const Image& pred, const Image& gt);
[[nodiscard]] ImageScores image_metrics(const Image& pred, const Image& gt);

} // namespace twinsplat

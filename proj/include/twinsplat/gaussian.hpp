#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace twinsplat {

/// Number of scalars describing one Gaussian: center(3), scale(3), rotation(4), opacity(1), color(3).
inline constexpr int kGaussianParams = 14;

/// Lower bound added to every activated scale component.
inline constexpr float kMinScale = 1e-4f;

/// Activated centers are confined to (-kCenterBound, kCenterBound).
inline constexpr float kCenterBound = 0.9f;

using RawParams = std::array<double, kGaussianParams>;

/// One anisotropic 3D Gaussian, stored with post-activation values.
///
/// The quaternion is scalar-first (w, x, y, z). For normal Gaussians the
/// color channels hold an encoded normal (n + 1) / 2.
struct Gaussian {
    Eigen::Vector3f center = Eigen::Vector3f::Zero();
    Eigen::Vector3f scale = Eigen::Vector3f::Constant(0.01f);
    Eigen::Vector4f rotation{1.0f, 0.0f, 0.0f, 0.0f};
    float opacity = 1.0f;
    Eigen::Vector3f color = Eigen::Vector3f::Constant(0.5f);

    /// Packs the fields in file order (cx,cy,cz, sx,sy,sz, qw,qx,qy,qz, alpha, r,g,b).
    [[nodiscard]] RawParams packed() const;
    [[nodiscard]] static Gaussian from_packed(const RawParams& p);

    /// True when all type invariants hold (unit rotation, positive scale, unit-range opacity/color).
    [[nodiscard]] bool valid() const;

    bool operator==(const Gaussian&) const = default;
};

enum class GaussianKind : std::uint8_t { texture = 0, normal = 1 };

struct GaussianSet {
    std::vector<Gaussian> gaussians;
    GaussianKind kind = GaussianKind::texture;

    [[nodiscard]] std::size_t size() const { return gaussians.size(); }
    [[nodiscard]] bool empty() const { return gaussians.empty(); }

    /// Flattens to N x 14 doubles, row-major, in file order.
    [[nodiscard]] std::vector<double> packed() const;

    bool operator==(const GaussianSet&) const = default;
};

/// Maps 14 unconstrained reals to a valid Gaussian.
///
///   center   = 0.9 * tanh(raw[0:3])
///   scale    = 1e-4 + softplus(raw[3:6])
///   rotation = normalize(raw[6:10]), identity when the norm is below 1e-8
///   opacity  = sigmoid(raw[10]),  color = sigmoid(raw[11:14])
///
/// Throws ParameterDomainError on non-finite input.
[[nodiscard]] Gaussian activate_raw_params(std::span<const double> raw);

/// Opacity-weighted sum of unnormalized Gaussian kernels at `point`.
[[nodiscard]] double density_at(const GaussianSet& set, const Eigen::Vector3d& point);

/// Rotation matrix of a (not necessarily unit) quaternion (w, x, y, z); normalizes first.
[[nodiscard]] Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q);

/// Covariance R diag(s^2) R^T of a Gaussian, in double precision.
[[nodiscard]] Eigen::Matrix3d covariance(const Gaussian& g);

/// Rigidly rotates every Gaussian (centers and orientations) by `rotation`.
[[nodiscard]] GaussianSet rotate_set(const GaussianSet& set, const Eigen::Matrix3d& rotation);

// Splat file: "UGSP", u32 version = 1, u8 kind, u32 count, count x 14 float32, little endian.
inline constexpr std::uint32_t kSplatVersion = 1;

void save_splat(const GaussianSet& set, const std::filesystem::path& path);
[[nodiscard]] GaussianSet load_splat(const std::filesystem::path& path);

} // namespace twinsplat

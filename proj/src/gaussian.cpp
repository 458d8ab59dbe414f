#include "twinsplat/gaussian.hpp"

#include "binary_io.hpp"
#include "twinsplat/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

namespace twinsplat {

namespace {

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

float to_finite_float(double x) {
    constexpr double kMax = std::numeric_limits<float>::max();
    return static_cast<float>(std::clamp(x, -kMax, kMax));
}

constexpr char kSplatMagic[4] = {'U', 'G', 'S', 'P'};

} // namespace

RawParams Gaussian::packed() const {
    return {center.x(),   center.y(),   center.z(),   scale.x(), scale.y(),
            scale.z(),    rotation[0],  rotation[1],  rotation[2], rotation[3],
            opacity,      color.x(),    color.y(),    color.z()};
}

Gaussian Gaussian::from_packed(const RawParams& p) {
    Gaussian g;
    g.center = Eigen::Vector3d(p[0], p[1], p[2]).cast<float>();
    g.scale = Eigen::Vector3d(p[3], p[4], p[5]).cast<float>();
    g.rotation = Eigen::Vector4d(p[6], p[7], p[8], p[9]).cast<float>();
    g.opacity = static_cast<float>(p[10]);
    g.color = Eigen::Vector3d(p[11], p[12], p[13]).cast<float>();
    return g;
}

bool Gaussian::valid() const {
    if (!center.allFinite() || !scale.allFinite() || !rotation.allFinite() || !color.allFinite() ||
        !std::isfinite(opacity))
        return false;
    if (std::abs(rotation.cast<double>().norm() - 1.0) > 1e-6) return false;
    if ((scale.array() <= 0.0f).any()) return false;
    if (opacity < 0.0f || opacity > 1.0f) return false;
    return (color.array() >= 0.0f).all() && (color.array() <= 1.0f).all();
}

std::vector<double> GaussianSet::packed() const {
    std::vector<double> out;
    out.reserve(gaussians.size() * kGaussianParams);
    for (const auto& g : gaussians) {
        const auto p = g.packed();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

Gaussian activate_raw_params(std::span<const double> raw) {
    if (raw.size() != kGaussianParams)
        throw ParameterDomainError("activate_raw_params: expected 14 values, got " +
                                   std::to_string(raw.size()));
    for (std::size_t i = 0; i < raw.size(); ++i)
        if (!std::isfinite(raw[i]))
            throw ParameterDomainError("activate_raw_params: raw[" + std::to_string(i) +
                                       "] is not finite");

    Gaussian g;
    for (int k = 0; k < 3; ++k) {
        g.center[k] = static_cast<float>(kCenterBound * std::tanh(raw[k]));
        g.scale[k] = to_finite_float(kMinScale + softplus(raw[3 + k]));
        g.color[k] = static_cast<float>(sigmoid(raw[11 + k]));
    }
    Eigen::Vector4d q(raw[6], raw[7], raw[8], raw[9]);
    // Scaled norm so very large components do not overflow.
    const double m = q.cwiseAbs().maxCoeff();
    const double n = m > 0.0 ? m * (q / m).norm() : 0.0;
    if (n < 1e-8)
        q = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
    else
        q = (q / m).normalized();
    g.rotation = q.cast<float>();
    g.opacity = static_cast<float>(sigmoid(raw[10]));
    return g;
}

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q) {
    const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
    return quat.normalized().toRotationMatrix();
}

Eigen::Matrix3d covariance(const Gaussian& g) {
    const Eigen::Matrix3d r = quaternion_to_matrix(g.rotation.cast<double>());
    const Eigen::Vector3d s2 = g.scale.cast<double>().array().square();
    return r * s2.asDiagonal() * r.transpose();
}

double density_at(const GaussianSet& set, const Eigen::Vector3d& point) {
    double sum = 0.0;
    for (const auto& g : set.gaussians) {
        const Eigen::Matrix3d r = quaternion_to_matrix(g.rotation.cast<double>());
        // Mahalanobis distance in the Gaussian's local frame.
        const Eigen::Vector3d local = r.transpose() * (point - g.center.cast<double>());
        const Eigen::Vector3d scaled = local.cwiseQuotient(g.scale.cast<double>());
        sum += g.opacity * std::exp(-0.5 * scaled.squaredNorm());
    }
    return sum;
}

GaussianSet rotate_set(const GaussianSet& set, const Eigen::Matrix3d& rotation) {
    GaussianSet out;
    out.kind = set.kind;
    out.gaussians.reserve(set.size());
    const Eigen::Quaterniond rq(rotation);
    for (const auto& g : set.gaussians) {
        Gaussian h = g;
        h.center = (rotation * g.center.cast<double>()).cast<float>();
        const Eigen::Quaterniond q(g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]);
        const Eigen::Quaterniond composed = (rq * q.cast<double>()).normalized();
        h.rotation = Eigen::Vector4d(composed.w(), composed.x(), composed.y(), composed.z()).cast<float>();
        out.gaussians.push_back(h);
    }
    return out;
}

void save_splat(const GaussianSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_splat: cannot open " + path.string() + " for writing");
    out.write(kSplatMagic, 4);
    detail::write_le<std::uint32_t>(out, kSplatVersion);
    detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(set.kind));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.size()));
    for (const auto& g : set.gaussians) {
        const float rec[kGaussianParams] = {
            g.center.x(), g.center.y(),   g.center.z(),   g.scale.x(),    g.scale.y(),
            g.scale.z(),  g.rotation[0],  g.rotation[1],  g.rotation[2],  g.rotation[3],
            g.opacity,    g.color.x(),    g.color.y(),    g.color.z()};
        for (float v : rec) detail::write_le(out, v);
    }
    if (!out) throw IoError("save_splat: write failed for " + path.string());
}

GaussianSet load_splat(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_splat: cannot open " + path.string());

    char magic[4] = {};
    if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kSplatMagic))
        throw FormatError("load_splat: bad magic (field 'magic') in " + path.string());
    std::uint32_t version = 0;
    if (!detail::read_le(in, version)) throw FormatError("load_splat: truncated field 'version'");
    if (version != kSplatVersion)
        throw FormatError("load_splat: unsupported field 'version' = " + std::to_string(version));
    std::uint8_t kind = 0;
    if (!detail::read_le(in, kind)) throw FormatError("load_splat: truncated field 'kind'");
    if (kind > 1) throw FormatError("load_splat: invalid field 'kind' = " + std::to_string(kind));
    std::uint32_t count = 0;
    if (!detail::read_le(in, count)) throw FormatError("load_splat: truncated field 'count'");

    GaussianSet set;
    set.kind = static_cast<GaussianKind>(kind);
    set.gaussians.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        float rec[kGaussianParams];
        for (int k = 0; k < kGaussianParams; ++k)
            if (!detail::read_le(in, rec[k]))
                throw FormatError("load_splat: truncated record " + std::to_string(i) + " (field " +
                                  std::to_string(k) + ")");
        Gaussian g;
        g.center = {rec[0], rec[1], rec[2]};
        g.scale = {rec[3], rec[4], rec[5]};
        g.rotation = {rec[6], rec[7], rec[8], rec[9]};
        g.opacity = rec[10];
        g.color = {rec[11], rec[12], rec[13]};
        set.gaussians.push_back(g);
    }
    return set;
}

} // namespace twinsplat

#pragma once

#include "twinsplat/config.hpp"
#include "twinsplat/gaussian.hpp"
#include "twinsplat/mesh.hpp"

#include <string>

namespace twinsplat {

/// Geometric scores in cm (world distances x 100).
struct GeoReport {
    double cd_p2s = 0.0;
    double cd_s2p = 0.0;
    double nc = 0.0;
    double fscore = 0.0;
};

struct TexReport {
    double psnr_f = 0.0, psnr_b = 0.0;
    double ssim_f = 0.0, ssim_b = 0.0;
    double perc_f = 0.0, perc_b = 0.0;
};

struct EvalReport {
    GeoReport geo;
    TexReport tex;
};

/// Compares a predicted mesh with the ground-truth mesh.
///
/// Both surfaces are sampled with config.samples points. Texture scores compare
/// vertex-color renders of both meshes from the front and back cameras over a
/// black background; a mesh without colors renders as uniform gray.
[[nodiscard]] EvalReport evaluate(const TriMesh& pred, const TriMesh& gt, const EvalConfig& config = {});

inline constexpr const char* kReportHeader = "case,cd_p2s,cd_s2p,nc,fscore,psnr_f,psnr_b,ssim_f,ssim_b,perc_f,perc_b";

[[nodiscard]] std::string report_row(const std::string& case_name, const EvalReport& report);

/// Colors each vertex with the kernel-weighted mean color of nearby texture Gaussians,
/// falling back to the nearest Gaussian's color when none is within reach.
[[nodiscard]] TriMesh transfer_colors(const TriMesh& mesh, const GaussianSet& texture);

} // namespace twinsplat

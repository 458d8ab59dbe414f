#pragma once

#include "twinsplat/config.hpp"
#include "twinsplat/gaussian.hpp"
#include "twinsplat/isosurface.hpp"
#include "twinsplat/mesh.hpp"

namespace twinsplat {

/// density_at sampled on a grid_resolution^3 lattice spanning [-1, 1]^3. Each Gaussian is evaluated
/// within 4 standard deviations of its center.
[[nodiscard]] ScalarGrid density_grid(const GaussianSet& set, int grid_resolution);

/// Iso-surface of the density field at `config.iso` with enclosed cavities filled, largest component kept.
/// Throws ExtractionError for an empty set or an empty surface.
[[nodiscard]] TriMesh init_coarse_mesh(const GaussianSet& normal_gaussians, const RemeshConfig& config);

} // namespace twinsplat

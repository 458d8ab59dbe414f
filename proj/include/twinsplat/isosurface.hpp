#pragma once

#include "twinsplat/mesh.hpp"

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace twinsplat {

/// Scalar samples on a regular lattice; sample (i, j, k) sits at origin + spacing * (i, j, k).
struct ScalarGrid {
    int nx = 0, ny = 0, nz = 0;
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    double spacing = 1.0;
    std::vector<double> values;  // x fastest, then y, then z

    ScalarGrid() = default;
    ScalarGrid(int nx_, int ny_, int nz_, const Eigen::Vector3d& origin_, double spacing_)
        : nx(nx_), ny(ny_), nz(nz_), origin(origin_), spacing(spacing_),
          values(static_cast<std::size_t>(nx_) * ny_ * nz_, 0.0) {}

    [[nodiscard]] std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * ny + j) * nx + i;
    }
    [[nodiscard]] double& at(int i, int j, int k) { return values[index(i, j, k)]; }
    [[nodiscard]] double at(int i, int j, int k) const { return values[index(i, j, k)]; }
    [[nodiscard]] Eigen::Vector3d position(int i, int j, int k) const {
        return origin + spacing * Eigen::Vector3d(i, j, k);
    }
};

/// Samples `field` at every lattice point.
[[nodiscard]] ScalarGrid sample_grid(const std::function<double(const Eigen::Vector3d&)>& field, int nx, int ny,
                                     int nz, const Eigen::Vector3d& origin, double spacing);

/// Triangulates the level set {value = iso} by marching each lattice cube split into six tetrahedra.
///
/// Values >= iso count as inside; triangles face away from the inside. Vertices
/// on shared lattice edges are welded, and faces with area below 1e-12 are removed.
[[nodiscard]] TriMesh extract_isosurface(const ScalarGrid& grid, double iso);

/// Raises every below-iso sample that cannot be reached from the grid boundary
/// through below-iso samples (6-connectivity) to `fill_value`.
void fill_enclosed_cavities(ScalarGrid& grid, double iso, double fill_value);

} // namespace twinsplat

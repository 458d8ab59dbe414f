#include "twinsplat/coarse_mesh.hpp"

#include "twinsplat/errors.hpp"

#include <algorithm>
#include <cmath>

namespace twinsplat {

ScalarGrid density_grid(const GaussianSet& set, int n) {
    if (n < 2) throw InputError("density_grid: resolution must be >= 2");
    const double spacing = 2.0 / (n - 1);
    ScalarGrid grid(n, n, n, Eigen::Vector3d::Constant(-1.0), spacing);
    for (const auto& g : set.gaussians) {
        const Eigen::Matrix3d cov = covariance(g);
        const Eigen::Matrix3d precision = cov.inverse();
        const Eigen::Vector3d c = g.center.cast<double>();
        int lo[3], hi[3];
        for (int a = 0; a < 3; ++a) {
            const double reach = 4.0 * std::sqrt(cov(a, a));
            lo[a] = std::max(0, static_cast<int>(std::ceil((c[a] - reach + 1.0) / spacing)));
            hi[a] = std::min(n - 1, static_cast<int>(std::floor((c[a] + reach + 1.0) / spacing)));
        }
        for (int k = lo[2]; k <= hi[2]; ++k)
            for (int j = lo[1]; j <= hi[1]; ++j)
                for (int i = lo[0]; i <= hi[0]; ++i) {
                    const Eigen::Vector3d d = grid.position(i, j, k) - c;
                    const double m = d.dot(precision * d);
                    if (m <= 16.0) grid.at(i, j, k) += g.opacity * std::exp(-0.5 * m);
                }
    }
    return grid;
}

TriMesh init_coarse_mesh(const GaussianSet& normal_gaussians, const RemeshConfig& config) {
    config.validate();
    if (normal_gaussians.empty()) throw ExtractionError("init_coarse_mesh: empty Gaussian set");
    ScalarGrid grid = density_grid(normal_gaussians, config.grid_resolution);
    fill_enclosed_cavities(grid, config.iso, 2.0 * config.iso);
    TriMesh mesh = extract_isosurface(grid, config.iso);
    if (mesh.empty())
        throw ExtractionError("init_coarse_mesh: density never reaches iso level " + std::to_string(config.iso));
    mesh = largest_component(mesh);
    mesh.validate();
    return mesh;
}

} // namespace twinsplat

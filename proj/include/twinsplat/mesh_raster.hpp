#pragma once

#include "twinsplat/camera.hpp"
#include "twinsplat/image.hpp"
#include "twinsplat/mesh.hpp"

#include <Eigen/Core>

#include <vector>

namespace twinsplat {

/// Hard z-buffer visibility of a mesh: nearest face and barycentrics per pixel center.
struct MeshRaster {
    int width = 0;
    int height = 0;
    std::vector<int> face;                // -1 where uncovered
    std::vector<Eigen::Vector3d> bary;    // weights of the face's three vertices
    std::vector<double> depth;

    [[nodiscard]] bool covered(int x, int y) const { return face[static_cast<std::size_t>(y) * width + x] >= 0; }
};

/// Rasterizes both front- and back-facing triangles; the closest one wins, ties keep the lower face index.
[[nodiscard]] MeshRaster rasterize(const TriMesh& mesh, const CameraSpec& cam);

struct MeshMaps {
    Image color;   // vertex colors interpolated (0.7 gray when the mesh has none), background elsewhere
    Image mask;    // 1 where covered
    Image normal;  // world-space flat face normals encoded (n + 1) / 2, 0.5 elsewhere
};

[[nodiscard]] MeshMaps render_mesh_maps(const TriMesh& mesh, const CameraSpec& cam,
                                        const Eigen::Vector3f& background = Eigen::Vector3f::Zero());

/// Majority vertex label per face (ties resolved toward the first vertex).
[[nodiscard]] std::vector<std::uint8_t> face_labels(const TriMesh& mesh);

/// Part id of the visible face per pixel; requires vertex labels.
[[nodiscard]] LabelMap render_labels(const TriMesh& mesh, const CameraSpec& cam);

} // namespace twinsplat

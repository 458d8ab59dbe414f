#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace twinsplat {

/// Indexed triangle mesh with optional per-vertex colors and part labels.
struct TriMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<Eigen::Vector3i> faces;
    std::vector<Eigen::Vector3f> colors;       // empty or one per vertex, in [0,1]
    std::vector<std::uint8_t> vertex_labels;  // empty or one per vertex

    [[nodiscard]] bool empty() const { return faces.empty(); }
    [[nodiscard]] bool has_colors() const { return !colors.empty(); }

    /// Throws InputError when an index is out of range or attribute arrays disagree in length.
    void validate() const;

    [[nodiscard]] std::vector<Eigen::Vector3d> face_normals() const;
    /// Area-weighted average of incident face normals, normalized.
    [[nodiscard]] std::vector<Eigen::Vector3d> vertex_normals() const;
    [[nodiscard]] std::vector<double> face_areas() const;
    [[nodiscard]] double surface_area() const;

    [[nodiscard]] Eigen::Vector3d bbox_min() const;
    [[nodiscard]] Eigen::Vector3d bbox_max() const;

    /// Mean edge length over all face edges.
    [[nodiscard]] double mean_edge_length() const;

    bool operator==(const TriMesh&) const = default;
};

/// Drops faces with area below `min_area` (or repeated indices) and unreferenced vertices.
[[nodiscard]] TriMesh remove_degenerate_faces(const TriMesh& mesh, double min_area = 1e-12);

/// Keeps the connected component (via shared vertices) with the most faces.
[[nodiscard]] TriMesh largest_component(const TriMesh& mesh);

/// Number of vertex-connected components.
[[nodiscard]] int count_components(const TriMesh& mesh);

/// Applies p -> rotation * p + translation to every vertex.
[[nodiscard]] TriMesh transform_mesh(const TriMesh& mesh, const Eigen::Matrix3d& rotation,
                                     const Eigen::Vector3d& translation);

/// Concatenates meshes, offsetting indices. Attributes are kept only if all inputs carry them.
[[nodiscard]] TriMesh merge_meshes(const std::vector<TriMesh>& parts);

/// Geodesic sphere: subdivided icosahedron projected onto the sphere.
[[nodiscard]] TriMesh make_icosphere(int subdivisions, double radius,
                                     const Eigen::Vector3d& center = Eigen::Vector3d::Zero());

/// Axis-aligned box with 24 vertices (unshared across faces, so vertex normals equal face normals).
[[nodiscard]] TriMesh make_box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);

/// Wavefront OBJ with "v x y z [r g b]" and 1-based "f a b c" lines.
void save_obj(const TriMesh& mesh, const std::filesystem::path& path);
[[nodiscard]] TriMesh load_obj(const std::filesystem::path& path);

/// Binary little-endian PLY: float32 x,y,z (+ uchar red,green,blue) and uchar-count int32 face lists.
void save_ply(const TriMesh& mesh, const std::filesystem::path& path);
[[nodiscard]] TriMesh load_ply(const std::filesystem::path& path);

/// Dispatches on the file extension (.obj or .ply).
[[nodiscard]] TriMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const TriMesh& mesh, const std::filesystem::path& path);

} // namespace twinsplat

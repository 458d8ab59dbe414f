#pragma once

#include <Eigen/Core>

#include <vector>

namespace twinsplat {

/// Orthographic camera.
///
/// A world point p maps to camera space q = rotation * p + translation. The
/// camera looks down its -z axis; image coordinates are
///   u = width / 2 + q.x / pixel_scale,   v = height / 2 - q.y / pixel_scale,
/// and depth = -q.z (smaller is closer). Pixel (row i, col j) has its center
/// at (j + 0.5, i + 0.5).
struct CameraSpec {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation{0.0, 0.0, -3.0};
    int width = 128;
    int height = 128;
    double pixel_scale = 2.0 / 128.0;

    /// Throws InputError when the rotation is not orthonormal or the raster is empty.
    void validate() const;

    [[nodiscard]] Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
        return rotation * world + translation;
    }

    /// (u, v, depth) of a world point.
    [[nodiscard]] Eigen::Vector3d project(const Eigen::Vector3d& world) const;

    /// 2x3 Jacobian of (u, v) with respect to the world position.
    [[nodiscard]] Eigen::Matrix<double, 2, 3> image_jacobian() const;

    /// Unit world-space direction the camera looks along.
    [[nodiscard]] Eigen::Vector3d view_direction() const {
        return -rotation.transpose().col(2);
    }
};

/// Camera on the horizontal circle around the vertical (y) axis.
///
/// Angle 0 looks at the subject's front (from +z toward -z); angles grow
/// counter-clockwise seen from above. The field of view covers [-1, 1]^2.
[[nodiscard]] CameraSpec orbit_camera(double angle_deg, int resolution);

/// `count` cameras evenly spaced on the circle, starting at the front view.
[[nodiscard]] std::vector<CameraSpec> orbit_cameras(int count, int resolution);

[[nodiscard]] inline CameraSpec front_camera(int resolution) { return orbit_camera(0.0, resolution); }
[[nodiscard]] inline CameraSpec back_camera(int resolution) { return orbit_camera(180.0, resolution); }

} // namespace twinsplat

#include "twinsplat/camera.hpp"

#include "twinsplat/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace twinsplat {

void CameraSpec::validate() const {
    if (width < 1 || height < 1) throw InputError("CameraSpec: width and height must be >= 1");
    if (!(pixel_scale > 0.0) || !std::isfinite(pixel_scale))
        throw InputError("CameraSpec: pixel_scale must be positive");
    if (!rotation.allFinite() || !translation.allFinite())
        throw InputError("CameraSpec: non-finite pose");
    const double err = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (err > 1e-6) throw InputError("CameraSpec: rotation is not orthonormal");
}

Eigen::Vector3d CameraSpec::project(const Eigen::Vector3d& world) const {
    const Eigen::Vector3d q = to_camera(world);
    return {0.5 * width + q.x() / pixel_scale, 0.5 * height - q.y() / pixel_scale, -q.z()};
}

Eigen::Matrix<double, 2, 3> CameraSpec::image_jacobian() const {
    Eigen::Matrix<double, 2, 3> j;
    j.row(0) = rotation.row(0) / pixel_scale;
    j.row(1) = -rotation.row(1) / pixel_scale;
    return j;
}

CameraSpec orbit_camera(double angle_deg, int resolution) {
    const double a = angle_deg * std::numbers::pi / 180.0;
    CameraSpec cam;
    // Camera-to-world is a rotation about +y by the orbit angle.
    cam.rotation = Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix().transpose();
    cam.translation = {0.0, 0.0, -3.0};
    cam.width = resolution;
    cam.height = resolution;
    cam.pixel_scale = 2.0 / resolution;
    return cam;
}

std::vector<CameraSpec> orbit_cameras(int count, int resolution) {
    std::vector<CameraSpec> cams;
    cams.reserve(count);
    for (int i = 0; i < count; ++i) cams.push_back(orbit_camera(360.0 * i / count, resolution));
    return cams;
}

} // namespace twinsplat

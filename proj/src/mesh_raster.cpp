#include "twinsplat/mesh_raster.hpp"

#include "twinsplat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace twinsplat {

MeshRaster rasterize(const TriMesh& mesh, const CameraSpec& cam) {
    cam.validate();
    mesh.validate();
    MeshRaster r;
    r.width = cam.width;
    r.height = cam.height;
    const std::size_t npix = static_cast<std::size_t>(cam.width) * cam.height;
    r.face.assign(npix, -1);
    r.bary.assign(npix, Eigen::Vector3d::Zero());
    r.depth.assign(npix, std::numeric_limits<double>::infinity());

    std::vector<Eigen::Vector3d> proj(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) proj[i] = cam.project(mesh.vertices[i]);

    for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) {
        const auto& f = mesh.faces[fi];
        const Eigen::Vector3d &a = proj[f[0]], &b = proj[f[1]], &c = proj[f[2]];
        const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        if (std::abs(area) < 1e-12) continue;
        const double minx = std::min({a.x(), b.x(), c.x()}), maxx = std::max({a.x(), b.x(), c.x()});
        const double miny = std::min({a.y(), b.y(), c.y()}), maxy = std::max({a.y(), b.y(), c.y()});
        const int x0 = std::max(0, static_cast<int>(std::ceil(minx - 0.5)));
        const int x1 = std::min(cam.width - 1, static_cast<int>(std::floor(maxx - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(miny - 0.5)));
        const int y1 = std::min(cam.height - 1, static_cast<int>(std::floor(maxy - 0.5)));
        for (int y = y0; y <= y1; ++y) {
            const double py = y + 0.5;
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5;
                const double w0 = ((b.x() - px) * (c.y() - py) - (b.y() - py) * (c.x() - px)) / area;
                const double w1 = ((c.x() - px) * (a.y() - py) - (c.y() - py) * (a.x() - px)) / area;
                const double w2 = 1.0 - w0 - w1;
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
                const double depth = w0 * a.z() + w1 * b.z() + w2 * c.z();
                const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
                if (depth < r.depth[pix]) {
                    r.depth[pix] = depth;
                    r.face[pix] = static_cast<int>(fi);
                    r.bary[pix] = {w0, w1, w2};
                }
            }
        }
    }
    return r;
}

MeshMaps render_mesh_maps(const TriMesh& mesh, const CameraSpec& cam, const Eigen::Vector3f& background) {
    if (mesh.empty()) throw InputError("render_mesh_maps: empty mesh");
    const MeshRaster r = rasterize(mesh, cam);
    const auto normals = mesh.face_normals();
    MeshMaps out{Image(cam.width, cam.height, 3), Image(cam.width, cam.height, 1),
                 Image(cam.width, cam.height, 3, 0.5f)};
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
            const int fi = r.face[pix];
            if (fi < 0) {
                for (int k = 0; k < 3; ++k) out.color.at(x, y, k) = background[k];
                continue;
            }
            const auto& f = mesh.faces[fi];
            Eigen::Vector3f c = Eigen::Vector3f::Constant(0.7f);
            if (mesh.has_colors()) {
                const Eigen::Vector3d w = r.bary[pix];
                c = (w[0] * mesh.colors[f[0]].cast<double>() + w[1] * mesh.colors[f[1]].cast<double>() +
                     w[2] * mesh.colors[f[2]].cast<double>())
                        .cast<float>();
            }
            const Eigen::Vector3d n = normals[fi];
            for (int k = 0; k < 3; ++k) {
                out.color.at(x, y, k) = c[k];
                out.normal.at(x, y, k) = static_cast<float>(0.5 * (n[k] + 1.0));
            }
            out.mask.at(x, y) = 1.0f;
        }
    }
    return out;
}

std::vector<std::uint8_t> face_labels(const TriMesh& mesh) {
    if (mesh.vertex_labels.size() != mesh.vertices.size())
        throw InputError("face_labels: mesh has no per-vertex labels");
    std::vector<std::uint8_t> out(mesh.faces.size());
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        const auto& f = mesh.faces[i];
        const std::uint8_t a = mesh.vertex_labels[f[0]], b = mesh.vertex_labels[f[1]], c = mesh.vertex_labels[f[2]];
        out[i] = (b == c && a != b) ? b : a;
    }
    return out;
}

LabelMap render_labels(const TriMesh& mesh, const CameraSpec& cam) {
    const auto labels = face_labels(mesh);
    const MeshRaster r = rasterize(mesh, cam);
    LabelMap out(cam.width, cam.height);
    for (std::size_t pix = 0; pix < r.face.size(); ++pix)
        if (r.face[pix] >= 0) out.labels[pix] = labels[r.face[pix]];
    return out;
}

} // namespace twinsplat

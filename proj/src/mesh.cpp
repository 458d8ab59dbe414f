#include "twinsplat/mesh.hpp"

#include "binary_io.hpp"
#include "twinsplat/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>

namespace twinsplat {

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

/// Keeps the listed faces and compacts vertices, preserving their relative order.
TriMesh select_faces(const TriMesh& mesh, const std::vector<int>& keep) {
    TriMesh out;
    std::vector<int> remap(mesh.vertices.size(), -1);
    std::vector<char> used(mesh.vertices.size(), 0);
    for (int f : keep)
        for (int k = 0; k < 3; ++k) used[mesh.faces[f][k]] = 1;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (!used[v]) continue;
        remap[v] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[v]);
        if (mesh.has_colors()) out.colors.push_back(mesh.colors[v]);
        if (!mesh.vertex_labels.empty()) out.vertex_labels.push_back(mesh.vertex_labels[v]);
    }
    out.faces.reserve(keep.size());
    for (int f : keep) {
        const auto& face = mesh.faces[f];
        out.faces.emplace_back(remap[face[0]], remap[face[1]], remap[face[2]]);
    }
    return out;
}

std::vector<int> face_components(const TriMesh& mesh) {
    UnionFind uf(static_cast<int>(mesh.vertices.size()));
    for (const auto& f : mesh.faces) {
        uf.unite(f[0], f[1]);
        uf.unite(f[1], f[2]);
    }
    std::vector<int> comp(mesh.faces.size());
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) comp[i] = uf.find(mesh.faces[i][0]);
    return comp;
}

} // namespace

void TriMesh::validate() const {
    const int n = static_cast<int>(vertices.size());
    for (std::size_t i = 0; i < faces.size(); ++i)
        for (int k = 0; k < 3; ++k)
            if (faces[i][k] < 0 || faces[i][k] >= n)
                throw InputError("TriMesh: face " + std::to_string(i) + " references vertex " +
                                 std::to_string(faces[i][k]) + " outside [0, " + std::to_string(n) + ")");
    if (!colors.empty() && colors.size() != vertices.size())
        throw InputError("TriMesh: color count does not match vertex count");
    if (!vertex_labels.empty() && vertex_labels.size() != vertices.size())
        throw InputError("TriMesh: label count does not match vertex count");
    for (const auto& v : vertices)
        if (!v.allFinite()) throw InputError("TriMesh: non-finite vertex");
}

std::vector<Eigen::Vector3d> TriMesh::face_normals() const {
    std::vector<Eigen::Vector3d> out(faces.size());
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const auto& f = faces[i];
        const Eigen::Vector3d n = (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
        const double len = n.norm();
        out[i] = len > 0.0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::Zero();
    }
    return out;
}

std::vector<Eigen::Vector3d> TriMesh::vertex_normals() const {
    std::vector<Eigen::Vector3d> acc(vertices.size(), Eigen::Vector3d::Zero());
    for (const auto& f : faces) {
        // Unnormalized cross product weights by twice the area.
        const Eigen::Vector3d n = (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
        for (int k = 0; k < 3; ++k) acc[f[k]] += n;
    }
    for (auto& n : acc) {
        const double len = n.norm();
        if (len > 0.0) n /= len;
    }
    return acc;
}

std::vector<double> TriMesh::face_areas() const {
    std::vector<double> out(faces.size());
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const auto& f = faces[i];
        out[i] = 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
    }
    return out;
}

double TriMesh::surface_area() const {
    const auto a = face_areas();
    return std::accumulate(a.begin(), a.end(), 0.0);
}

Eigen::Vector3d TriMesh::bbox_min() const {
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) lo = lo.cwiseMin(v);
    return lo;
}

Eigen::Vector3d TriMesh::bbox_max() const {
    Eigen::Vector3d hi = Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) hi = hi.cwiseMax(v);
    return hi;
}

double TriMesh::mean_edge_length() const {
    if (faces.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& f : faces)
        for (int k = 0; k < 3; ++k) sum += (vertices[f[k]] - vertices[f[(k + 1) % 3]]).norm();
    return sum / (3.0 * faces.size());
}

TriMesh remove_degenerate_faces(const TriMesh& mesh, double min_area) {
    const auto areas = mesh.face_areas();
    std::vector<int> keep;
    keep.reserve(mesh.faces.size());
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        const auto& f = mesh.faces[i];
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
        if (!(areas[i] > min_area)) continue;
        keep.push_back(static_cast<int>(i));
    }
    return select_faces(mesh, keep);
}

TriMesh largest_component(const TriMesh& mesh) {
    if (mesh.faces.empty()) return mesh;
    const auto comp = face_components(mesh);
    std::map<int, int> counts;
    for (int c : comp) ++counts[c];
    // Ties resolve to the smallest root index, which is deterministic.
    int best = -1, best_count = -1;
    for (const auto& [c, n] : counts)
        if (n > best_count) {
            best = c;
            best_count = n;
        }
    std::vector<int> keep;
    for (std::size_t i = 0; i < comp.size(); ++i)
        if (comp[i] == best) keep.push_back(static_cast<int>(i));
    return select_faces(mesh, keep);
}

int count_components(const TriMesh& mesh) {
    const auto comp = face_components(mesh);
    std::vector<int> sorted = comp;
    std::sort(sorted.begin(), sorted.end());
    return static_cast<int>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

TriMesh transform_mesh(const TriMesh& mesh, const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation) {
    TriMesh out = mesh;
    for (auto& v : out.vertices) v = rotation * v + translation;
    return out;
}

TriMesh merge_meshes(const std::vector<TriMesh>& parts) {
    TriMesh out;
    const bool colors = !parts.empty() && std::all_of(parts.begin(), parts.end(),
                                                      [](const TriMesh& m) { return m.has_colors(); });
    const bool labels = !parts.empty() && std::all_of(parts.begin(), parts.end(), [](const TriMesh& m) {
        return !m.vertex_labels.empty();
    });
    for (const auto& p : parts) {
        const int offset = static_cast<int>(out.vertices.size());
        out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
        if (colors) out.colors.insert(out.colors.end(), p.colors.begin(), p.colors.end());
        if (labels) out.vertex_labels.insert(out.vertex_labels.end(), p.vertex_labels.begin(), p.vertex_labels.end());
        for (const auto& f : p.faces) out.faces.push_back(f + Eigen::Vector3i::Constant(offset));
    }
    return out;
}

TriMesh make_icosphere(int subdivisions, double radius, const Eigen::Vector3d& center) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : m.vertices) v.normalize();
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
               {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int idx = static_cast<int>(m.vertices.size());
            m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<Eigen::Vector3i> next;
        next.reserve(m.faces.size() * 4);
        for (const auto& f : m.faces) {
            const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.emplace_back(f[0], ab, ca);
            next.emplace_back(f[1], bc, ab);
            next.emplace_back(f[2], ca, bc);
            next.emplace_back(ab, bc, ca);
        }
        m.faces = std::move(next);
    }
    for (auto& v : m.vertices) v = center + radius * v;
    return m;
}

TriMesh make_box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    TriMesh m;
    // Each face: outward axis, then four corners counter-clockwise seen from outside.
    auto quad = [&](const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                    const Eigen::Vector3d& d) {
        const int base = static_cast<int>(m.vertices.size());
        m.vertices.insert(m.vertices.end(), {a, b, c, d});
        m.faces.emplace_back(base, base + 1, base + 2);
        m.faces.emplace_back(base, base + 2, base + 3);
    };
    const double x0 = lo.x(), y0 = lo.y(), z0 = lo.z(), x1 = hi.x(), y1 = hi.y(), z1 = hi.z();
    quad({x0, y0, z1}, {x1, y0, z1}, {x1, y1, z1}, {x0, y1, z1});  // +z
    quad({x1, y0, z0}, {x0, y0, z0}, {x0, y1, z0}, {x1, y1, z0});  // -z
    quad({x1, y0, z1}, {x1, y0, z0}, {x1, y1, z0}, {x1, y1, z1});  // +x
    quad({x0, y0, z0}, {x0, y0, z1}, {x0, y1, z1}, {x0, y1, z0});  // -x
    quad({x0, y1, z1}, {x1, y1, z1}, {x1, y1, z0}, {x0, y1, z0});  // +y
    quad({x0, y0, z0}, {x1, y0, z0}, {x1, y0, z1}, {x0, y0, z1});  // -y
    return m;
}

namespace {

void validate_loaded(const TriMesh& mesh, const char* who, const std::filesystem::path& path) {
    try {
        mesh.validate();
    } catch (const InputError& e) {
        throw FormatError(std::string(who) + ": " + path.string() + ": " + e.what());
    }
}

} // namespace

void save_obj(const TriMesh& mesh, const std::filesystem::path& path) {
    mesh.validate();
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw IoError("save_obj: cannot open " + path.string());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const auto& v = mesh.vertices[i];
        if (mesh.has_colors()) {
            const auto& c = mesh.colors[i];
            std::fprintf(f, "v %.17g %.17g %.17g %.9g %.9g %.9g\n", v.x(), v.y(), v.z(), c.x(), c.y(), c.z());
        } else {
            std::fprintf(f, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        }
    }
    for (const auto& face : mesh.faces) std::fprintf(f, "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
    const bool ok = std::ferror(f) == 0;
    std::fclose(f);
    if (!ok) throw IoError("save_obj: write failed for " + path.string());
}

TriMesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_obj: cannot open " + path.string());
    TriMesh mesh;
    bool any_color = false, any_plain = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.size() < 2) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            double x, y, z;
            if (!(ss >> x >> y >> z)) throw FormatError("load_obj: bad vertex on line " + std::to_string(line_no));
            mesh.vertices.emplace_back(x, y, z);
            float r, g, b;
            if (ss >> r >> g >> b) {
                mesh.colors.emplace_back(r, g, b);
                any_color = true;
            } else {
                any_plain = true;
            }
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) {
                // Accept "a", "a/b", "a/b/c", "a//c"; negative indices are relative.
                int v = 0;
                const auto head = tok.substr(0, tok.find('/'));
                const auto [end, ec] = std::from_chars(head.data(), head.data() + head.size(), v);
                if (ec != std::errc() || end != head.data() + head.size() || v == 0)
                    throw FormatError("load_obj: bad face index on line " + std::to_string(line_no));
                idx.push_back(v > 0 ? v - 1 : static_cast<int>(mesh.vertices.size()) + v);
            }
            if (idx.size() < 3) throw FormatError("load_obj: face with < 3 vertices on line " + std::to_string(line_no));
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.emplace_back(idx[0], idx[k], idx[k + 1]);
        }
    }
    if (any_color && any_plain) throw FormatError("load_obj: vertex colors present on only some vertices");
    validate_loaded(mesh, "load_obj", path);
    return mesh;
}

void save_ply(const TriMesh& mesh, const std::filesystem::path& path) {
    mesh.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_ply: cannot open " + path.string());
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    if (mesh.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << mesh.faces.size() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        for (int k = 0; k < 3; ++k) detail::write_le(out, static_cast<float>(mesh.vertices[i][k]));
        if (mesh.has_colors())
            for (int k = 0; k < 3; ++k)
                detail::write_le(out, static_cast<std::uint8_t>(
                                          std::lround(std::clamp(mesh.colors[i][k], 0.0f, 1.0f) * 255.0f)));
    }
    for (const auto& f : mesh.faces) {
        detail::write_le<std::uint8_t>(out, 3);
        for (int k = 0; k < 3; ++k) detail::write_le<std::int32_t>(out, f[k]);
    }
    if (!out) throw IoError("save_ply: write failed for " + path.string());
}

TriMesh load_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_ply: cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "ply") throw FormatError("load_ply: missing 'ply' magic");

    struct Prop {
        std::string type, name;
    };
    std::size_t n_vert = 0, n_face = 0;
    std::vector<Prop> vprops;
    std::string face_count_type, face_index_type;
    std::string current;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "binary_little_endian") throw FormatError("load_ply: only binary_little_endian is supported");
        } else if (word == "element") {
            std::size_t count;
            ss >> current >> count;
            if (current == "vertex") n_vert = count;
            else if (current == "face") n_face = count;
            else if (count > 0) throw FormatError("load_ply: unsupported element '" + current + "'");
        } else if (word == "property") {
            std::string type;
            ss >> type;
            if (current == "vertex") {
                std::string name;
                ss >> name;
                vprops.push_back({type, name});
            } else if (current == "face" && type == "list") {
                ss >> face_count_type >> face_index_type;
            }
        } else if (word == "end_header") {
            break;
        }
    }
    auto read_scalar = [&](const std::string& type) -> double {
        bool ok = true;
        double v = 0.0;
        if (type == "float" || type == "float32") { float x; ok = detail::read_le(in, x); v = x; }
        else if (type == "double" || type == "float64") { double x; ok = detail::read_le(in, x); v = x; }
        else if (type == "uchar" || type == "uint8") { std::uint8_t x; ok = detail::read_le(in, x); v = x; }
        else if (type == "int" || type == "int32") { std::int32_t x; ok = detail::read_le(in, x); v = x; }
        else if (type == "uint" || type == "uint32") { std::uint32_t x; ok = detail::read_le(in, x); v = x; }
        else throw FormatError("load_ply: unsupported property type '" + type + "'");
        if (!ok) throw FormatError("load_ply: truncated body");
        return v;
    };

    TriMesh mesh;
    const bool has_color = std::any_of(vprops.begin(), vprops.end(), [](const Prop& p) { return p.name == "red"; });
    mesh.vertices.resize(n_vert);
    if (has_color) mesh.colors.resize(n_vert);
    for (std::size_t i = 0; i < n_vert; ++i) {
        for (const auto& p : vprops) {
            const double v = read_scalar(p.type);
            if (p.name == "x") mesh.vertices[i].x() = v;
            else if (p.name == "y") mesh.vertices[i].y() = v;
            else if (p.name == "z") mesh.vertices[i].z() = v;
            else if (p.name == "red") mesh.colors[i].x() = static_cast<float>(v / 255.0);
            else if (p.name == "green") mesh.colors[i].y() = static_cast<float>(v / 255.0);
            else if (p.name == "blue") mesh.colors[i].z() = static_cast<float>(v / 255.0);
        }
    }
    if (n_face > 0 && face_count_type.empty()) throw FormatError("load_ply: face element without a list property");
    for (std::size_t i = 0; i < n_face; ++i) {
        const int count = static_cast<int>(read_scalar(face_count_type));
        std::vector<int> idx(count);
        for (auto& v : idx) v = static_cast<int>(read_scalar(face_index_type));
        for (int k = 1; k + 1 < count; ++k) mesh.faces.emplace_back(idx[0], idx[k], idx[k + 1]);
    }
    validate_loaded(mesh, "load_ply", path);
    return mesh;
}

TriMesh load_mesh(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".obj" || ext == ".OBJ") return load_obj(path);
    if (ext == ".ply" || ext == ".PLY") return load_ply(path);
    throw InputError("load_mesh: unsupported extension '" + ext + "'");
}

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".obj" || ext == ".OBJ") return save_obj(mesh, path);
    if (ext == ".ply" || ext == ".PLY") return save_ply(mesh, path);
    throw InputError("save_mesh: unsupported extension '" + ext + "'");
}

} // namespace twinsplat

#include "twinsplat/isosurface.hpp"

#include <array>
#include <cstdint>
#include <unordered_map>

namespace twinsplat {

namespace {

// Cube corner c has offset (c & 1, (c >> 1) & 1, (c >> 2) & 1). The six
// tetrahedra share the main diagonal 0-7, so neighboring cubes agree on every
// face diagonal.
constexpr std::array<std::array<int, 4>, 6> kTets = {{{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
                                                      {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}}};

} // namespace

ScalarGrid sample_grid(const std::function<double(const Eigen::Vector3d&)>& field, int nx, int ny, int nz,
                       const Eigen::Vector3d& origin, double spacing) {
    ScalarGrid g(nx, ny, nz, origin, spacing);
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) g.at(i, j, k) = field(g.position(i, j, k));
    return g;
}

TriMesh extract_isosurface(const ScalarGrid& grid, double iso) {
    TriMesh mesh;
    std::unordered_map<std::uint64_t, int> edge_vertex;

    auto vertex_on_edge = [&](std::size_t a, std::size_t b, Eigen::Vector3d pa, Eigen::Vector3d pb, double va,
                              double vb) {
        // Canonical endpoint order so the position does not depend on visit order.
        if (a > b) {
            std::swap(a, b);
            std::swap(pa, pb);
            std::swap(va, vb);
        }
        const std::uint64_t key = static_cast<std::uint64_t>(a) * grid.values.size() + b;
        if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
        const double t = (iso - va) / (vb - va);
        const int idx = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(pa + t * (pb - pa));
        edge_vertex.emplace(key, idx);
        return idx;
    };

    for (int k = 0; k + 1 < grid.nz; ++k) {
        for (int j = 0; j + 1 < grid.ny; ++j) {
            for (int i = 0; i + 1 < grid.nx; ++i) {
                std::array<std::size_t, 8> id;
                std::array<double, 8> val;
                std::array<Eigen::Vector3d, 8> pos;
                int inside_mask = 0;
                for (int c = 0; c < 8; ++c) {
                    const int ci = i + (c & 1), cj = j + ((c >> 1) & 1), ck = k + ((c >> 2) & 1);
                    id[c] = grid.index(ci, cj, ck);
                    val[c] = grid.values[id[c]];
                    pos[c] = grid.position(ci, cj, ck);
                    if (val[c] >= iso) inside_mask |= 1 << c;
                }
                if (inside_mask == 0 || inside_mask == 0xff) continue;

                for (const auto& tet : kTets) {
                    int in[4], out[4], n_in = 0, n_out = 0;
                    for (int c : tet) (val[c] >= iso ? in[n_in++] : out[n_out++]) = c;
                    if (n_in == 0 || n_out == 0) continue;

                    auto edge = [&](int a, int b) { return vertex_on_edge(id[a], id[b], pos[a], pos[b], val[a], val[b]); };
                    Eigen::Vector3d in_centroid = Eigen::Vector3d::Zero(), out_centroid = Eigen::Vector3d::Zero();
                    for (int t = 0; t < n_in; ++t) in_centroid += pos[in[t]] / n_in;
                    for (int t = 0; t < n_out; ++t) out_centroid += pos[out[t]] / n_out;
                    const Eigen::Vector3d outward = out_centroid - in_centroid;

                    auto emit = [&](int a, int b, int c) {
                        const Eigen::Vector3d n =
                            (mesh.vertices[b] - mesh.vertices[a]).cross(mesh.vertices[c] - mesh.vertices[a]);
                        if (n.dot(outward) < 0.0) std::swap(b, c);
                        mesh.faces.emplace_back(a, b, c);
                    };

                    if (n_in == 1) {
                        emit(edge(in[0], out[0]), edge(in[0], out[1]), edge(in[0], out[2]));
                    } else if (n_in == 3) {
                        emit(edge(out[0], in[0]), edge(out[0], in[1]), edge(out[0], in[2]));
                    } else {
                        // Quad in cyclic order around the tetrahedron.
                        const int a = edge(in[0], out[0]), b = edge(in[0], out[1]);
                        const int c = edge(in[1], out[1]), d = edge(in[1], out[0]);
                        emit(a, b, c);
                        emit(a, c, d);
                    }
                }
            }
        }
    }
    return remove_degenerate_faces(mesh, 1e-12);
}

void fill_enclosed_cavities(ScalarGrid& grid, double iso, double fill_value) {
    const std::size_t n = grid.values.size();
    std::vector<char> outside(n, 0);
    std::vector<std::size_t> stack;
    auto seed = [&](int i, int j, int k) {
        const std::size_t idx = grid.index(i, j, k);
        if (!outside[idx] && grid.values[idx] < iso) {
            outside[idx] = 1;
            stack.push_back(idx);
        }
    };
    for (int k = 0; k < grid.nz; ++k)
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i)
                if (i == 0 || j == 0 || k == 0 || i == grid.nx - 1 || j == grid.ny - 1 || k == grid.nz - 1)
                    seed(i, j, k);
    while (!stack.empty()) {
        const std::size_t idx = stack.back();
        stack.pop_back();
        const int i = static_cast<int>(idx % grid.nx);
        const int j = static_cast<int>((idx / grid.nx) % grid.ny);
        const int k = static_cast<int>(idx / (static_cast<std::size_t>(grid.nx) * grid.ny));
        if (i > 0) seed(i - 1, j, k);
        if (i + 1 < grid.nx) seed(i + 1, j, k);
        if (j > 0) seed(i, j - 1, k);
        if (j + 1 < grid.ny) seed(i, j + 1, k);
        if (k > 0) seed(i, j, k - 1);
        if (k + 1 < grid.nz) seed(i, j, k + 1);
    }
    for (std::size_t idx = 0; idx < n; ++idx)
        if (!outside[idx] && grid.values[idx] < iso) grid.values[idx] = fill_value;
}

} // namespace twinsplat

#include "twinsplat/spatial.hpp"

#include "twinsplat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace twinsplat {

namespace {

constexpr int kLeafSize = 8;

double squared_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
}

double box_squared_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    double d = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double e = std::max({lo[k] - p[k], 0.0, p[k] - hi[k]});
        d += e * e;
    }
    return d;
}

} // namespace

KdTree::KdTree(std::span<const Eigen::Vector3d> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) throw InputError("KdTree: empty point set");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<int>(points_.size()), 0);
}

int KdTree::build(int begin, int end, int depth) {
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end, -1, 0.0, -1, -1});
    if (end - begin <= kLeafSize) return idx;

    Eigen::Vector3d lo = points_[order_[begin]], hi = lo;
    for (int i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return idx;  // all points coincide

    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    nodes_[idx].axis = axis;
    nodes_[idx].split = split;
    nodes_[idx].left = left;
    nodes_[idx].right = right;
    return idx;
}

void KdTree::search(int node_idx, const Eigen::Vector3d& q, Hit& best) const {
    const Node& node = nodes_[node_idx];
    if (node.axis < 0) {
        for (int i = node.begin; i < node.end; ++i) {
            const int p = order_[i];
            const double d = squared_distance(q, points_[p]);
            if (d < best.squared_distance || (d == best.squared_distance && p < best.index)) {
                best.squared_distance = d;
                best.index = p;
            }
        }
        return;
    }
    // Left subtree holds coordinates <= split, right holds >= split.
    const double diff = q[node.axis] - node.split;
    const int near = diff <= 0.0 ? node.left : node.right;
    const int far = diff <= 0.0 ? node.right : node.left;
    search(near, q, best);
    if (diff * diff <= best.squared_distance) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Eigen::Vector3d& query) const {
    Hit best{-1, std::numeric_limits<double>::infinity()};
    search(0, query, best);
    return best;
}

std::vector<int> KdTree::within(const Eigen::Vector3d& query, double radius) const {
    std::vector<int> out;
    const double r2 = radius * radius;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const Node& node = nodes_[stack.back()];
        stack.pop_back();
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i)
                if (squared_distance(query, points_[order_[i]]) <= r2) out.push_back(order_[i]);
            continue;
        }
        const double diff = query[node.axis] - node.split;
        if (diff <= radius) stack.push_back(node.left);
        if (diff >= -radius) stack.push_back(node.right);
    }
    std::sort(out.begin(), out.end());
    return out;
}

Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
    // Voronoi-region walk over vertices, edges and the face interior.
    const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;
    const Eigen::Vector3d bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
    const Eigen::Vector3d cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

TriangleBvh::TriangleBvh(const TriMesh& mesh) : vertices_(mesh.vertices), faces_(mesh.faces) {
    if (faces_.empty()) throw InputError("TriangleBvh: mesh has no faces");
    mesh.validate();
    order_.resize(faces_.size());
    std::iota(order_.begin(), order_.end(), 0);
    centroids_.resize(faces_.size());
    for (std::size_t i = 0; i < faces_.size(); ++i)
        centroids_[i] = (vertices_[faces_[i][0]] + vertices_[faces_[i][1]] + vertices_[faces_[i][2]]) / 3.0;
    build(0, static_cast<int>(faces_.size()));
}

int TriangleBvh::build(int begin, int end) {
    const int idx = static_cast<int>(nodes_.size());
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int i = begin; i < end; ++i)
        for (int k = 0; k < 3; ++k) {
            node.lo = node.lo.cwiseMin(vertices_[faces_[order_[i]][k]]);
            node.hi = node.hi.cwiseMax(vertices_[faces_[order_[i]][k]]);
        }
    nodes_.push_back(node);
    if (end - begin <= 4) return idx;

    int axis = 0;
    (node.hi - node.lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return centroids_[a][axis] < centroids_[b][axis]; });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[idx].left = left;
    nodes_[idx].right = right;
    return idx;
}

void TriangleBvh::search(int node_idx, const Eigen::Vector3d& p, double& best_sq) const {
    const Node& node = nodes_[node_idx];
    if (box_squared_distance(p, node.lo, node.hi) > best_sq) return;
    if (node.left < 0) {
        for (int i = node.begin; i < node.end; ++i) {
            const auto& f = faces_[order_[i]];
            const Eigen::Vector3d c = closest_point_on_triangle(p, vertices_[f[0]], vertices_[f[1]], vertices_[f[2]]);
            best_sq = std::min(best_sq, squared_distance(p, c));
        }
        return;
    }
    const double dl = box_squared_distance(p, nodes_[node.left].lo, nodes_[node.left].hi);
    const double dr = box_squared_distance(p, nodes_[node.right].lo, nodes_[node.right].hi);
    if (dl <= dr) {
        search(node.left, p, best_sq);
        search(node.right, p, best_sq);
    } else {
        search(node.right, p, best_sq);
        search(node.left, p, best_sq);
    }
}

double TriangleBvh::distance(const Eigen::Vector3d& p) const {
    double best = std::numeric_limits<double>::infinity();
    search(0, p, best);
    return std::sqrt(best);
}

} // namespace twinsplat

#pragma once

#include "twinsplat/mesh.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace twinsplat {

/// Exact nearest-neighbor search over a static 3D point set.
class KdTree {
public:
    explicit KdTree(std::span<const Eigen::Vector3d> points);

    struct Hit {
        int index = -1;
        double squared_distance = 0.0;
    };

    /// Nearest point; equidistant candidates resolve to the lowest index.
    [[nodiscard]] Hit nearest(const Eigen::Vector3d& query) const;

    /// Indices of all points within `radius` of the query, ascending.
    [[nodiscard]] std::vector<int> within(const Eigen::Vector3d& query, double radius) const;

    [[nodiscard]] std::size_t size() const { return points_.size(); }

private:
    struct Node {
        int begin = 0, end = 0;  // range in order_
        int axis = -1;           // -1 for leaves
        double split = 0.0;
        int left = -1, right = -1;
    };

    int build(int begin, int end, int depth);
    void search(int node, const Eigen::Vector3d& q, Hit& best) const;

    std::vector<Eigen::Vector3d> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

/// Closest point on triangle (a, b, c) to p.
[[nodiscard]] Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                                        const Eigen::Vector3d& b, const Eigen::Vector3d& c);

/// Bounding-volume hierarchy over a mesh's faces for exact point-to-surface distance.
class TriangleBvh {
public:
    explicit TriangleBvh(const TriMesh& mesh);

    /// Euclidean distance from p to the closest point of any face.
    [[nodiscard]] double distance(const Eigen::Vector3d& p) const;

private:
    struct Node {
        Eigen::Vector3d lo, hi;
        int begin = 0, end = 0;
        int left = -1, right = -1;
    };

    int build(int begin, int end);
    void search(int node, const Eigen::Vector3d& p, double& best_sq) const;

    std::vector<Eigen::Vector3d> vertices_;
    std::vector<Eigen::Vector3i> faces_;
    std::vector<int> order_;
    std::vector<Eigen::Vector3d> centroids_;
    std::vector<Node> nodes_;
};

} // namespace twinsplat

#pragma once

#include "geosep/types.hpp"

#include <utility>
#include <vector>

namespace geosep {

/// Exact k-nearest-neighbour search over a fixed point set (Euclidean).
class KdTree {
public:
    struct Hit {
        double dist2;
        int index;
        bool operator<(const Hit& o) const { return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index); }
    };

    explicit KdTree(PointMatrix points, int leaf_size = 12);

    /// The k nearest points to q, nearest first. `exclude` skips one index.
    std::vector<Hit> knn(const double* q, int k, int exclude = -1) const;

    int size() const { return static_cast<int>(points_.rows()); }
    int dim() const { return static_cast<int>(points_.cols()); }
    const PointMatrix& points() const { return points_; }

private:
    struct Node {
        int begin, end;    // range in order_
        int axis = -1;     // -1 for leaves
        double split = 0;
        int left = -1, right = -1;
    };

    int build(int begin, int end);
    void search(int node, const double* q, int k, int exclude, std::vector<Hit>& heap) const;

    PointMatrix points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int leaf_size_;
};

}  // namespace geosep

#include "geosep/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace geosep {

KdTree::KdTree(PointMatrix points, int leaf_size) : points_(std::move(points)), leaf_size_(std::max(1, leaf_size)) {
    order_.resize(static_cast<std::size_t>(points_.rows()));
    std::iota(order_.begin(), order_.end(), 0);
    if (!order_.empty()) build(0, static_cast<int>(order_.size()));
}

int KdTree::build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= leaf_size_) return id;

    const int d = dim();
    int axis = 0;
    double best = -1;
    for (int a = 0; a < d; ++a) {
        double lo = points_(order_[begin], a), hi = lo;
        for (int i = begin + 1; i < end; ++i) {
            const double v = points_(order_[i], a);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo > best) {
            best = hi - lo;
            axis = a;
        }
    }
    if (best <= 0) return id;  // all points coincide

    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
        const double va = points_(a, axis), vb = points_(b, axis);
        return va < vb || (va == vb && a < b);
    });
    nodes_[id].axis = axis;
    nodes_[id].split = points_(order_[mid], axis);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

void KdTree::search(int node_id, const double* q, int k, int exclude, std::vector<Hit>& heap) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
        const int d = dim();
        for (int i = node.begin; i < node.end; ++i) {
            const int idx = order_[i];
            if (idx == exclude) continue;
            const double* p = points_.row(idx).data();
            double s = 0;
            for (int a = 0; a < d; ++a) {
                const double t = p[a] - q[a];
                s += t * t;
            }
            const Hit h{s, idx};
            if (static_cast<int>(heap.size()) < k) {
                heap.push_back(h);
                std::push_heap(heap.begin(), heap.end());
            } else if (h < heap.front()) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = h;
                std::push_heap(heap.begin(), heap.end());
            }
        }
        return;
    }
    const double diff = q[node.axis] - node.split;
    const int near = diff < 0 ? node.left : node.right;
    const int far = diff < 0 ? node.right : node.left;
    search(near, q, k, exclude, heap);
    if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().dist2) search(far, q, k, exclude, heap);
}

std::vector<KdTree::Hit> KdTree::knn(const double* q, int k, int exclude) const {
    std::vector<Hit> heap;
    if (k <= 0 || nodes_.empty()) return heap;
    heap.reserve(static_cast<std::size_t>(k));
    search(0, q, k, exclude, heap);
    std::sort(heap.begin(), heap.end());
    return heap;
}

}  // namespace geosep

#pragma once

// Per-class weighted directed graphs over embeddings.
//
// Edge weights come from a softmax over each source row of inverse Euclidean
// distances, so w(i->j) != w(j->i) in general. Two constructions: keep every
// edge with weight >= eta, or keep each node's k nearest neighbours.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

#include "infodist/embedding_io.hpp"
#include "infodist/matrix.hpp"

namespace infodist {

using NodeIndex = std::uint32_t;

struct Edge {
    NodeIndex source = 0;
    NodeIndex target = 0;
    double weight = 0.0;

    friend bool operator==(const Edge&, const Edge&) = default;
};

struct ClassGraph {
    ClassLabel class_label = 0;
    std::vector<ItemId> node_ids;  // node ordinal -> EmbeddingSet id
    std::vector<Edge> edges;       // sorted by (source, target), no self-loops

    std::size_t num_nodes() const { return node_ids.size(); }
};

enum class GraphMode { Threshold, Knn };

struct GraphConfig {
    GraphMode mode = GraphMode::Threshold;
    double eta = 0.004;
    std::uint32_t k = 10;
    double epsilon = 1e-12;
    bool l2_normalize = false;
};

inline constexpr double kDefaultDistanceEpsilon = 1e-12;

namespace detail {

inline double euclidean(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        s += d * d;
    }
    return std::sqrt(s);
}

inline DenseMatrix class_distances(const EmbeddingSet& set, const std::vector<ItemId>& ids) {
    const std::size_t n = ids.size();
    DenseMatrix d(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = euclidean(set.row(ids[i]), set.row(ids[j]));
            d(i, j) = v;
            d(j, i) = v;
        }
    return d;
}

// Softmax over `values` in place, with max subtraction and left-to-right sum.
inline void softmax_in_place(std::span<double> values) {
    const double top = *std::max_element(values.begin(), values.end());
    double sum = 0.0;
    for (auto& v : values) {
        v = std::exp(v - top);
        sum += v;
    }
    for (auto& v : values) v /= sum;
}

}  // namespace detail

// Entry (i, j) = 1 / (|v_i - v_j| + epsilon); the diagonal holds 0 and is
// ignored by softmax_row_weights.
inline DenseMatrix pairwise_inverse_distances(const EmbeddingSet& set, ClassLabel class_label,
                                              double epsilon = kDefaultDistanceEpsilon) {
    const auto ids = set.ids_of_class(class_label);
    if (ids.size() < 2)
        throw std::invalid_argument(fmt::format("class {} has {} items, need at least 2", class_label, ids.size()));
    DenseMatrix inv = detail::class_distances(set, ids);
    for (std::size_t i = 0; i < inv.rows(); ++i)
        for (std::size_t j = 0; j < inv.cols(); ++j) inv(i, j) = (i == j) ? 0.0 : 1.0 / (inv(i, j) + epsilon);
    return inv;
}

inline DenseMatrix softmax_row_weights(const DenseMatrix& inv_dist) {
    if (!inv_dist.square() || inv_dist.rows() < 2)
        throw std::invalid_argument("softmax_row_weights needs a square matrix of size >= 2");
    const std::size_t n = inv_dist.rows();
    DenseMatrix w(n, n, 0.0);
    std::vector<double> scratch(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t t = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) scratch[t++] = inv_dist(i, j);
        detail::softmax_in_place(scratch);
        t = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) w(i, j) = scratch[t++];
    }
    return w;
}

inline ClassGraph threshold_graph(const DenseMatrix& weights, ClassLabel class_label, std::vector<ItemId> node_ids,
                                  double eta) {
    if (!weights.square() || weights.rows() != node_ids.size())
        throw std::invalid_argument("weight matrix does not match node count");
    ClassGraph g;
    g.class_label = class_label;
    g.node_ids = std::move(node_ids);
    const std::size_t n = weights.rows();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && weights(i, j) >= eta)
                g.edges.push_back({static_cast<NodeIndex>(i), static_cast<NodeIndex>(j), weights(i, j)});
    return g;
}

// Each node links to its k nearest neighbours (ties to the smaller ordinal),
// weighted by the softmax of inverse distances over those k.
inline ClassGraph knn_graph(const EmbeddingSet& set, ClassLabel class_label, std::uint32_t k,
                            double epsilon = kDefaultDistanceEpsilon) {
    auto ids = set.ids_of_class(class_label);
    const std::size_t n = ids.size();
    if (k == 0 || k >= n)
        throw std::invalid_argument(fmt::format("knn_graph needs 0 < k < class size, got k={} for {} nodes", k, n));
    const DenseMatrix dist = detail::class_distances(set, ids);

    ClassGraph g;
    g.class_label = class_label;
    g.node_ids = std::move(ids);
    g.edges.reserve(n * k);
    std::vector<NodeIndex> order(n);
    std::vector<double> w(k);
    for (std::size_t i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), NodeIndex{0});
        std::swap(order[i], order[n - 1]);
        const auto others = std::span(order).first(n - 1);
        std::partial_sort(others.begin(), others.begin() + k, others.end(), [&](NodeIndex a, NodeIndex b) {
            return dist(i, a) != dist(i, b) ? dist(i, a) < dist(i, b) : a < b;
        });
        std::sort(others.begin(), others.begin() + k);
        for (std::size_t t = 0; t < k; ++t) w[t] = 1.0 / (dist(i, others[t]) + epsilon);
        detail::softmax_in_place(w);
        for (std::size_t t = 0; t < k; ++t) g.edges.push_back({static_cast<NodeIndex>(i), others[t], w[t]});
    }
    return g;
}

inline ClassGraph build_class_graph(const EmbeddingSet& set, ClassLabel class_label, const GraphConfig& config) {
    if (config.mode == GraphMode::Knn) return knn_graph(set, class_label, config.k, config.epsilon);
    const auto weights = softmax_row_weights(pairwise_inverse_distances(set, class_label, config.epsilon));
    return threshold_graph(weights, class_label, set.ids_of_class(class_label), config.eta);
}

// Header "class n_nodes n_edges", then "src dst weight" per edge.
inline void write_graph_dump(std::ostream& out, const ClassGraph& g) {
    out << fmt::format("{} {} {}\n", g.class_label, g.num_nodes(), g.edges.size());
    for (const auto& e : g.edges) out << fmt::format("{} {} {:.17g}\n", e.source, e.target, e.weight);
}

}  // namespace infodist

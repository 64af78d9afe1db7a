#pragma once

// Two-level map equation over a ClassGraph.
//
// Flow model: PageRank-style walk with recorded teleportation. Visit rates p
// solve p = t/n + (1 - t) p^T P. Module i exits with
//   q_i = (1 - t) * sum_{a in i} p_a * sum_{b not in i} P_ab + t * P_i * (1 - n_i / n)
// where P_i is the module's visit mass and n_i its node count. With
// p_stay_i = q_i + P_i and q = sum_i q_i the codelength in bits is
//   L = q H(Q) + sum_i p_stay_i H(P^i).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

#include "infodist/error.hpp"
#include "infodist/graph_builder.hpp"
#include "infodist/matrix.hpp"

namespace infodist {

using ModuleIndex = std::uint32_t;

struct Partition {
    std::vector<ModuleIndex> assignment;
    ModuleIndex num_modules = 0;

    std::size_t num_nodes() const { return assignment.size(); }

    std::vector<std::size_t> module_sizes() const {
        std::vector<std::size_t> sizes(num_modules, 0);
        for (auto m : assignment) ++sizes[m];
        return sizes;
    }

    std::vector<std::vector<NodeIndex>> members() const {
        std::vector<std::vector<NodeIndex>> out(num_modules);
        for (std::size_t v = 0; v < assignment.size(); ++v) out[assignment[v]].push_back(static_cast<NodeIndex>(v));
        return out;
    }

    static Partition singletons(std::size_t n) {
        Partition p;
        p.assignment.resize(n);
        for (std::size_t v = 0; v < n; ++v) p.assignment[v] = static_cast<ModuleIndex>(v);
        p.num_modules = static_cast<ModuleIndex>(n);
        return p;
    }

    static Partition single_module(std::size_t n) {
        Partition p;
        p.assignment.assign(n, 0);
        p.num_modules = n > 0 ? 1 : 0;
        return p;
    }

    // Relabels arbitrary module ids to 0..m-1 in order of first appearance.
    static Partition compact(std::span<const ModuleIndex> raw) {
        Partition p;
        p.assignment.resize(raw.size());
        std::vector<ModuleIndex> remap;
        for (std::size_t v = 0; v < raw.size(); ++v) {
            if (raw[v] >= remap.size()) remap.resize(raw[v] + std::size_t{1}, std::numeric_limits<ModuleIndex>::max());
            if (remap[raw[v]] == std::numeric_limits<ModuleIndex>::max()) remap[raw[v]] = p.num_modules++;
            p.assignment[v] = remap[raw[v]];
        }
        return p;
    }

    friend bool operator==(const Partition&, const Partition&) = default;
};

struct FlowConfig {
    double teleport = 0.15;
    double tolerance = 1e-12;
    std::size_t max_iterations = 10'000;
};

// Row i holds node i's out-weights renormalised to 1. Dangling nodes get a
// uniform row over all other nodes.
inline DenseMatrix transition_matrix(const ClassGraph& graph) {
    const std::size_t n = graph.num_nodes();
    if (n < 2) throw std::invalid_argument("graph too small: need at least 2 nodes for a random walk");
    DenseMatrix P(n, n, 0.0);
    std::vector<double> out_weight(n, 0.0);
    for (const auto& e : graph.edges) {
        if (e.source == e.target) throw std::invalid_argument("self-loop in class graph");
        P(e.source, e.target) += e.weight;
        out_weight[e.source] += e.weight;
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto row = P.row(i);
        if (out_weight[i] > 0.0) {
            for (auto& x : row) x /= out_weight[i];
        } else {
            const double u = 1.0 / static_cast<double>(n - 1);
            for (std::size_t j = 0; j < n; ++j) row[j] = (j == i) ? 0.0 : u;
        }
    }
    return P;
}

// Power iteration from the uniform vector until the L1 change drops below
// `tolerance`.
inline std::vector<double> visit_rates(const DenseMatrix& P, double teleport, double tolerance = 1e-12,
                                       std::size_t max_iterations = 10'000) {
    if (!P.square() || P.rows() == 0) throw std::invalid_argument("transition matrix must be square and non-empty");
    if (!(teleport >= 0.0 && teleport < 1.0)) throw std::invalid_argument("teleport must be in [0, 1)");
    const std::size_t n = P.rows();
    const double base = teleport / static_cast<double>(n);
    std::vector<double> p(n, 1.0 / static_cast<double>(n));
    std::vector<double> next(n);
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t a = 0; a < n; ++a) {
            const double mass = (1.0 - teleport) * p[a];
            if (mass == 0.0) continue;
            const auto row = P.row(a);
            for (std::size_t b = 0; b < n; ++b) next[b] += mass * row[b];
        }
        double sum = 0.0;
        for (auto& x : next) {
            x += base;
            sum += x;
        }
        double change = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            next[b] /= sum;
            change += std::abs(next[b] - p[b]);
        }
        p.swap(next);
        if (change < tolerance) return p;
    }
    throw Error(fmt::format("visit rates did not converge within {} iterations", max_iterations));
}

// Transition matrix, stationary visit rates and the teleport rate they were
// computed with.
struct FlowNetwork {
    DenseMatrix transition;
    std::vector<double> visit_rates;
    double teleport = 0.15;

    std::size_t num_nodes() const { return visit_rates.size(); }
};

inline FlowNetwork compute_flow(const ClassGraph& graph, const FlowConfig& config = {}) {
    FlowNetwork net;
    net.transition = transition_matrix(graph);
    net.visit_rates = visit_rates(net.transition, config.teleport, config.tolerance, config.max_iterations);
    net.teleport = config.teleport;
    return net;
}

struct FlowStats {
    std::vector<double> visit_rates;   // p_a per node
    std::vector<double> module_visit;  // sum of p_a over each module
    std::vector<double> module_exit;   // q_i
    std::vector<double> module_stay;   // q_i + module_visit_i
    double total_exit = 0.0;           // q
};

inline FlowStats module_flows(const FlowNetwork& net, const Partition& partition) {
    const std::size_t n = net.num_nodes();
    if (partition.num_nodes() != n) throw std::invalid_argument("partition size does not match flow network");
    const double t = net.teleport;
    FlowStats s;
    s.visit_rates = net.visit_rates;
    s.module_visit.assign(partition.num_modules, 0.0);
    s.module_exit.assign(partition.num_modules, 0.0);
    const auto sizes = partition.module_sizes();
    for (std::size_t a = 0; a < n; ++a) {
        const ModuleIndex i = partition.assignment[a];
        const double pa = net.visit_rates[a];
        s.module_visit[i] += pa;
        double leaving = 0.0;
        const auto row = net.transition.row(a);
        for (std::size_t b = 0; b < n; ++b)
            if (partition.assignment[b] != i) leaving += row[b];
        s.module_exit[i] += (1.0 - t) * pa * leaving +
                            t * pa * (1.0 - static_cast<double>(sizes[i]) / static_cast<double>(n));
    }
    s.module_stay.resize(partition.num_modules);
    for (std::size_t i = 0; i < partition.num_modules; ++i) {
        s.module_stay[i] = s.module_exit[i] + s.module_visit[i];
        s.total_exit += s.module_exit[i];
    }
    return s;
}

// Shannon entropy in bits of a distribution, 0 log 0 := 0.
inline double entropy_bits(std::span<const double> probabilities) {
    double h = 0.0;
    for (double x : probabilities)
        if (x > 0.0) h -= x * std::log2(x);
    return h;
}

inline double codelength(const FlowStats& stats, const Partition& partition) {
    const std::size_t m = partition.num_modules;
    double index_term = 0.0;
    if (stats.total_exit > 0.0) {
        std::vector<double> q(m);
        for (std::size_t i = 0; i < m; ++i) q[i] = stats.module_exit[i] / stats.total_exit;
        index_term = stats.total_exit * entropy_bits(q);
    }
    const auto members = partition.members();
    double module_term = 0.0;
    std::vector<double> dist;
    for (std::size_t i = 0; i < m; ++i) {
        const double stay = stats.module_stay[i];
        if (!(stay > 0.0)) continue;
        dist.clear();
        dist.push_back(stats.module_exit[i] / stay);
        for (auto a : members[i]) dist.push_back(stats.visit_rates[a] / stay);
        module_term += stay * entropy_bits(dist);
    }
    return index_term + module_term;
}

namespace detail {

inline double plogp(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

}  // namespace detail

// Incremental map-equation bookkeeping for single-node moves. Keeps per-module
// visit mass, internal flow and size, and evaluates L through the expansion
//   L = plogp(q) - 2 sum plogp(q_i) - sum_a plogp(p_a) + sum plogp(q_i + P_i).
// Empty modules are kept until the caller compacts.
class ModuleFlowTracker {
public:
    struct ModuleFlow {
        ModuleIndex module;
        double out = 0.0;  // p_v * sum of P_vb over b in module, b != v
        double in = 0.0;   // sum of p_a * P_av over a in module, a != v
    };

    ModuleFlowTracker(const FlowNetwork& net, const Partition& partition)
        : net_(&net), assignment_(partition.assignment), n_(net.num_nodes()) {
        if (partition.num_nodes() != n_) throw std::invalid_argument("partition size does not match flow network");
        const std::size_t m = partition.num_modules;
        visit_.assign(m, 0.0);
        internal_.assign(m, 0.0);
        size_.assign(m, 0);
        for (std::size_t a = 0; a < n_; ++a) {
            const ModuleIndex i = assignment_[a];
            visit_[i] += net.visit_rates[a];
            ++size_[i];
            const auto row = net.transition.row(a);
            double inside = 0.0;
            for (std::size_t b = 0; b < n_; ++b)
                if (assignment_[b] == i) inside += row[b];
            internal_[i] += net.visit_rates[a] * inside;
        }
        for (double pa : net.visit_rates) node_term_ += detail::plogp(pa);
        exit_.resize(m);
        for (std::size_t i = 0; i < m; ++i) exit_[i] = exit_of(visit_[i], internal_[i], size_[i]);
        refresh_totals();
        scratch_out_.assign(m, 0.0);
        scratch_in_.assign(m, 0.0);
        touched_flag_.assign(m, 0);
    }

    ModuleIndex module_of(NodeIndex v) const { return assignment_[v]; }
    std::span<const ModuleIndex> assignment() const { return assignment_; }
    std::size_t module_count() const { return visit_.size(); }
    std::size_t module_size(ModuleIndex i) const { return size_[i]; }

    double codelength() const {
        return detail::plogp(total_exit_) - 2.0 * exit_term_ - node_term_ + stay_term_;
    }

    // Flow between v and every module it exchanges flow with, v's own module
    // always included.
    std::vector<ModuleFlow> module_flows_of(NodeIndex v) {
        const auto& P = net_->transition;
        const auto& p = net_->visit_rates;
        touched_.clear();
        touch(assignment_[v]);
        const auto row = P.row(v);
        for (std::size_t b = 0; b < n_; ++b) {
            if (b == v) continue;
            const ModuleIndex j = assignment_[b];
            const double out = p[v] * row[b];
            const double in = p[b] * P(b, v);
            if (out == 0.0 && in == 0.0) continue;
            touch(j);
            scratch_out_[j] += out;
            scratch_in_[j] += in;
        }
        std::vector<ModuleFlow> result;
        result.reserve(touched_.size());
        for (auto j : touched_) {
            result.push_back({j, scratch_out_[j], scratch_in_[j]});
            scratch_out_[j] = 0.0;
            scratch_in_[j] = 0.0;
            touched_flag_[j] = 0;
        }
        return result;
    }

    // L(after moving v to target) - L(now), given v's flows from module_flows_of.
    double delta(NodeIndex v, ModuleIndex target, std::span<const ModuleFlow> flows) const {
        const ModuleIndex source = assignment_[v];
        if (source == target) throw std::invalid_argument("node already belongs to the target module");
        const auto [src_flow, dst_flow] = lookup(flows, source, target);
        const Moved moved = evaluate_move(v, source, target, src_flow, dst_flow);
        const double new_total = total_exit_ - exit_[source] - exit_[target] + moved.source_exit + moved.target_exit;
        return (detail::plogp(new_total) - detail::plogp(total_exit_)) -
               2.0 * (detail::plogp(moved.source_exit) + detail::plogp(moved.target_exit) -
                      detail::plogp(exit_[source]) - detail::plogp(exit_[target])) +
               (detail::plogp(moved.source_exit + moved.source_visit) +
                detail::plogp(moved.target_exit + moved.target_visit) -
                detail::plogp(exit_[source] + visit_[source]) - detail::plogp(exit_[target] + visit_[target]));
    }

    void apply(NodeIndex v, ModuleIndex target, std::span<const ModuleFlow> flows) {
        const ModuleIndex source = assignment_[v];
        if (source == target) return;
        const auto [src_flow, dst_flow] = lookup(flows, source, target);
        const Moved moved = evaluate_move(v, source, target, src_flow, dst_flow);
        visit_[source] = moved.source_visit;
        internal_[source] = moved.source_internal;
        exit_[source] = moved.source_exit;
        --size_[source];
        visit_[target] = moved.target_visit;
        internal_[target] = moved.target_internal;
        exit_[target] = moved.target_exit;
        ++size_[target];
        assignment_[v] = target;
        refresh_totals();
    }

private:
    struct Moved {
        double source_visit, source_internal, source_exit;
        double target_visit, target_internal, target_exit;
    };

    double exit_of(double visit, double internal, std::size_t size) const {
        const double t = net_->teleport;
        const double walk = std::max(0.0, visit - internal);
        return (1.0 - t) * walk + t * visit * (1.0 - static_cast<double>(size) / static_cast<double>(n_));
    }

    static std::pair<ModuleFlow, ModuleFlow> lookup(std::span<const ModuleFlow> flows, ModuleIndex source,
                                                    ModuleIndex target) {
        ModuleFlow s{source}, d{target};
        for (const auto& f : flows) {
            if (f.module == source) s = f;
            if (f.module == target) d = f;
        }
        return {s, d};
    }

    Moved evaluate_move(NodeIndex v, ModuleIndex source, ModuleIndex target, const ModuleFlow& src,
                        const ModuleFlow& dst) const {
        const double pv = net_->visit_rates[v];
        const double self = pv * net_->transition(v, v);
        Moved m{};
        m.source_visit = visit_[source] - pv;
        m.source_internal = internal_[source] - src.out - src.in - self;
        m.target_visit = visit_[target] + pv;
        m.target_internal = internal_[target] + dst.out + dst.in + self;
        if (size_[source] == 1) {
            m.source_visit = 0.0;
            m.source_internal = 0.0;
        }
        m.source_exit = exit_of(m.source_visit, m.source_internal, size_[source] - 1);
        m.target_exit = exit_of(m.target_visit, m.target_internal, size_[target] + 1);
        return m;
    }

    void refresh_totals() {
        total_exit_ = 0.0;
        exit_term_ = 0.0;
        stay_term_ = 0.0;
        for (std::size_t i = 0; i < exit_.size(); ++i) {
            total_exit_ += exit_[i];
            exit_term_ += detail::plogp(exit_[i]);
            stay_term_ += detail::plogp(exit_[i] + visit_[i]);
        }
    }

    void touch(ModuleIndex j) {
        if (!touched_flag_[j]) {
            touched_flag_[j] = 1;
            touched_.push_back(j);
        }
    }

    const FlowNetwork* net_;
    std::vector<ModuleIndex> assignment_;
    std::size_t n_;
    std::vector<double> visit_, internal_, exit_;
    std::vector<std::size_t> size_;
    double node_term_ = 0.0;
    double total_exit_ = 0.0, exit_term_ = 0.0, stay_term_ = 0.0;
    std::vector<double> scratch_out_, scratch_in_;
    std::vector<char> touched_flag_;
    std::vector<ModuleIndex> touched_;
};

// Change in L if `node` moves to `target_module`; only the source, target and
// index terms are recomputed. `stats` must describe `partition` on `net`.
inline double delta_codelength(const FlowNetwork& net, const FlowStats& stats, const Partition& partition,
                               NodeIndex node, ModuleIndex target_module) {
    if (node >= partition.num_nodes()) throw std::invalid_argument("node out of range");
    if (target_module >= partition.num_modules) throw std::invalid_argument("target module out of range");
    if (partition.assignment[node] == target_module)
        throw std::invalid_argument("node already belongs to the target module");
    if (stats.module_exit.size() != partition.num_modules)
        throw std::invalid_argument("flow stats do not match partition");
    ModuleFlowTracker tracker(net, partition);
    const auto flows = tracker.module_flows_of(node);
    return tracker.delta(node, target_module, flows);
}

}  // namespace infodist

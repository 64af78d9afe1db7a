#pragma once

// Greedy node moving on the map equation. Starts from singletons; each pass
// visits nodes in a freshly shuffled order and moves each node to the
// neighbouring module with the largest codelength decrease, immediately.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "infodist/map_equation.hpp"
#include "infodist/random.hpp"

namespace infodist {

struct OptimizerConfig {
    std::uint64_t seed = 0;
    std::size_t max_passes = 100;
    double min_improvement = 1e-10;
    bool record_trace = false;
};

struct PassLog {
    std::size_t pass = 0;
    std::size_t moves = 0;
    double codelength = 0.0;
};

struct DetectionResult {
    Partition partition;
    double codelength = 0.0;
    std::vector<PassLog> passes;
    std::vector<double> trace;  // L before any move, then after each applied move
};

// In- and out-neighbours of every node, deduplicated and sorted.
inline std::vector<std::vector<NodeIndex>> neighbour_lists(const ClassGraph& graph) {
    std::vector<std::vector<NodeIndex>> nb(graph.num_nodes());
    for (const auto& e : graph.edges) {
        nb[e.source].push_back(e.target);
        nb[e.target].push_back(e.source);
    }
    for (auto& list : nb) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return nb;
}

inline DetectionResult detect_communities(const ClassGraph& graph, const FlowNetwork& net,
                                          const OptimizerConfig& config = {}) {
    const std::size_t n = graph.num_nodes();
    if (n < 2) throw std::invalid_argument("detect_communities needs at least 2 nodes");
    if (net.num_nodes() != n) throw std::invalid_argument("flow network does not match graph");
    if (config.min_improvement < 0.0) throw std::invalid_argument("min_improvement must be >= 0");

    const auto neighbours = neighbour_lists(graph);
    ModuleFlowTracker tracker(net, Partition::singletons(n));
    Rng rng(config.seed);
    std::vector<NodeIndex> order(n);
    std::iota(order.begin(), order.end(), NodeIndex{0});
    std::vector<ModuleIndex> candidates;

    DetectionResult result;
    if (config.record_trace) result.trace.push_back(tracker.codelength());

    for (std::size_t pass = 0; pass < config.max_passes; ++pass) {
        rng.shuffle(std::span(order));
        std::size_t moves = 0;
        double improvement = 0.0;
        for (NodeIndex v : order) {
            if (neighbours[v].empty()) continue;
            const ModuleIndex current = tracker.module_of(v);
            candidates.clear();
            for (auto u : neighbours[v])
                if (tracker.module_of(u) != current) candidates.push_back(tracker.module_of(u));
            if (candidates.empty()) continue;
            std::sort(candidates.begin(), candidates.end());
            candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

            const auto flows = tracker.module_flows_of(v);
            ModuleIndex best = current;
            double best_delta = 0.0;
            for (auto c : candidates) {
                const double d = tracker.delta(v, c, flows);
                if (d < best_delta) {  // strict: ties keep the smaller index
                    best_delta = d;
                    best = c;
                }
            }
            if (best == current || -best_delta < config.min_improvement) continue;
            tracker.apply(v, best, flows);
            ++moves;
            improvement -= best_delta;
            if (config.record_trace) result.trace.push_back(tracker.codelength());
        }
        result.passes.push_back({pass, moves, tracker.codelength()});
        if (moves == 0 || improvement < config.min_improvement) break;
    }

    result.partition = Partition::compact(tracker.assignment());
    result.codelength = codelength(module_flows(net, result.partition), result.partition);
    return result;
}

inline DetectionResult detect_communities(const ClassGraph& graph, const FlowConfig& flow = {},
                                          const OptimizerConfig& config = {}) {
    return detect_communities(graph, compute_flow(graph, flow), config);
}

}  // namespace infodist

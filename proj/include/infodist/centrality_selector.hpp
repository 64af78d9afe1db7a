#pragma once

// Community-aware selection of N items per class: score nodes, give each
// community a quota proportional to its size, take the top scorers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "infodist/community_optimizer.hpp"
#include "infodist/embedding_io.hpp"
#include "infodist/graph_builder.hpp"
#include "infodist/map_equation.hpp"

namespace infodist {

enum class SelectionMetric { ModularCentrality, EnterFlow, ExitFlow };

// How the (intra, inter) pair becomes one score.
enum class Scalarization { L2, Sum };

struct CentralityComponents {
    double intra = 0.0;  // incident weight (in + out) to the node's own community
    double inter = 0.0;  // incident weight to every other community
};

inline double scalarize(const CentralityComponents& c, Scalarization s) {
    return s == Scalarization::L2 ? std::hypot(c.intra, c.inter) : c.intra + c.inter;
}

inline std::vector<CentralityComponents> modular_centrality_components(const ClassGraph& graph,
                                                                       const Partition& partition) {
    if (partition.num_nodes() != graph.num_nodes()) throw std::invalid_argument("partition does not match graph");
    std::vector<CentralityComponents> out(graph.num_nodes());
    for (const auto& e : graph.edges) {
        const bool same = partition.assignment[e.source] == partition.assignment[e.target];
        auto& s = out[e.source];
        auto& t = out[e.target];
        (same ? s.intra : s.inter) += e.weight;
        (same ? t.intra : t.inter) += e.weight;
    }
    return out;
}

inline std::vector<double> modular_centrality_scores(const ClassGraph& graph, const Partition& partition,
                                                     Scalarization s = Scalarization::L2) {
    const auto comps = modular_centrality_components(graph, partition);
    std::vector<double> scores(comps.size());
    for (std::size_t v = 0; v < comps.size(); ++v) scores[v] = scalarize(comps[v], s);
    return scores;
}

inline double modular_centrality(const ClassGraph& graph, const Partition& partition, NodeIndex node,
                                 Scalarization s = Scalarization::L2) {
    if (node >= graph.num_nodes()) throw std::invalid_argument("node out of range");
    CentralityComponents c;
    for (const auto& e : graph.edges) {
        if (e.source != node && e.target != node) continue;
        const NodeIndex other = e.source == node ? e.target : e.source;
        (partition.assignment[other] == partition.assignment[node] ? c.intra : c.inter) += e.weight;
    }
    return scalarize(c, s);
}

// Enter flow: sum_{b != a} p_b P_ba (1 - t). Exit flow: p_a (1 - P_aa)(1 - t).
inline double flow_score(const FlowNetwork& net, NodeIndex node, SelectionMetric metric) {
    if (node >= net.num_nodes()) throw std::invalid_argument("node out of range");
    const double walk = 1.0 - net.teleport;
    if (metric == SelectionMetric::ExitFlow)
        return net.visit_rates[node] * (1.0 - net.transition(node, node)) * walk;
    if (metric == SelectionMetric::EnterFlow) {
        double in = 0.0;
        for (std::size_t b = 0; b < net.num_nodes(); ++b)
            if (b != node) in += net.visit_rates[b] * net.transition(b, node);
        return in * walk;
    }
    throw std::invalid_argument("flow_score needs EnterFlow or ExitFlow");
}

// Largest-remainder quotas proportional to community size (remainder ties go
// to the lower index). When N >= m every community then receives at least
// one slot, taken from the community holding the most.
inline std::vector<std::size_t> allocate_quotas(const Partition& partition, std::size_t total) {
    const std::size_t n = partition.num_nodes();
    if (total > n) throw std::invalid_argument(fmt::format("cannot select {} of {} nodes", total, n));
    const auto sizes = partition.module_sizes();
    const std::size_t m = sizes.size();
    std::vector<std::size_t> quota(m, 0);
    if (total == 0 || m == 0) return quota;

    auto distribute = [&](std::size_t amount, const std::vector<char>& eligible) {
        std::size_t weight_sum = 0;
        for (std::size_t i = 0; i < m; ++i)
            if (eligible[i]) weight_sum += sizes[i];
        if (weight_sum == 0) return;
        std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder, index)
        std::size_t given = 0;
        for (std::size_t i = 0; i < m; ++i) {
            if (!eligible[i]) continue;
            const std::size_t num = amount * sizes[i];
            quota[i] += num / weight_sum;
            given += num / weight_sum;
            remainders.emplace_back(num % weight_sum, i);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; given < amount && r < remainders.size(); ++r, ++given) ++quota[remainders[r].second];
    };

    std::vector<char> eligible(m, 1);
    distribute(total, eligible);
    // Clamp and hand the surplus to communities with spare capacity.
    for (;;) {
        std::size_t surplus = 0;
        for (std::size_t i = 0; i < m; ++i)
            if (quota[i] > sizes[i]) {
                surplus += quota[i] - sizes[i];
                quota[i] = sizes[i];
            }
        if (surplus == 0) break;
        for (std::size_t i = 0; i < m; ++i) eligible[i] = quota[i] < sizes[i];
        distribute(surplus, eligible);
    }
    if (total >= m) {
        for (std::size_t i = 0; i < m; ++i) {
            if (quota[i] > 0) continue;
            std::size_t donor = 0;
            for (std::size_t j = 1; j < m; ++j)
                if (quota[j] > quota[donor]) donor = j;
            --quota[donor];
            quota[i] = 1;
        }
    }
    return quota;
}

inline std::vector<double> selection_scores(const ClassGraph& graph, const Partition& partition,
                                            const FlowNetwork& net, SelectionMetric metric,
                                            Scalarization scalarization = Scalarization::L2) {
    if (metric == SelectionMetric::ModularCentrality)
        return modular_centrality_scores(graph, partition, scalarization);
    std::vector<double> scores(graph.num_nodes());
    for (std::size_t v = 0; v < scores.size(); ++v) scores[v] = flow_score(net, static_cast<NodeIndex>(v), metric);
    return scores;
}

// Top quota_i nodes of every community by score (ties to the smaller ordinal);
// returns EmbeddingSet ids in ascending order.
inline std::vector<ItemId> select_by_scores(const ClassGraph& graph, const Partition& partition,
                                            std::span<const double> scores, std::span<const std::size_t> quotas) {
    std::vector<ItemId> chosen;
    const auto members = partition.members();
    for (std::size_t i = 0; i < members.size(); ++i) {
        auto list = members[i];
        std::stable_sort(list.begin(), list.end(), [&](NodeIndex a, NodeIndex b) { return scores[a] > scores[b]; });
        for (std::size_t r = 0; r < quotas[i]; ++r) chosen.push_back(graph.node_ids[list[r]]);
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

inline std::vector<ItemId> select_class(const ClassGraph& graph, const Partition& partition, const FlowNetwork& net,
                                        SelectionMetric metric, std::size_t total,
                                        Scalarization scalarization = Scalarization::L2) {
    const auto quotas = allocate_quotas(partition, total);
    const auto scores = selection_scores(graph, partition, net, metric, scalarization);
    return select_by_scores(graph, partition, scores, quotas);
}

// ---------------------------------------------------------------------------
// Whole-set distillation

struct DistillConfig {
    GraphConfig graph;
    FlowConfig flow;
    OptimizerConfig optimizer;
    SelectionMetric metric = SelectionMetric::ModularCentrality;
    Scalarization scalarization = Scalarization::L2;
    std::size_t per_class = 100;
    unsigned threads = 1;  // classes are independent and may run concurrently
};

struct ClassSelection {
    ClassLabel class_label = 0;
    std::vector<ItemId> ids;
    std::vector<std::size_t> community_sizes;
    std::vector<std::size_t> quotas;
    double codelength = 0.0;
    std::size_t passes = 0;
    std::size_t edges = 0;

    friend bool operator==(const ClassSelection&, const ClassSelection&) = default;
};

struct DistilledSelection {
    std::size_t per_class = 0;
    std::vector<ClassSelection> classes;  // indexed by class label

    std::vector<ItemId> all_ids() const {
        std::vector<ItemId> out;
        for (const auto& c : classes) out.insert(out.end(), c.ids.begin(), c.ids.end());
        return out;
    }

    friend bool operator==(const DistilledSelection&, const DistilledSelection&) = default;
};

inline ClassSelection distill_class(const EmbeddingSet& set, ClassLabel c, const DistillConfig& config) {
    auto ids = set.ids_of_class(c);
    if (ids.size() == config.per_class) {
        const std::size_t n = ids.size();
        return ClassSelection{c, std::move(ids), {n}, {n}, 0.0, 0, 0};
    }
    const ClassGraph graph = build_class_graph(set, c, config.graph);
    const FlowNetwork net = compute_flow(graph, config.flow);
    OptimizerConfig opt = config.optimizer;
    opt.seed ^= c;
    const DetectionResult detected = detect_communities(graph, net, opt);

    ClassSelection out;
    out.class_label = c;
    out.community_sizes = detected.partition.module_sizes();
    out.quotas = allocate_quotas(detected.partition, config.per_class);
    const auto scores = selection_scores(graph, detected.partition, net, config.metric, config.scalarization);
    out.ids = select_by_scores(graph, detected.partition, scores, out.quotas);
    out.codelength = detected.codelength;
    out.passes = detected.passes.size();
    out.edges = graph.edges.size();
    return out;
}

inline DistilledSelection distill(const EmbeddingSet& input, const DistillConfig& config) {
    validate(input, true);
    if (config.per_class == 0) throw std::invalid_argument("per-class selection size must be positive");
    const auto counts = input.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] < config.per_class)
            throw Error(fmt::format("class {} has {} items, fewer than the {} requested", c, counts[c],
                                    config.per_class));
    const EmbeddingSet normalized = config.graph.l2_normalize ? l2_normalized(input) : EmbeddingSet{};
    const EmbeddingSet& set = config.graph.l2_normalize ? normalized : input;

    DistilledSelection result;
    result.per_class = config.per_class;
    result.classes.resize(set.num_classes);
    const unsigned threads = std::max(1u, config.threads);
    for (std::size_t first = 0; first < set.num_classes; first += threads) {
        std::vector<std::future<ClassSelection>> jobs;
        const std::size_t last = std::min<std::size_t>(set.num_classes, first + threads);
        for (std::size_t c = first; c < last; ++c)
            jobs.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred, distill_class,
                                      std::cref(set), static_cast<ClassLabel>(c), std::cref(config)));
        for (std::size_t c = first; c < last; ++c) result.classes[c] = jobs[c - first].get();
    }
    return result;
}

// "class_label<TAB>item_id" per selected item, sorted by class then id.
inline void write_selection(std::ostream& out, const DistilledSelection& sel) {
    for (const auto& c : sel.classes)
        for (auto id : c.ids) out << c.class_label << '\t' << id << '\n';
}

inline DistilledSelection read_selection(std::istream& in) {
    std::map<ClassLabel, std::vector<ItemId>> by_class;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        long long c = -1, id = -1;
        if (!(ls >> c >> id) || c < 0 || id < 0) throw Error(fmt::format("malformed selection line {}", line_no));
        by_class[static_cast<ClassLabel>(c)].push_back(static_cast<ItemId>(id));
    }
    DistilledSelection sel;
    if (by_class.empty()) return sel;
    sel.classes.resize(by_class.rbegin()->first + std::size_t{1});
    for (std::size_t c = 0; c < sel.classes.size(); ++c) sel.classes[c].class_label = static_cast<ClassLabel>(c);
    for (auto& [c, ids] : by_class) {
        std::sort(ids.begin(), ids.end());
        sel.classes[c].ids = std::move(ids);
        sel.per_class = std::max(sel.per_class, sel.classes[c].ids.size());
    }
    return sel;
}

// Key-value sidecar with per-class community counts and quotas.
inline void write_selection_summary(std::ostream& out, const DistilledSelection& sel) {
    auto join = [](const std::vector<std::size_t>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    out << "per_class = " << sel.per_class << '\n';
    out << "classes = " << sel.classes.size() << '\n';
    for (const auto& c : sel.classes) {
        out << fmt::format("class.{}.selected = {}\n", c.class_label, c.ids.size());
        out << fmt::format("class.{}.edges = {}\n", c.class_label, c.edges);
        out << fmt::format("class.{}.communities = {}\n", c.class_label, c.community_sizes.size());
        out << fmt::format("class.{}.community_sizes = {}\n", c.class_label, join(c.community_sizes));
        out << fmt::format("class.{}.quotas = {}\n", c.class_label, join(c.quotas));
        out << fmt::format("class.{}.codelength = {:.12g}\n", c.class_label, c.codelength);
    }
}

}  // namespace infodist

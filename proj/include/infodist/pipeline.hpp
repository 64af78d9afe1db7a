#pragma once

// End-to-end runs: split, distill (or sample at random), train, evaluate,
// repeated over seeds with mean and sample standard deviation per metric.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "infodist/centrality_selector.hpp"
#include "infodist/distilled_trainer.hpp"
#include "infodist/embedding_io.hpp"
#include "infodist/error.hpp"
#include "infodist/eval_metrics.hpp"

namespace infodist {

struct HoldoutSplit {
    EmbeddingSet train;
    EmbeddingSet test;
    std::vector<ItemId> train_ids;  // position in `train` -> id in the source set
    std::vector<ItemId> test_ids;
};

// Stratified split: each class contributes round(n_c * test_fraction) items,
// clamped to [1, n_c - 1], to the test side. Both sides keep source order.
inline HoldoutSplit holdout_split(const EmbeddingSet& set, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test fraction must be in (0, 1)");
    validate(set);
    Rng rng(seed);
    std::vector<char> is_test(set.size(), 0);
    for (ClassLabel c = 0; c < set.num_classes; ++c) {
        auto ids = set.ids_of_class(c);
        if (ids.size() < 2) throw Error(fmt::format("class {} too small to split: {} items", c, ids.size()));
        auto take = static_cast<std::size_t>(std::llround(static_cast<double>(ids.size()) * test_fraction));
        take = std::clamp<std::size_t>(take, 1, ids.size() - 1);
        rng.shuffle(std::span(ids));
        for (std::size_t i = 0; i < take; ++i) is_test[ids[i]] = 1;
    }
    HoldoutSplit out;
    for (std::size_t i = 0; i < set.size(); ++i) (is_test[i] ? out.test_ids : out.train_ids).push_back(static_cast<ItemId>(i));
    out.train = subset(set, out.train_ids);
    out.test = subset(set, out.test_ids);
    return out;
}

// Uniform sampling of `per_class` ids per class without replacement.
inline DistilledSelection random_selection(const EmbeddingSet& set, std::size_t per_class, std::uint64_t seed) {
    Rng rng(seed);
    DistilledSelection sel;
    sel.per_class = per_class;
    sel.classes.resize(set.num_classes);
    for (ClassLabel c = 0; c < set.num_classes; ++c) {
        auto ids = set.ids_of_class(c);
        if (ids.size() < per_class)
            throw Error(fmt::format("class {} has {} items, fewer than the {} requested", c, ids.size(), per_class));
        for (std::size_t i = 0; i < per_class; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
            std::swap(ids[i], ids[j]);
        }
        ids.resize(per_class);
        std::sort(ids.begin(), ids.end());
        auto& cs = sel.classes[c];
        cs.class_label = c;
        cs.ids = std::move(ids);
        cs.community_sizes = {set.ids_of_class(c).size()};
        cs.quotas = {per_class};
    }
    return sel;
}

enum class SelectionMethod { InfoDist, Random };

inline std::string to_string(SelectionMethod m) { return m == SelectionMethod::InfoDist ? "infodist" : "random"; }

struct PipelineConfig {
    std::optional<std::filesystem::path> input;
    std::optional<FixtureSpec> fixture;
    DistillConfig distill;
    LossConfig loss;
    std::size_t runs = 5;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
    std::filesystem::path output_dir;  // empty: no artifacts written
    bool parallel_runs = false;
    bool reuse_artifacts = true;
};

struct RunReport {
    std::size_t run = 0;
    std::uint64_t seed = 0;
    EvalReport eval;
    std::size_t selected = 0;
};

struct MetricStats {
    double mean = 0.0;
    double stddev = 0.0;  // sample (n - 1); 0 for a single run
};

struct SummaryReport {
    SelectionMethod method = SelectionMethod::InfoDist;
    std::vector<RunReport> runs;
    MetricStats accuracy, macro_f1, macro_auc;
};

struct ComparisonReport {
    SummaryReport infodist;
    SummaryReport random;
    std::vector<double> accuracy_deltas;  // infodist - random, per run
    MetricStats accuracy_delta;
};

inline MetricStats metric_stats(std::span<const double> values) {
    MetricStats s;
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

inline void check_pipeline_config(const PipelineConfig& c) {
    if (c.input.has_value() == c.fixture.has_value())
        throw std::invalid_argument("exactly one of input path and fixture spec must be set");
    if (c.runs == 0) throw std::invalid_argument("runs must be positive");
    check_loss_config(c.loss);
}

inline EmbeddingSet load_pipeline_input(const PipelineConfig& c) {
    check_pipeline_config(c);
    return c.input ? read_embeddings(*c.input) : generate_fixture(*c.fixture);
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 14695981039346656037ull) {
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string graph_key(const GraphConfig& g) {
    return g.mode == GraphMode::Knn ? fmt::format("knn{}|eps{:.17g}|l2{}", g.k, g.epsilon, g.l2_normalize)
                                    : fmt::format("eta{:.17g}|eps{:.17g}|l2{}", g.eta, g.epsilon, g.l2_normalize);
}

inline std::string selection_key(const PipelineConfig& c, SelectionMethod m, std::uint64_t run_seed,
                                 std::uint64_t data_hash) {
    const auto& d = c.distill;
    if (m == SelectionMethod::Random)
        return fmt::format("random|data{:016x}|tf{:.17g}|split{}|n{}|seed{}", data_hash, c.test_fraction, c.seed,
                           d.per_class, run_seed);
    return fmt::format("infodist|data{:016x}|tf{:.17g}|split{}|{}|tp{:.17g}|tol{:.17g}|it{}|metric{}|sc{}|n{}|"
                       "passes{}|mi{:.17g}|seed{}",
                       data_hash, c.test_fraction, c.seed, graph_key(d.graph), d.flow.teleport, d.flow.tolerance,
                       d.flow.max_iterations, static_cast<int>(d.metric), static_cast<int>(d.scalarization),
                       d.per_class, d.optimizer.max_passes, d.optimizer.min_improvement, run_seed);
}

inline std::string loss_key(const LossConfig& l) {
    return fmt::format("rho{:.17g}|tau{:.17g}|lr{:.17g}|ep{}|bs{}|seed{}|neg{}", l.rho, l.tau, l.learning_rate,
                       l.epochs, l.batch_size, l.seed, static_cast<int>(l.negative_hinge));
}

inline std::string text_of(const auto& writer_arg, auto writer) {
    std::ostringstream os;
    writer(os, writer_arg);
    return os.str();
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
    detail::write_file_bytes(path, std::span<const char>(text.data(), text.size()));
}

}  // namespace detail

struct PreparedData {
    HoldoutSplit split;
    std::uint64_t data_hash = 0;
};

inline PreparedData prepare_data(const PipelineConfig& config) {
    const EmbeddingSet set = load_pipeline_input(config);
    validate(set, true);
    const auto bytes = encode_embeddings(set);
    return {holdout_split(set, config.test_fraction, config.seed),
            detail::fnv1a(std::string_view(bytes.data(), bytes.size()))};
}

// One run of one method. Stage failures are rethrown naming stage and run.
inline RunReport run_once(const PipelineConfig& config, const PreparedData& data, SelectionMethod method,
                          std::size_t run) {
    const std::uint64_t run_seed = config.seed ^ run;
    const auto& train_set = data.split.train;
    const bool artifacts = !config.output_dir.empty();
    const std::string tag = to_string(method);
    std::string stage = "select";
    try {
        const std::string sel_key = detail::selection_key(config, method, run_seed, data.data_hash);
        const std::string sel_hash = fmt::format("{:016x}", detail::fnv1a(sel_key));
        const auto sel_path = config.output_dir / fmt::format("selection-{}-{}.tsv", tag, sel_hash);

        DistilledSelection selection;
        if (artifacts && config.reuse_artifacts && std::filesystem::exists(sel_path)) {
            std::ifstream in(sel_path);
            selection = read_selection(in);
        } else if (method == SelectionMethod::InfoDist) {
            DistillConfig dc = config.distill;
            dc.optimizer.seed = run_seed;
            selection = distill(train_set, dc);
        } else {
            selection = random_selection(train_set, config.distill.per_class, run_seed);
        }
        if (artifacts) {
            detail::write_text(sel_path, detail::text_of(selection, write_selection));
            detail::write_text(sel_path.string() + ".summary",
                               detail::text_of(selection, write_selection_summary));
        }

        stage = "train";
        const auto local_ids = selection.all_ids();
        {
            const std::set<ItemId> test(data.split.test_ids.begin(), data.split.test_ids.end());
            for (auto id : local_ids) {
                if (id >= data.split.train_ids.size()) throw Error(fmt::format("selected id {} out of range", id));
                if (test.count(data.split.train_ids[id]))
                    throw Error(fmt::format("selected item {} belongs to the test split", data.split.train_ids[id]));
            }
        }
        LossConfig lc = config.loss;
        lc.seed = run_seed;
        const Classifier model = train(train_set, local_ids, lc);
        if (artifacts) {
            const auto model_hash = detail::fnv1a(detail::loss_key(lc), detail::fnv1a(sel_key));
            write_classifier(model, config.output_dir / fmt::format("model-{}-{:016x}.bin", tag, model_hash));
        }

        stage = "eval";
        const auto probs = predict_probabilities(model, data.split.test);
        RunReport rep;
        rep.run = run;
        rep.seed = run_seed;
        rep.eval = evaluate(probs, data.split.test.labels, data.split.test.num_classes);
        rep.selected = local_ids.size();
        return rep;
    } catch (const std::exception& e) {
        throw Error(fmt::format("stage '{}' failed in run {} ({}): {}", stage, run, tag, e.what()));
    }
}

inline SummaryReport summarize(SelectionMethod method, std::vector<RunReport> runs) {
    SummaryReport s;
    s.method = method;
    s.runs = std::move(runs);
    std::vector<double> acc, f1, auc;
    for (const auto& r : s.runs) {
        acc.push_back(r.eval.accuracy);
        f1.push_back(r.eval.macro_f1);
        auc.push_back(r.eval.macro_auc);
    }
    s.accuracy = metric_stats(acc);
    s.macro_f1 = metric_stats(f1);
    s.macro_auc = metric_stats(auc);
    return s;
}

inline SummaryReport run_method(const PipelineConfig& config, const PreparedData& data, SelectionMethod method) {
    if (!config.output_dir.empty()) std::filesystem::create_directories(config.output_dir);
    std::vector<RunReport> runs(config.runs);
    if (config.parallel_runs) {
        std::vector<std::future<RunReport>> jobs;
        for (std::size_t r = 0; r < config.runs; ++r)
            jobs.push_back(std::async(std::launch::async, run_once, std::cref(config), std::cref(data), method, r));
        for (std::size_t r = 0; r < config.runs; ++r) runs[r] = jobs[r].get();
    } else {
        for (std::size_t r = 0; r < config.runs; ++r) runs[r] = run_once(config, data, method, r);
    }
    return summarize(method, std::move(runs));
}

inline SummaryReport run_pipeline(const PipelineConfig& config) {
    return run_method(config, prepare_data(config), SelectionMethod::InfoDist);
}

inline SummaryReport run_random_baseline(const PipelineConfig& config) {
    return run_method(config, prepare_data(config), SelectionMethod::Random);
}

inline ComparisonReport run_comparison(const PipelineConfig& config) {
    const PreparedData data = prepare_data(config);
    ComparisonReport c;
    c.infodist = run_method(config, data, SelectionMethod::InfoDist);
    c.random = run_method(config, data, SelectionMethod::Random);
    for (std::size_t r = 0; r < config.runs; ++r)
        c.accuracy_deltas.push_back(c.infodist.runs[r].eval.accuracy - c.random.runs[r].eval.accuracy);
    c.accuracy_delta = metric_stats(c.accuracy_deltas);
    return c;
}

// ---------------------------------------------------------------------------
// Reporting

inline nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
    nlohmann::ordered_json j;
    if (c.input) j["input"] = c.input->generic_string();
    if (c.fixture) {
        const auto& f = *c.fixture;
        j["fixture"] = {{"seed", f.seed},
                        {"classes", f.num_classes},
                        {"clusters_per_class", f.clusters_per_class},
                        {"dim", f.dim},
                        {"count_per_class", f.count_per_class},
                        {"separation", f.separation},
                        {"noise_sigma", f.noise_sigma}};
    }
    const auto& d = c.distill;
    j["graph"] = d.graph.mode == GraphMode::Knn ? nlohmann::ordered_json{{"mode", "knn"}, {"k", d.graph.k}}
                                                : nlohmann::ordered_json{{"mode", "threshold"}, {"eta", d.graph.eta}};
    j["l2_normalize"] = d.graph.l2_normalize;
    j["teleport"] = d.flow.teleport;
    j["metric"] = d.metric == SelectionMetric::ModularCentrality ? "modular"
                  : d.metric == SelectionMetric::EnterFlow       ? "enter"
                                                                 : "exit";
    j["per_class"] = d.per_class;
    j["rho"] = c.loss.rho;
    j["tau"] = c.loss.tau;
    j["learning_rate"] = c.loss.learning_rate;
    j["epochs"] = c.loss.epochs;
    j["batch_size"] = c.loss.batch_size;
    j["neg_hinge"] = c.loss.negative_hinge == NegativeHinge::AsPrinted ? "as-printed" : "against-bn";
    j["runs"] = c.runs;
    j["seed"] = c.seed;
    j["test_fraction"] = c.test_fraction;
    return j;
}

inline nlohmann::ordered_json to_json(const MetricStats& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

inline nlohmann::ordered_json to_json(const SummaryReport& s) {
    nlohmann::ordered_json j;
    j["method"] = to_string(s.method);
    auto runs = nlohmann::ordered_json::array();
    for (const auto& r : s.runs) {
        nlohmann::ordered_json rj;
        rj["run"] = r.run;
        rj["seed"] = r.seed;
        rj["selected"] = r.selected;
        rj["eval"] = to_json(r.eval);
        runs.push_back(std::move(rj));
    }
    j["runs"] = std::move(runs);
    j["accuracy"] = to_json(s.accuracy);
    j["macro_f1"] = to_json(s.macro_f1);
    j["macro_auc"] = to_json(s.macro_auc);
    return j;
}

inline nlohmann::ordered_json to_json(const ComparisonReport& c) {
    nlohmann::ordered_json j;
    j["infodist"] = to_json(c.infodist);
    j["random"] = to_json(c.random);
    j["accuracy_deltas"] = c.accuracy_deltas;
    j["accuracy_delta"] = to_json(c.accuracy_delta);
    return j;
}

inline std::string format_table(const SummaryReport& s) {
    std::string out = fmt::format("method: {}\n{:>4} {:>20} {:>10} {:>10} {:>10}\n", to_string(s.method), "run", "seed",
                                  "acc", "f1", "auc");
    for (const auto& r : s.runs)
        out += fmt::format("{:>4} {:>20} {:>10.4f} {:>10.4f} {:>10.4f}\n", r.run, r.seed, 100 * r.eval.accuracy,
                           100 * r.eval.macro_f1, 100 * r.eval.macro_auc);
    out += fmt::format("{:>4} {:>20} {:>10.4f} {:>10.4f} {:>10.4f}\n", "mean", "", 100 * s.accuracy.mean,
                       100 * s.macro_f1.mean, 100 * s.macro_auc.mean);
    out += fmt::format("{:>4} {:>20} {:>10.4f} {:>10.4f} {:>10.4f}\n", "std", "", 100 * s.accuracy.stddev,
                       100 * s.macro_f1.stddev, 100 * s.macro_auc.stddev);
    return out;
}

inline std::string format_table(const ComparisonReport& c) {
    std::string out = format_table(c.infodist) + "\n" + format_table(c.random) + "\npaired accuracy deltas (infodist - random):\n";
    for (std::size_t r = 0; r < c.accuracy_deltas.size(); ++r)
        out += fmt::format("{:>4} {:>+10.4f}\n", r, 100 * c.accuracy_deltas[r]);
    out += fmt::format("mean {:>+10.4f} std {:.4f}\n", 100 * c.accuracy_delta.mean, 100 * c.accuracy_delta.stddev);
    return out;
}

// Writes summary.json (config + report) and summary.txt into the output
// directory when one is configured; returns the JSON text.
inline std::string write_summary(const PipelineConfig& config, const nlohmann::ordered_json& report,
                                 const std::string& table) {
    nlohmann::ordered_json doc;
    doc["config"] = config_to_json(config);
    doc["report"] = report;
    const std::string text = doc.dump(2) + "\n";
    if (!config.output_dir.empty()) {
        std::filesystem::create_directories(config.output_dir);
        detail::write_text(config.output_dir / "summary.json", text);
        detail::write_text(config.output_dir / "summary.txt", table);
    }
    return text;
}

}  // namespace infodist

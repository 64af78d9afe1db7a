// infodist command-line front end.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "infodist/infodist.hpp"

namespace {

using namespace infodist;

// Flat "key = value" config files apply to whichever subcommand is running.
class SubcommandConfig : public CLI::ConfigINI {
public:
    std::string section;

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        auto items = CLI::ConfigINI::from_config(input);
        for (auto& item : items)
            if (item.parents.empty() && item.name != "++" && item.name != "--" && !section.empty())
                item.parents = {section};
        return items;
    }
};

struct GraphFlags {
    GraphConfig graph;
    std::uint32_t knn = 0;

    void add(CLI::App* app) {
        app->add_option("--eta", graph.eta, "Minimum softmax edge weight kept")->capture_default_str();
        app->add_option("--knn", knn, "Use the k-nearest-neighbour graph instead of thresholding");
        app->add_flag("--l2-normalize", graph.l2_normalize, "L2-normalise embeddings before graph construction");
    }
    GraphConfig resolve() const {
        GraphConfig g = graph;
        if (knn > 0) {
            g.mode = GraphMode::Knn;
            g.k = knn;
        }
        return g;
    }
};

const std::map<std::string, SelectionMetric> kMetrics{{"modular", SelectionMetric::ModularCentrality},
                                                      {"enter", SelectionMetric::EnterFlow},
                                                      {"exit", SelectionMetric::ExitFlow}};
const std::map<std::string, Scalarization> kScalarizations{{"l2", Scalarization::L2}, {"sum", Scalarization::Sum}};
const std::map<std::string, NegativeHinge> kHinges{{"as-printed", NegativeHinge::AsPrinted},
                                                   {"against-bn", NegativeHinge::AgainstBn}};

void add_flow(CLI::App* app, FlowConfig& flow) {
    app->add_option("--teleport", flow.teleport, "Teleportation rate of the random walk")
        ->check(CLI::Range(0.0, 0.999999))
        ->capture_default_str();
}

void add_optimizer(CLI::App* app, OptimizerConfig& opt) {
    app->add_option("--seed", opt.seed, "Seed for node visiting order")->capture_default_str();
    app->add_option("--max-passes", opt.max_passes)->capture_default_str();
    app->add_option("--min-improvement", opt.min_improvement)->capture_default_str();
}

void add_selection(CLI::App* app, DistillConfig& d) {
    app->add_option("--metric", d.metric, "Node score used for selection")
        ->transform(CLI::CheckedTransformer(kMetrics, CLI::ignore_case));
    app->add_option("--scalarization", d.scalarization, "How intra/inter centrality combine")
        ->transform(CLI::CheckedTransformer(kScalarizations, CLI::ignore_case));
    app->add_option("--per-class", d.per_class, "Items selected per class")->capture_default_str();
    app->add_option("--threads", d.threads, "Classes distilled concurrently")->capture_default_str();
}

void add_loss(CLI::App* app, LossConfig& loss, bool with_seed) {
    app->add_option("--rho", loss.rho, "Fraction of in-batch positives above the positive boundary")
        ->capture_default_str();
    app->add_option("--tau", loss.tau, "Boundary margin")->capture_default_str();
    app->add_option("--lr", loss.learning_rate)->capture_default_str();
    app->add_option("--epochs", loss.epochs)->capture_default_str();
    app->add_option("--batch", loss.batch_size)->capture_default_str();
    app->add_option("--neg-hinge", loss.negative_hinge)->transform(CLI::CheckedTransformer(kHinges, CLI::ignore_case));
    if (with_seed) app->add_option("--seed", loss.seed)->capture_default_str();
}

void add_fixture(CLI::App* app, FixtureSpec& f, const std::string& seed_flag) {
    app->add_option(seed_flag, f.seed)->capture_default_str();
    app->add_option("--classes", f.num_classes)->capture_default_str();
    app->add_option("--clusters", f.clusters_per_class, "Clusters per class")->capture_default_str();
    app->add_option("--dim", f.dim)->capture_default_str();
    app->add_option("--count", f.count_per_class, "Items per class")->capture_default_str();
    app->add_option("--separation", f.separation, "Minimum distance between cluster means in noise units")
        ->capture_default_str();
    app->add_option("--sigma", f.noise_sigma)->capture_default_str();
}

std::ostream& open_output(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw Error(fmt::format("cannot open '{}' for writing", path));
    return file;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Community-based dataset distillation over embedding pools"};
    app.fallthrough();
    app.require_subcommand(1);
    app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
    app.allow_config_extras(CLI::config_extras_mode::error);
    auto config_format = std::make_shared<SubcommandConfig>();
    app.config_formatter(config_format);

    // gen-fixture
    FixtureSpec fixture;
    std::string fixture_out;
    auto* gen = app.add_subcommand("gen-fixture", "Write a seeded synthetic embedding pool");
    add_fixture(gen, fixture, "--seed");
    gen->add_option("--out", fixture_out, "Output embedding file")->required();

    // ingest
    std::string csv_in, ingest_out;
    std::uint32_t ingest_classes = 0;
    bool ingest_l2 = false;
    auto* ingest = app.add_subcommand("ingest", "Convert CSV embeddings to the binary format");
    ingest->add_option("--csv", csv_in, "CSV with header label,f0,...")->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", ingest_out)->required();
    ingest->add_option("--classes", ingest_classes, "Number of classes (default: max label + 1)");
    ingest->add_flag("--l2-normalize", ingest_l2);

    // graph / detect / select share input, class and graph flags
    std::string input_path, out_path;
    ClassLabel class_label = 0;
    GraphFlags graph_flags;
    DistillConfig distill_config;

    auto* graph = app.add_subcommand("graph", "Dump one class graph as 'src dst weight' lines");
    graph->add_option("--input", input_path)->required()->check(CLI::ExistingFile);
    graph->add_option("--class", class_label)->capture_default_str();
    graph_flags.add(graph);
    graph->add_option("--out", out_path, "Output file (default stdout)");

    auto* detect = app.add_subcommand("detect", "Detect communities in one class graph");
    detect->add_option("--input", input_path)->required()->check(CLI::ExistingFile);
    detect->add_option("--class", class_label)->capture_default_str();
    graph_flags.add(detect);
    add_flow(detect, distill_config.flow);
    add_optimizer(detect, distill_config.optimizer);
    detect->add_option("--out", out_path, "Write 'node_id module' lines here");

    auto* select = app.add_subcommand("select", "Distill N items per class");
    select->add_option("--input", input_path)->required()->check(CLI::ExistingFile);
    graph_flags.add(select);
    add_flow(select, distill_config.flow);
    add_optimizer(select, distill_config.optimizer);
    add_selection(select, distill_config);
    select->add_option("--out", out_path, "Selection file; a .summary sidecar is written next to it")->required();

    // train
    std::string selection_path;
    LossConfig loss;
    auto* train_cmd = app.add_subcommand("train", "Train the classifier on a selection");
    train_cmd->add_option("--input", input_path)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--selection", selection_path)->required()->check(CLI::ExistingFile);
    add_loss(train_cmd, loss, true);
    train_cmd->add_option("--out", out_path, "Model checkpoint")->required();

    // eval
    std::string model_path, json_path;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on an embedding file");
    eval->add_option("--input", input_path)->required()->check(CLI::ExistingFile);
    eval->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    eval->add_option("--json", json_path, "Also write the report as JSON");

    // pipeline / baseline
    PipelineConfig pipeline;
    FixtureSpec pipeline_fixture;
    pipeline_fixture.num_classes = 9;
    pipeline_fixture.count_per_class = 1000;
    pipeline_fixture.dim = 16;
    pipeline_fixture.separation = 3.0;
    std::string pipeline_input, out_dir;
    bool compare = false, no_cache = false, print_json = false;
    auto add_pipeline = [&](CLI::App* sub) {
        sub->add_option("--input", pipeline_input, "Embedding file (otherwise a fixture is generated)")
            ->check(CLI::ExistingFile);
        add_fixture(sub, pipeline_fixture, "--fixture-seed");
        graph_flags.add(sub);
        add_flow(sub, pipeline.distill.flow);
        add_selection(sub, pipeline.distill);
        sub->add_option("--max-passes", pipeline.distill.optimizer.max_passes)->capture_default_str();
        add_loss(sub, pipeline.loss, false);
        sub->add_option("--runs", pipeline.runs)->capture_default_str();
        sub->add_option("--seed", pipeline.seed, "Base seed; run r uses seed XOR r")->capture_default_str();
        sub->add_option("--test-fraction", pipeline.test_fraction)->capture_default_str();
        sub->add_option("--out-dir", out_dir, "Directory for artifacts and summary.json");
        sub->add_flag("--parallel-runs", pipeline.parallel_runs);
        sub->add_flag("--no-cache", no_cache, "Recompute stages even if artifacts exist");
        sub->add_flag("--json", print_json, "Print the JSON summary instead of the table");
    };
    auto* pipe = app.add_subcommand("pipeline", "Distill, train and evaluate over several runs");
    add_pipeline(pipe);
    pipe->add_flag("--compare", compare, "Also run the random baseline and report paired deltas");
    auto* baseline = app.add_subcommand("baseline", "Same as pipeline with uniform random selection");
    add_pipeline(baseline);

    for (int i = 1; i < argc; ++i)
        if (auto* sub = app.get_subcommand_no_throw(argv[i])) {
            config_format->section = sub->get_name();
            break;
        }

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            write_embeddings(generate_fixture(fixture), fixture_out);
            return 0;
        }
        if (*ingest) {
            auto set = read_embeddings_csv(csv_in, ingest_classes);
            if (ingest_l2) set = l2_normalized(std::move(set));
            write_embeddings(set, ingest_out);
            std::cout << fmt::format("{} items, dim {}, {} classes\n", set.size(), set.dim, set.num_classes);
            return 0;
        }
        if (*graph) {
            const auto set = read_embeddings(input_path);
            GraphConfig gc = graph_flags.resolve();
            const auto g = build_class_graph(gc.l2_normalize ? l2_normalized(set) : set, class_label, gc);
            std::ofstream file;
            write_graph_dump(open_output(out_path, file), g);
            return 0;
        }
        if (*detect) {
            const auto set = read_embeddings(input_path);
            GraphConfig gc = graph_flags.resolve();
            const auto g = build_class_graph(gc.l2_normalize ? l2_normalized(set) : set, class_label, gc);
            const auto result = detect_communities(g, distill_config.flow, distill_config.optimizer);
            for (const auto& p : result.passes)
                std::cout << fmt::format("pass {} moves {} codelength {:.12g}\n", p.pass, p.moves, p.codelength);
            std::cout << fmt::format("modules {} codelength {:.12g}\n", result.partition.num_modules,
                                     result.codelength);
            if (!out_path.empty()) {
                std::ofstream file;
                auto& os = open_output(out_path, file);
                for (std::size_t v = 0; v < g.num_nodes(); ++v)
                    os << g.node_ids[v] << ' ' << result.partition.assignment[v] << '\n';
            }
            return 0;
        }
        if (*select) {
            const auto set = read_embeddings(input_path);
            distill_config.graph = graph_flags.resolve();
            const auto sel = distill(set, distill_config);
            std::ofstream file(out_path);
            if (!file) throw Error(fmt::format("cannot open '{}' for writing", out_path));
            write_selection(file, sel);
            std::ofstream summary(out_path + ".summary");
            write_selection_summary(summary, sel);
            for (const auto& c : sel.classes)
                std::cout << fmt::format("class {}: {} communities, codelength {:.12g}\n", c.class_label,
                                         c.community_sizes.size(), c.codelength);
            return 0;
        }
        if (*train_cmd) {
            const auto set = read_embeddings(input_path);
            std::ifstream in(selection_path);
            const auto sel = read_selection(in);
            const auto model = train(set, sel.all_ids(), loss);
            write_classifier(model, out_path);
            return 0;
        }
        if (*eval) {
            const auto set = read_embeddings(input_path);
            const auto model = read_classifier(model_path);
            const auto report = evaluate(predict_probabilities(model, set), set.labels, set.num_classes);
            std::cout << to_key_value(report);
            if (!json_path.empty()) {
                std::ofstream out(json_path);
                out << to_json(report).dump(2) << '\n';
            }
            return 0;
        }
        if (*pipe || *baseline) {
            if (pipeline_input.empty())
                pipeline.fixture = pipeline_fixture;
            else
                pipeline.input = pipeline_input;
            pipeline.distill.graph = graph_flags.resolve();
            pipeline.output_dir = out_dir;
            pipeline.reuse_artifacts = !no_cache;
            nlohmann::ordered_json report;
            std::string table;
            if (*baseline) {
                const auto s = run_random_baseline(pipeline);
                report = to_json(s);
                table = format_table(s);
            } else if (compare) {
                const auto c = run_comparison(pipeline);
                report = to_json(c);
                table = format_table(c);
            } else {
                const auto s = run_pipeline(pipeline);
                report = to_json(s);
                table = format_table(s);
            }
            const std::string json = write_summary(pipeline, report, table);
            std::cout << (print_json ? json : table);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

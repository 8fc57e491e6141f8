#include "mlkg/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "mlkg/config.hpp"
#include "mlkg/corpus.hpp"
#include "mlkg/grad.hpp"
#include "mlkg/graph.hpp"
#include "mlkg/retrieval.hpp"
#include "mlkg/synthgen.hpp"
#include "mlkg/training.hpp"
#include "mlkg/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mlkg {

namespace {

struct CommandSpec {
    std::string name;
    std::string help;
    std::vector<std::string> keys;
    std::vector<std::string> required;
};

const std::vector<std::string> kEmbeddingKeys = {"embeddings", "embedding_dim", "hash_dim", "hash_seed"};
const std::vector<std::string> kModelKeys = {"dim", "layers", "query_attention"};
const std::vector<std::string> kTrainKeys = {"examples", "params",     "tau",        "negatives", "lr", "epochs",
                                             "checkpoint_every", "holdout", "batch_size"};

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts) {
    std::vector<std::string> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

std::vector<CommandSpec> command_specs() {
    return {
        {"build-graph", "Build a Multi-L KG from a corpus file", {"corpus", "out"}, {"corpus", "out"}},
        {"stats", "Print node and edge counts of a graph", {"graph"}, {"graph"}},
        {"synth", "Generate 1-hop and 2-hop training questions",
         concat({{"graph", "out", "cap", "seed", "negatives"}, kEmbeddingKeys}), {"graph", "out"}},
        {"pretrain", "Contrastive pretraining on synthetic questions",
         concat({{"graph", "out", "seed", "threads"}, kTrainKeys, kModelKeys, kEmbeddingKeys}),
         {"graph", "examples", "out"}},
        {"finetune", "Contrastive fine-tuning from a checkpoint",
         concat({{"graph", "out", "seed", "threads"}, kTrainKeys, kModelKeys, kEmbeddingKeys}),
         {"graph", "examples", "params", "out"}},
        {"retrieve", "Rank documents for one query",
         concat({{"graph", "params", "query", "k", "threads"}, kEmbeddingKeys}), {"graph", "params", "query"}},
        {"eval", "Recall@k over an eval file",
         concat({{"graph", "params", "examples", "out", "threads"}, kEmbeddingKeys}), {"graph", "params", "examples"}},
        {"grad-check", "Compare analytic gradients with central differences",
         concat({{"graph", "examples", "params", "seed", "tau", "negatives", "threads"}, kModelKeys, kEmbeddingKeys}),
         {"graph"}},
    };
}

std::string flag_name(const std::string& key) {
    std::string f = key;
    for (auto& c : f) {
        if (c == '_') c = '-';
    }
    return "--" + f;
}

void require_path(const std::string& key, const std::string& path) {
    if (!path.empty() && !fs::exists(path)) {
        throw ConfigError("path given by " + flag_name(key) + " does not exist: " + path);
    }
}

const std::string& setting(const RunConfig& c, const std::string& key) {
    if (key == "corpus") return c.corpus;
    if (key == "graph") return c.graph;
    if (key == "examples") return c.examples;
    if (key == "params") return c.params;
    if (key == "out") return c.out;
    if (key == "query") return c.query;
    if (key == "embeddings") return c.embeddings;
    static const std::string none;
    return none;
}

// Refuses to replace an existing output unless forced; with --force an
// existing directory output is removed first.
void prepare_output(const std::string& path, bool force, bool directory) {
    if (!fs::exists(path)) return;
    if (!force) throw ConfigError("output exists: " + path + " (use --force to overwrite)");
    if (directory) fs::remove_all(path);
}

struct Manifest {
    std::string command;
    const RunConfig* config = nullptr;
    std::vector<std::string> outputs;
    double wall_seconds = 0.0;

    std::string render() const {
        json j;
        j["command"] = command;
        j["version"] = kVersion;
        j["config_hash"] = config->hash();
        j["seed"] = config->seed;
        j["threads"] = config->threads;
        j["wall_time_seconds"] = wall_seconds;
        json outs = json::array();
        for (const auto& o : outputs) outs.push_back({{"path", o}, {"digest", file_digest(o)}});
        j["outputs"] = outs;
        json cfg = json::object();
        std::istringstream in(config->canonical());
        std::string line;
        while (std::getline(in, line)) {
            const auto eq = line.find('=');
            cfg[line.substr(0, eq)] = line.substr(eq + 1);
        }
        j["config"] = cfg;
        return j.dump(2) + "\n";
    }
};

struct Context {
    const CommandSpec* spec = nullptr;
    RunConfig config;
    bool force = false;
    bool chunks = false;
    std::ostream* out = nullptr;
    std::chrono::steady_clock::time_point start;

    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }

    void write_manifest(const std::string& path, std::vector<std::string> outputs) const {
        Manifest m{spec->name, &config, std::move(outputs), elapsed()};
        write_file_atomic(path, m.render());
        spdlog::info("wrote run manifest {}", path);
    }
};

QsgnnParameters load_params_for(const RunConfig& c, const EmbeddingSource& source) {
    QsgnnParameters params = load_checkpoint(c.params);
    if (params.config().raw_dim != source.dim()) {
        throw ConfigError("checkpoint expects raw embeddings of dimension " + std::to_string(params.config().raw_dim) +
                          ", embedding source has " + std::to_string(source.dim()));
    }
    return params;
}

int cmd_build_graph(Context& ctx) {
    const auto& c = ctx.config;
    prepare_output(c.out, ctx.force, false);
    const MultiLKG g = build_graph(parse_corpus(c.corpus));
    write_file_atomic(c.out, serialize_graph(g));
    const GraphStats s = graph_stats(g);
    spdlog::info("graph: {} entities, {} chunks, {} documents", s.entities, s.chunks, s.documents);
    ctx.write_manifest(c.out + ".manifest.json", {c.out});
    return 0;
}

int cmd_stats(Context& ctx) {
    const MultiLKG g = load_graph(ctx.config.graph);
    const GraphStats s = graph_stats(g);
    auto& out = *ctx.out;
    out << "entities " << s.entities << "\n";
    out << "chunks " << s.chunks << "\n";
    out << "documents " << s.documents << "\n";
    for (std::size_t k = 0; k < s.edges.size(); ++k) {
        out << "edges." << to_string(static_cast<EdgeKind>(k)) << " " << s.edges[k] << "\n";
    }
    out << "self_loop_triples " << g.report().self_loop_triples << "\n";
    return 0;
}

int cmd_synth(Context& ctx) {
    const auto& c = ctx.config;
    prepare_output(c.out, ctx.force, false);
    const MultiLKG g = load_graph(c.graph);
    const EmbeddingSource source = c.embedding_source();
    auto questions = gen_one_hop(g);
    const auto two = gen_two_hop(g, {c.cap, c.seed});
    spdlog::info("synth: {} one-hop, {} two-hop questions", questions.size(), two.size());
    questions.insert(questions.end(), two.begin(), two.end());
    const auto examples = emit_examples(questions, g, source, c.negatives, c.seed);
    write_file_atomic(c.out, serialize_training_examples(examples));
    ctx.write_manifest(c.out + ".manifest.json", {c.out});
    return 0;
}

int cmd_train(Context& ctx, TrainMode mode) {
    const auto& c = ctx.config;
    prepare_output(c.out, ctx.force, true);
    const MultiLKG g = load_graph(c.graph);
    const EmbeddingSource source = c.embedding_source();
    const auto examples = load_training_examples(c.examples);

    QsgnnParameters initial =
        c.params.empty() ? QsgnnParameters::initialize(c.model_config(source.dim()), c.seed) : load_params_for(c, source);

    TrainConfig tc = c.train_config(mode);
    tc.checkpoint_dir = (fs::path(c.out) / "checkpoints").string();
    const TrainResult result = train(mode, g, source, examples, tc, initial);

    const std::string selected_dir = (fs::path(c.out) / "selected").string();
    json extra;
    extra["selected_step"] = result.history[result.selected_index].step;
    extra["steps"] = result.steps;
    extra["epochs_run"] = result.epochs_run;
    save_checkpoint(selected_dir, result.selected, extra.dump());

    std::vector<std::string> outputs;
    for (const auto& h : result.history) outputs.push_back((fs::path(h.path) / "params.bin").string());
    outputs.push_back((fs::path(selected_dir) / "params.bin").string());
    ctx.write_manifest((fs::path(c.out) / "run-manifest.json").string(), outputs);
    *ctx.out << selected_dir << "\n";
    return 0;
}

int cmd_retrieve(Context& ctx) {
    const auto& c = ctx.config;
    const MultiLKG g = load_graph(c.graph);
    const EmbeddingSource source = c.embedding_source();
    const QsgnnParameters params = load_params_for(c, source);
    const Retriever retriever(params, g, source, c.threads);
    const RawEmbedding q = source.embed(c.query);

    std::vector<ScoredDocument> scored;
    if (ctx.chunks) {
        const auto scores = retriever.score_chunks(q);
        for (std::size_t i = 0; i < scores.size(); ++i) scored.push_back({g.chunks()[i].chunk_id, scores[i]});
    } else {
        scored = retriever.label(retriever.score(q));
    }
    const RetrievalResult r = top_k(std::move(scored), c.k);
    for (std::size_t i = 0; i < r.ranked.size(); ++i) {
        *ctx.out << (i + 1) << "\t" << r.ranked[i].doc_id << "\t" << fmt::format("{:.6f}", r.ranked[i].score)
                 << "\n";
    }
    return 0;
}

int cmd_eval(Context& ctx) {
    const auto& c = ctx.config;
    if (!c.out.empty()) prepare_output(c.out, ctx.force, false);
    const MultiLKG g = load_graph(c.graph);
    const EmbeddingSource source = c.embedding_source();
    const QsgnnParameters params = load_params_for(c, source);
    const Retriever retriever(params, g, source, c.threads);
    const EvalReport report = evaluate(retriever, load_eval_examples(c.examples));
    *ctx.out << report.to_table() << report.to_json_line() << "\n";
    if (!c.out.empty()) {
        write_file_atomic(c.out, report.to_json_line() + "\n");
        ctx.write_manifest(c.out + ".manifest.json", {c.out});
    }
    return 0;
}

int cmd_grad_check(Context& ctx) {
    const auto& c = ctx.config;
    const MultiLKG g = load_graph(c.graph);
    const EmbeddingSource source = c.embedding_source();
    const RawGraphEmbeddings raw = embed_graph(source, g);
    const ModelGraph layout = ModelGraph::from(g);

    std::vector<TrainingExample> examples;
    if (!c.examples.empty()) {
        examples = load_training_examples(c.examples);
    } else {
        auto questions = gen_one_hop(g);
        const auto two = gen_two_hop(g, {c.cap, c.seed});
        questions.insert(questions.end(), two.begin(), two.end());
        examples = emit_examples(questions, g, source, c.negatives, c.seed);
    }
    if (examples.empty()) throw ConfigError("grad-check needs at least one example");
    if (examples.size() > 4) examples.resize(4);

    const QsgnnParameters params = c.params.empty()
                                       ? QsgnnParameters::initialize(c.model_config(source.dim()), c.seed)
                                       : load_params_for(c, source);
    const auto batch = resolve_examples(g, raw, source, examples, c.negatives, c.seed);
    const ModelInputs inputs{&layout, &raw};
    constexpr double kEps = 1e-4;
    constexpr double kTolerance = 1e-4;
    const FdReport r = fd_check(params, inputs, batch, {c.tau, 1.0}, kEps, 20, c.seed);

    *ctx.out << "coordinates " << r.coordinates_checked << "\n";
    *ctx.out << "max_relative_error " << fmt::format("{:.3e}", r.max_relative_error) << "\n";
    *ctx.out << "worst " << r.worst_tensor << "[" << r.worst_index << "] analytic "
             << fmt::format("{:.10e}", r.worst_analytic) << " numeric " << fmt::format("{:.10e}", r.worst_numeric)
             << "\n";
    *ctx.out << "kink_coordinates " << r.kink_coordinates << "\n";
    *ctx.out << "max_error_off_kinks " << fmt::format("{:.3e}", r.max_error_off_kinks) << "\n";
    *ctx.out << "max_kink_recheck_error " << fmt::format("{:.3e}", r.max_kink_recheck_error) << "\n";
    if (!fd_passes(r, kTolerance)) {
        spdlog::error("gradient check failed: off-kink error {:.3e}, kink re-check error {:.3e}, tolerance {:.0e}",
                      r.max_error_off_kinks, r.max_kink_recheck_error, kTolerance);
        return 1;
    }
    return 0;
}

void install_stderr_logger() {
    static bool done = false;
    if (done) return;
    auto logger = spdlog::stderr_color_mt("mlkg");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S] [%l] %v");
    done = true;
}

}  // namespace

int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    install_stderr_logger();

    CLI::App app{"Multi-L KG retrieval with query-specific graph attention", argv.empty() ? "mlkg" : argv[0]};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    const auto specs = command_specs();
    std::optional<std::string> config_path;
    bool force = false;
    bool chunks = false;
    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::map<std::string, CLI::Option*>> options;

    std::string config_file;
    for (const auto& spec : specs) {
        CLI::App* sub = app.add_subcommand(spec.name, spec.help);
        sub->add_option("--config", config_file, "key = value configuration file");
        for (const auto& key : spec.keys) {
            std::string names = flag_name(key);
            if (key == "k") names = "-k,--k";
            if (key == "params" && (spec.name == "pretrain" || spec.name == "finetune")) names += ",--init";
            options[spec.name][key] = sub->add_option(names, values[spec.name][key], "setting '" + key + "'");
        }
        if (spec.name == "retrieve") sub->add_flag("--chunks", chunks, "rank chunks instead of documents");
        if (spec.name == "build-graph" || spec.name == "synth" || spec.name == "pretrain" ||
            spec.name == "finetune" || spec.name == "eval") {
            sub->add_flag("--force", force, "overwrite existing outputs");
        }
    }

    std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    }

    const CommandSpec* spec = nullptr;
    for (const auto& s : specs) {
        if (app.got_subcommand(s.name)) spec = &s;
    }

    Context ctx;
    ctx.spec = spec;
    ctx.force = force;
    ctx.chunks = chunks;
    ctx.out = &out;
    ctx.start = std::chrono::steady_clock::now();
    try {
        if (!config_file.empty()) config_path = config_file;
        std::map<std::string, std::string> flags;
        for (const auto& [key, opt] : options[spec->name]) {
            if (opt->count() > 0) flags[key] = values[spec->name][key];
        }
        ctx.config = load_config(config_path, flags, environment_overrides());
        for (const auto& key : spec->required) {
            if (setting(ctx.config, key).empty()) throw ConfigError("missing required flag " + flag_name(key));
        }
        for (const auto& key : {"corpus", "graph", "examples", "params", "embeddings"}) {
            if (std::find(spec->keys.begin(), spec->keys.end(), key) != spec->keys.end()) {
                require_path(key, setting(ctx.config, key));
            }
        }
        set_default_threads(ctx.config.threads);
        spdlog::info("{} config {}", spec->name, ctx.config.hash());

        const std::string& name = spec->name;
        if (name == "build-graph") return cmd_build_graph(ctx);
        if (name == "stats") return cmd_stats(ctx);
        if (name == "synth") return cmd_synth(ctx);
        if (name == "pretrain") return cmd_train(ctx, TrainMode::Pretrain);
        if (name == "finetune") return cmd_train(ctx, TrainMode::Finetune);
        if (name == "retrieve") return cmd_retrieve(ctx);
        if (name == "eval") return cmd_eval(ctx);
        if (name == "grad-check") return cmd_grad_check(ctx);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

int run_command(const std::vector<std::string>& argv) { return run_command(argv, std::cout, std::cerr); }

}  // namespace mlkg

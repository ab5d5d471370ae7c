// srp: offline stages, training and evaluation harnesses over a database directory.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "srp/artifacts.hpp"
#include "srp/errors.hpp"
#include "srp/hash.hpp"
#include "srp/model.hpp"
#include "srp/synthgen.hpp"

namespace fs = std::filesystem;
using namespace srp;

namespace {

struct Common {
    std::string db;
    std::string config;
    std::string out = "srp_out";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> k;
    std::optional<std::size_t> bins;
    std::optional<std::size_t> m;
    std::optional<std::string> graph_mode;
    std::optional<std::string> toggles;
    std::optional<std::size_t> epochs;
    bool no_time_filter = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_db = true) {
    if (needs_db) {
        cmd->add_option("--db", c.db, "database directory (schema.json + CSVs)")->required();
    }
    cmd->add_option("--config", c.config, "config file (JSON)");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--seed", c.seed, "rng seed");
    cmd->add_option("--k", c.k, "retrieved rows per query");
    cmd->add_option("--bins", c.bins, "quantile bins for numeric retrieval features");
    cmd->add_option("--m", c.m, "categories kept by the frequency-aware encoder");
    cmd->add_option("--graph-mode", c.graph_mode, "r2n or r2ne");
    cmd->add_option("--toggles", c.toggles, "modules to enable, e.g. s,r,p");
    cmd->add_option("--epochs", c.epochs, "maximum training epochs");
    cmd->add_flag("--no-time-filter", c.no_time_filter, "disable temporal filtering (leaks future rows)");
}

SRPConfig resolve_config(const Common& c) {
    SRPConfig cfg = c.config.empty() ? SRPConfig{} : load_config(c.config);
    if (c.seed) {
        cfg.seed = *c.seed;
    }
    if (c.k) {
        cfg.hp.k = *c.k;
    }
    if (c.bins) {
        cfg.hp.bins = *c.bins;
    }
    if (c.m) {
        cfg.hp.m = *c.m;
    }
    if (c.graph_mode) {
        cfg.graph_mode = parse_graph_mode(*c.graph_mode);
    }
    if (c.toggles) {
        cfg.toggles = ModuleToggles::parse(*c.toggles);
    }
    if (c.epochs) {
        cfg.max_epochs = *c.epochs;
    }
    if (c.no_time_filter) {
        cfg.time_filter = false;
    }
    return cfg;
}

struct Loaded {
    Database db;
    std::uint64_t hash = 0;
};

Loaded load_db(const std::string& dir) {
    const Schema schema = load_schema(fs::path(dir) / "schema.json");
    Loaded l{load_database(schema, dir), 0};
    l.hash = hash_database_dir(dir, schema);
    return l;
}

/// Cache key of a stage: database content plus the listed config fields.
std::string stage_key(std::uint64_t db_hash, std::initializer_list<std::string> fields) {
    Fnv1a h;
    h.update(db_hash);
    for (const auto& f : fields) {
        h.update(f);
        h.update(std::string_view("\x1f", 1));
    }
    return h.hex();
}

class Run {
  public:
    Run(fs::path out, const Loaded& db, const SRPConfig& cfg) : out_(std::move(out)), db_(db), cfg_(cfg) {
        fs::create_directories(out_);
        manifest_ = RunManifest::load(out_ / "manifest.txt");
        manifest_.set_config_hash(Fnv1a().update(config_to_json(cfg_)).hex());
    }

    std::string synthesis_key() const {
        return stage_key(db_.hash, {"synthesize", std::to_string(cfg_.synthesis_depth),
                                    std::to_string(cfg_.time_filter)});
    }
    std::string retrieval_key() const {
        return stage_key(db_.hash, {"retrieve", std::to_string(cfg_.hp.k), std::to_string(cfg_.hp.bins),
                                    std::to_string(cfg_.time_filter), format_number(cfg_.train_fraction),
                                    format_number(cfg_.valid_fraction)});
    }
    std::string graph_key() const {
        return stage_key(db_.hash, {"build-graph", std::string(to_string(cfg_.graph_mode))});
    }
    std::string train_key() const { return stage_key(db_.hash, {"train", config_to_json(cfg_)}); }

    /// Returns true when the stage had to run.
    bool synthesize() {
        if (manifest_.is_fresh("synthesize", synthesis_key(), out_)) {
            return false;
        }
        const auto paths = find_synthesis_paths(db_.db.schema(), cfg_.synthesis_depth);
        write_feature_table(synthesize_features(db_.db, paths, cfg_.time_filter), out_ / "features.csv");
        manifest_.record({"synthesize", synthesis_key(), {"features.csv"}, 0});
        return true;
    }

    bool retrieve() {
        if (manifest_.is_fresh("retrieve", retrieval_key(), out_)) {
            return false;
        }
        SRPConfig c = cfg_;
        c.toggles = {false, true, false};
        const PreparedData data = prepare(db_.db, c);
        fs::create_directories(out_ / "retrieval");
        StageRecord rec{"retrieve", retrieval_key(), {}, 0};
        for (const DummyTable& d : data.dummies) {
            const std::string rel = "retrieval/" + d.name() + ".csv";
            write_dummy_csv(d, db_.db, out_ / rel);
            rec.paths.push_back(rel);
        }
        manifest_.record(std::move(rec));
        return true;
    }

    bool build_graph_stage() {
        if (manifest_.is_fresh("build-graph", graph_key(), out_)) {
            return false;
        }
        const HeteroGraph g = build_graph(db_.db, cfg_.graph_mode);
        write_edge_lists(g, db_.db, out_ / "graph");
        StageRecord rec{"build-graph", graph_key(), {}, 0};
        for (const EdgeType& e : g.edge_types) {
            if (!e.is_reverse()) {
                rec.paths.push_back("graph/" + e.name + ".csv");
            }
        }
        manifest_.record(std::move(rec));
        return true;
    }

    /// Trains unless an identical run is already recorded. Returns the report.
    EvalReport train(bool& ran) {
        ran = false;
        if (cfg_.toggles.synthesis) {
            synthesize();
        }
        if (cfg_.toggles.retrieval) {
            retrieve();
        }
        if (cfg_.toggles.propagation) {
            build_graph_stage();
        }
        if (manifest_.is_fresh("train", train_key(), out_)) {
            return read_report(out_ / "report.csv");
        }
        cfg_.validate();
        const PreparedData data = prepare(db_.db, cfg_);
        SrpModel model(data, cfg_);
        TrainResult result = train_model(model, data);
        result.report.write_csv(out_ / "report.csv");
        {
            std::ofstream ck(out_ / "checkpoint.bin", std::ios::binary);
            ck << result.checkpoint;
        }
        save_config(cfg_, out_ / "config.json");
        std::ofstream(out_ / "encoders.json") << unary_encoders(data);
        manifest_.record({"train", train_key(), {"report.csv", "checkpoint.bin", "config.json", "encoders.json"}, 0});
        ran = true;
        return result.report;
    }

    void save() const { manifest_.save(out_ / "manifest.txt"); }

    static EvalReport read_report(const fs::path& path) {
        std::ifstream in(path);
        if (!in) {
            throw DataError("cannot read " + path.string());
        }
        EvalReport r;
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::vector<std::string> f;
            std::stringstream ss(line);
            for (std::string cell; std::getline(ss, cell, ',');) {
                f.push_back(cell);
            }
            if (f.size() != 5) {
                throw DataError("malformed report line: " + line);
            }
            r.add(f[0], f[1], f[2], f[3], std::stod(f[4]));
        }
        return r;
    }

  private:
    std::string unary_encoders(const PreparedData& data) const {
        const FeatureTable ft = cfg_.toggles.synthesis ? data.unary_features : original_features(data.db);
        EncoderConfig ec{cfg_.max_vocabulary, cfg_.hp.m, cfg_.text_dim, nullptr};
        std::optional<WordVectors> vectors;
        if (!cfg_.word_vectors.empty()) {
            vectors = WordVectors::load(cfg_.word_vectors);
            ec.vectors = &*vectors;
        }
        return encoders_to_json(fit_encoders(ft, data.split.train, ec));
    }

    fs::path out_;
    const Loaded& db_;
    SRPConfig cfg_;
    RunManifest manifest_;
};

void print_report(const EvalReport& r) {
    for (const auto& row : r.rows) {
        std::printf("%-8s seed=%s %-5s %s=%.4f\n", row.combo.c_str(), row.seed.c_str(), row.split.c_str(),
                    row.metric.c_str(), row.value);
    }
}

int fail(const char* kind, const std::exception& e, int code) {
    std::fprintf(stderr, "srp: %s: %s\n", kind, e.what());
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthesis, retrieval and propagation over relational databases"};
    app.require_subcommand(1);

    Common c;
    SynthSpec spec;
    std::string split = "test";
    std::size_t seeds = 5;
    std::size_t trials = 20;
    std::size_t workers = 1;
    std::string grid_path;
    bool single_mode = false;

    auto* gen = app.add_subcommand("gen-synthetic", "write the planted-signal benchmark database");
    gen->add_option("--out", c.out, "output directory")->required();
    gen->add_option("--seed", spec.seed, "rng seed");
    gen->add_option("--users", spec.n_users, "number of users");
    gen->add_option("--sessions", spec.n_sessions, "number of sessions");
    gen->add_option("--items", spec.n_items, "number of items");
    gen->add_option("--interactions", spec.n_interactions, "number of interactions");
    gen->add_option("--unary", spec.unary_signal_strength, "unary signal strength in [0,1]");
    gen->add_option("--composite", spec.composite_signal_strength, "composite signal strength in [0,1]");
    gen->add_option("--noise", spec.noise, "label noise rate in [0,1]");
    gen->add_option("--balance", spec.class_balance, "positive class rate");

    auto* syn = app.add_subcommand("synthesize", "run feature synthesis and cache the result");
    add_common(syn, c);
    auto* ret = app.add_subcommand("retrieve", "run top-K retrieval and write dummy tables");
    add_common(ret, c);
    auto* bg = app.add_subcommand("build-graph", "build the heterogeneous graph and write edge lists");
    add_common(bg, c);
    auto* tr = app.add_subcommand("train", "train a model and write report.csv and checkpoint.bin");
    add_common(tr, c);
    auto* ev = app.add_subcommand("evaluate", "evaluate the checkpoint of a previous train run");
    add_common(ev, c);
    ev->add_option("--split", split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
    auto* ab = app.add_subcommand("ablate", "train all eight module combinations over several seeds");
    add_common(ab, c);
    ab->add_option("--seeds", seeds, "seeds per combination");
    ab->add_option("--workers", workers, "worker threads");
    ab->add_flag("--single-graph-mode", single_mode, "keep the configured graph mode instead of picking one per row on validation");
    auto* se = app.add_subcommand("search", "random hyperparameter search");
    add_common(se, c);
    se->add_option("--trials", trials, "number of sampled configurations");
    se->add_option("--grid", grid_path, "search grid (JSON); defaults to the built-in ranges");
    se->add_option("--workers", workers, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            generate_to_disk(spec, c.out);
            std::printf("wrote synthetic database (%zu interactions) to %s\n", spec.n_interactions, c.out.c_str());
            return 0;
        }
        const SRPConfig cfg = resolve_config(c);
        const Loaded db = load_db(c.db);
        if (syn->parsed() || ret->parsed() || bg->parsed()) {
            Run run(c.out, db, cfg);
            const bool ran = syn->parsed() ? run.synthesize() : ret->parsed() ? run.retrieve() : run.build_graph_stage();
            run.save();
            std::printf("%s: %s\n", syn->parsed() ? "synthesize" : ret->parsed() ? "retrieve" : "build-graph",
                        ran ? "done" : "up to date");
            return 0;
        }
        if (tr->parsed()) {
            Run run(c.out, db, cfg);
            bool ran = false;
            const EvalReport report = run.train(ran);
            run.save();
            print_report(report);
            std::printf("train: %s, report at %s\n", ran ? "done" : "up to date", (fs::path(c.out) / "report.csv").c_str());
            return 0;
        }
        if (ev->parsed()) {
            const fs::path out(c.out);
            SRPConfig saved = load_config(out / "config.json");
            const PreparedData data = prepare(db.db, saved);
            SrpModel model(data, saved);
            std::ifstream ck(out / "checkpoint.bin", std::ios::binary);
            if (!ck) {
                throw DataError("no checkpoint in " + out.string() + "; run train first");
            }
            std::stringstream bytes;
            bytes << ck.rdbuf();
            model.restore(bytes.str());
            const auto& rows = split == "train" ? data.split.train : split == "valid" ? data.split.valid : data.split.test;
            EvalReport report;
            if (const auto v = model.evaluate(rows)) {
                report.add(saved.toggles.label(), std::to_string(saved.seed), split, data.task.metric_name(), *v);
            }
            report.write_csv(out / ("eval_" + split + ".csv"));
            print_report(report);
            return 0;
        }
        if (ab->parsed()) {
            AblationOptions opts;
            opts.seeds = seeds;
            opts.workers = workers;
            opts.select_graph_mode = !single_mode;
            const AblationResult res = ablate(db.db, cfg, opts);
            fs::create_directories(c.out);
            const std::string metric =
                decode_task(db.db, cfg.task.value_or(db.db.schema().target.task), {}).metric_name();
            std::ofstream(fs::path(c.out) / "ablation.csv") << res.summary_csv(metric);
            res.report.write_csv(fs::path(c.out) / "ablation_report.csv");
            std::cout << res.summary_csv(metric);
            return 0;
        }
        if (se->parsed()) {
            const SearchGrid grid = grid_path.empty() ? SearchGrid::defaults() : SearchGrid::load(grid_path);
            const SearchResult res = random_search(db.db, grid, cfg, trials, workers);
            fs::create_directories(c.out);
            save_config(res.best, fs::path(c.out) / "best_config.json");
            res.report.write_csv(fs::path(c.out) / "search_report.csv");
            std::printf("best trial %zu of %zu, config at %s\n", res.best_trial, trials,
                        (fs::path(c.out) / "best_config.json").c_str());
            return 0;
        }
    } catch (const ConfigError& e) {
        return fail("config error", e, 2);
    } catch (const DataError& e) {
        return fail("data error", e, 3);
    } catch (const DivergenceError& e) {
        return fail("divergence", e, 4);
    } catch (const std::exception& e) {
        return fail("error", e, 1);
    }
    return 0;
}

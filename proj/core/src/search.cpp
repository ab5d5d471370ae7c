#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "srp/errors.hpp"
#include "srp/model.hpp"

namespace srp {

using nlohmann::json;

namespace {

/// Runs job(i) for i in [0, n) over `workers` threads. The first exception is
/// rethrown after every thread has joined.
template <typename Job>
void run_parallel(std::size_t n, std::size_t workers, Job job) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            job(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

/// Fractional ranks (1 = best) with ties sharing the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& scores) {
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<double> ranks(scores.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            ranks[order[t]] = r;
        }
        i = j;
    }
    return ranks;
}

}  // namespace

// --- Ablation --------------------------------------------------------------------------

std::vector<ModuleToggles> ablation_combinations() {
    return {{false, false, false}, {true, false, false}, {false, true, false}, {false, false, true},
            {true, true, false},   {true, false, true},  {false, true, true},  {true, true, true}};
}

std::string AblationResult::summary_csv(std::string_view metric) const {
    std::string out = "combo,mean_" + std::string(metric) + ",avg_rank\n";
    for (const auto& r : rows) {
        out += r.combo + "," + format_number(r.mean) + "," + format_number(r.average_rank) + "\n";
    }
    return out;
}

const AblationRow* AblationResult::find(std::string_view combo) const {
    for (const auto& r : rows) {
        if (r.combo == combo) {
            return &r;
        }
    }
    return nullptr;
}

AblationResult ablate(const Database& db, const SRPConfig& base, const AblationOptions& options) {
    base.validate(true);
    const std::vector<ModuleToggles> combos =
        options.combinations.empty() ? ablation_combinations() : options.combinations;
    const std::size_t seeds = std::max<std::size_t>(options.seeds, 1);

    // Offline stages are shared by every row; each row only reads what its toggles allow.
    PreparedData data = prepare(db, base, PrepareOptions{true, true, true});
    std::optional<PreparedData> alternate;
    if (options.select_graph_mode) {
        SRPConfig other = base;
        other.graph_mode = base.graph_mode == GraphMode::r2n ? GraphMode::r2ne : GraphMode::r2n;
        alternate = prepare(db, other, PrepareOptions{false, true, true});
        // The other graph construction reuses this split and synthesized features.
        alternate->unary_features = data.unary_features;
        alternate->paths = data.paths;
        alternate->has_synthesis = data.has_synthesis;
    }
    struct Cell {
        double test = std::nan("");
        EvalReport report;
    };
    std::vector<Cell> cells(combos.size() * seeds);
    run_parallel(cells.size(), options.workers, [&](std::size_t i) {
        const ModuleToggles& t = combos[i / seeds];
        SRPConfig config = base;
        config.toggles = t;
        config.seed = base.seed + i % seeds;
        SrpModel model(data, config);
        TrainResult result = train_model(model, data, t.label());
        if (alternate && t.propagation) {
            SRPConfig other = config;
            other.graph_mode = alternate->graph->mode;
            SrpModel second(*alternate, other);
            TrainResult r2 = train_model(second, *alternate, t.label());
            const EvalRow* a = result.report.find(t.label(), std::to_string(config.seed), "valid");
            const EvalRow* b = r2.report.find(t.label(), std::to_string(config.seed), "valid");
            if (a != nullptr && b != nullptr &&
                selection_score(data.task.kind, b->value) > selection_score(data.task.kind, a->value)) {
                result = std::move(r2);
            }
        }
        cells[i].report = std::move(result.report);
        if (const EvalRow* row = cells[i].report.find(t.label(), std::to_string(config.seed), "test")) {
            cells[i].test = row->value;
        }
    });

    AblationResult out;
    for (const Cell& c : cells) {
        for (const EvalRow& r : c.report.rows) {
            out.report.rows.push_back(r);
        }
    }
    std::vector<std::vector<double>> ranks(combos.size());
    for (std::size_t s = 0; s < seeds; ++s) {
        std::vector<double> scores(combos.size());
        for (std::size_t c = 0; c < combos.size(); ++c) {
            const double v = cells[c * seeds + s].test;
            scores[c] = std::isnan(v) ? -std::numeric_limits<double>::infinity() : selection_score(data.task.kind, v);
        }
        const auto r = average_ranks(scores);
        for (std::size_t c = 0; c < combos.size(); ++c) {
            ranks[c].push_back(r[c]);
        }
    }
    for (std::size_t c = 0; c < combos.size(); ++c) {
        AblationRow row;
        row.combo = combos[c].label();
        double sum = 0.0, rank_sum = 0.0;
        std::size_t n = 0;
        for (std::size_t s = 0; s < seeds; ++s) {
            const double v = cells[c * seeds + s].test;
            row.per_seed.push_back(v);
            if (!std::isnan(v)) {
                sum += v;
                ++n;
            }
            rank_sum += ranks[c][s];
        }
        row.mean = n > 0 ? sum / static_cast<double>(n) : std::nan("");
        row.average_rank = rank_sum / static_cast<double>(seeds);
        out.rows.push_back(std::move(row));
    }
    return out;
}

// --- Search grid ------------------------------------------------------------------------

namespace {

struct Bounds {
    ParamRange::Kind kind;
    double lo;
    double hi;
    std::vector<std::string> choices;
};

const std::map<std::string, Bounds>& published_bounds() {
    using K = ParamRange::Kind;
    static const std::map<std::string, Bounds> bounds = {
        {"learning_rate", {K::log_uniform, 1e-4, 1e-2, {}}},
        {"batch_size", {K::integer, 128, 4096, {}}},
        {"embedding_size", {K::integer, 8, 256, {}}},
        {"hidden_size", {K::integer, 16, 256, {}}},
        {"dropout", {K::uniform, 0.0, 1.0, {}}},
        {"mlp_layers", {K::integer, 1, 8, {}}},
        {"gnn_layers", {K::choice, 0, 0, {"1", "2", "3"}}},
        {"fanout", {K::choice, 0, 0, {"1", "5", "10", "20"}}},
        {"k", {K::integer, 1, 10, {}}},
        {"graph_mode", {K::choice, 0, 0, {"r2n", "r2ne"}}},
        {"propagation_model", {K::choice, 0, 0, {"rgcn"}}},
    };
    return bounds;
}

std::string_view kind_name(ParamRange::Kind k) {
    switch (k) {
        case ParamRange::Kind::uniform:
            return "uniform";
        case ParamRange::Kind::log_uniform:
            return "log_uniform";
        case ParamRange::Kind::integer:
            return "integer";
        case ParamRange::Kind::choice:
            return "choice";
    }
    return "?";
}

ParamRange::Kind parse_kind(const std::string& s) {
    if (s == "uniform") {
        return ParamRange::Kind::uniform;
    }
    if (s == "log_uniform") {
        return ParamRange::Kind::log_uniform;
    }
    if (s == "integer") {
        return ParamRange::Kind::integer;
    }
    if (s == "choice") {
        return ParamRange::Kind::choice;
    }
    throw ConfigError("unknown range kind: " + s);
}

}  // namespace

SearchGrid SearchGrid::defaults() {
    SearchGrid g;
    for (const auto& [name, b] : published_bounds()) {
        g.params.emplace_back(name, ParamRange{b.kind, b.lo, b.hi, b.choices});
    }
    return g;
}

SearchGrid SearchGrid::parse(std::string_view text) {
    SearchGrid g;
    try {
        const json j = json::parse(text);
        if (!j.is_object()) {
            throw ConfigError("search grid must be a JSON object");
        }
        for (const auto& [name, spec] : j.items()) {
            ParamRange r;
            r.kind = parse_kind(spec.at("kind").get<std::string>());
            if (r.kind == ParamRange::Kind::choice) {
                for (const auto& c : spec.at("choices")) {
                    r.choices.push_back(c.is_string() ? c.get<std::string>() : c.dump());
                }
            } else {
                r.lo = spec.at("lo").get<double>();
                r.hi = spec.at("hi").get<double>();
            }
            g.params.emplace_back(name, std::move(r));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad search grid: ") + e.what());
    }
    g.validate();
    return g;
}

SearchGrid SearchGrid::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read search grid " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string SearchGrid::to_json() const {
    json j = json::object();
    for (const auto& [name, r] : params) {
        json p;
        p["kind"] = std::string(kind_name(r.kind));
        if (r.kind == ParamRange::Kind::choice) {
            p["choices"] = r.choices;
        } else {
            p["lo"] = r.lo;
            p["hi"] = r.hi;
        }
        j[name] = p;
    }
    return j.dump(2) + "\n";
}

void SearchGrid::validate() const {
    const auto& bounds = published_bounds();
    for (const auto& [name, r] : params) {
        const auto it = bounds.find(name);
        if (it == bounds.end()) {
            throw ConfigError("parameter not in the search space: " + name);
        }
        const Bounds& b = it->second;
        if (b.kind == ParamRange::Kind::choice) {
            if (r.kind != ParamRange::Kind::choice || r.choices.empty()) {
                throw ConfigError(name + " must be a non-empty choice list");
            }
            for (const auto& c : r.choices) {
                if (std::find(b.choices.begin(), b.choices.end(), c) == b.choices.end()) {
                    throw ConfigError(name + " choice out of range: " + c);
                }
            }
            continue;
        }
        if (r.kind == ParamRange::Kind::choice) {
            for (const auto& c : r.choices) {
                double v = 0.0;
                try {
                    v = std::stod(c);
                } catch (const std::exception&) {
                    throw ConfigError(name + " choice is not numeric: " + c);
                }
                if (v < b.lo || v > b.hi) {
                    throw ConfigError(name + " choice out of range: " + c);
                }
            }
            if (r.choices.empty()) {
                throw ConfigError(name + " has no choices");
            }
            continue;
        }
        if (!(r.lo <= r.hi) || r.lo < b.lo || r.hi > b.hi) {
            throw ConfigError(name + " range leaves [" + format_number(b.lo) + ", " + format_number(b.hi) + "]");
        }
        if (r.kind == ParamRange::Kind::log_uniform && !(r.lo > 0.0)) {
            throw ConfigError(name + " log-uniform range must be positive");
        }
    }
}

SRPConfig sample_config(const SearchGrid& grid, const SRPConfig& base, Rng& rng) {
    SRPConfig c = base;
    for (const auto& [name, r] : grid.params) {
        double v = 0.0;
        std::string choice;
        switch (r.kind) {
            case ParamRange::Kind::uniform:
                v = r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi);
                break;
            case ParamRange::Kind::log_uniform:
                v = r.lo == r.hi ? r.lo : std::exp(rng.uniform(std::log(r.lo), std::log(r.hi)));
                break;
            case ParamRange::Kind::integer:
                v = static_cast<double>(rng.between(static_cast<std::int64_t>(std::ceil(r.lo)),
                                                    static_cast<std::int64_t>(std::floor(r.hi))));
                break;
            case ParamRange::Kind::choice:
                choice = r.choices[rng.below(r.choices.size())];
                v = std::strtod(choice.c_str(), nullptr);
                break;
        }
        auto as_size = [&] { return static_cast<std::size_t>(std::llround(v)); };
        if (name == "learning_rate") {
            c.hp.learning_rate = v;
        } else if (name == "batch_size") {
            c.hp.batch_size = as_size();
        } else if (name == "embedding_size") {
            c.hp.embedding_size = as_size();
        } else if (name == "hidden_size") {
            c.hp.hidden_size = as_size();
        } else if (name == "dropout") {
            c.hp.dropout = v;
        } else if (name == "mlp_layers") {
            c.hp.mlp_layers = as_size();
        } else if (name == "gnn_layers") {
            c.hp.gnn_layers = as_size();
        } else if (name == "fanout") {
            c.hp.fanout = as_size();
        } else if (name == "k") {
            c.hp.k = as_size();
        } else if (name == "graph_mode") {
            c.graph_mode = parse_graph_mode(choice);
        } else if (name == "propagation_model") {
            // Only one backbone exists.
        } else {
            throw ConfigError("parameter not in the search space: " + name);
        }
    }
    return c;
}

SearchResult random_search(const Database& db, const SearchGrid& grid, const SRPConfig& base, std::size_t trials,
                           std::size_t workers) {
    if (trials == 0) {
        throw ConfigError("random search needs at least one trial");
    }
    grid.validate();
    base.validate();
    SearchResult out;
    for (std::size_t i = 0; i < trials; ++i) {
        Rng rng(mix64(base.seed, i));
        out.configs.push_back(sample_config(grid, base, rng));
        out.configs.back().validate();
    }
    std::vector<EvalReport> reports(trials);
    run_parallel(trials, workers, [&](std::size_t i) {
        const PreparedData data = prepare(db, out.configs[i]);
        SrpModel model(data, out.configs[i]);
        reports[i] = train_model(model, data, "trial" + std::to_string(i)).report;
    });
    const TaskKind kind = out.configs.front().task.value_or(db.schema().target.task);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < trials; ++i) {
        for (const EvalRow& r : reports[i].rows) {
            out.report.rows.push_back(r);
        }
        const EvalRow* v = reports[i].find("trial" + std::to_string(i), std::to_string(out.configs[i].seed), "valid");
        const double score = v != nullptr ? selection_score(kind, v->value) : -std::numeric_limits<double>::infinity();
        if (i == 0 || score > best) {
            best = score;
            out.best_trial = i;
        }
    }
    out.best = out.configs[out.best_trial];
    return out;
}

}  // namespace srp

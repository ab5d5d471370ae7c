#include "srp/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "srp/errors.hpp"
#include "srp/metrics.hpp"

namespace srp {

using nlohmann::json;

// --- Toggles and config ----------------------------------------------------------------

std::string ModuleToggles::label() const {
    std::string out;
    auto append = [&](bool on, const char* name) {
        if (on) {
            out += out.empty() ? name : std::string("+") + name;
        }
    };
    append(synthesis, "S");
    append(retrieval, "R");
    append(propagation, "P");
    return out.empty() ? "none" : out;
}

ModuleToggles ModuleToggles::parse(std::string_view text) {
    ModuleToggles t{false, false, false};
    if (text.empty() || text == "none") {
        return t;
    }
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find_first_of(",+", start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        const std::string_view item = text.substr(start, end - start);
        if (item == "s" || item == "S") {
            t.synthesis = true;
        } else if (item == "r" || item == "R") {
            t.retrieval = true;
        } else if (item == "p" || item == "P") {
            t.propagation = true;
        } else {
            throw ConfigError("unknown module toggle: " + std::string(item));
        }
        start = end + 1;
    }
    return t;
}

void SRPConfig::validate(bool allow_all_off) const {
    if (!toggles.any() && !allow_all_off) {
        throw ConfigError("at least one of synthesis, retrieval, propagation must be on");
    }
    if (!(hp.learning_rate > 0.0) || !std::isfinite(hp.learning_rate)) {
        throw ConfigError("learning rate must be positive");
    }
    if (hp.batch_size == 0 || hp.embedding_size == 0 || hp.hidden_size == 0) {
        throw ConfigError("batch, embedding and hidden sizes must be positive");
    }
    if (!(hp.dropout >= 0.0 && hp.dropout < 1.0)) {
        throw ConfigError("dropout must lie in [0, 1)");
    }
    if (hp.mlp_layers == 0 || hp.gnn_layers == 0) {
        throw ConfigError("layer counts must be positive");
    }
    if (hp.fanout == 0 || hp.k == 0 || hp.m == 0) {
        throw ConfigError("fanout, k and m must be positive");
    }
    if (hp.bins < 2) {
        throw ConfigError("bins must be at least 2");
    }
    if (max_epochs == 0) {
        throw ConfigError("max_epochs must be positive");
    }
    if (!(train_fraction > 0.0) || valid_fraction < 0.0 || train_fraction + valid_fraction > 1.0) {
        throw ConfigError("invalid split fractions");
    }
}

std::string config_to_json(const SRPConfig& c) {
    json j;
    std::string toggles;
    for (auto [on, name] : {std::pair{c.toggles.synthesis, "s"}, {c.toggles.retrieval, "r"},
                            {c.toggles.propagation, "p"}}) {
        if (on) {
            toggles += toggles.empty() ? name : std::string(",") + name;
        }
    }
    j["toggles"] = toggles.empty() ? "none" : toggles;
    j["graph_mode"] = std::string(to_string(c.graph_mode));
    j["seed"] = c.seed;
    if (c.task) {
        j["task"] = std::string(to_string(*c.task));
    }
    j["hyperparameters"] = {{"learning_rate", c.hp.learning_rate}, {"batch_size", c.hp.batch_size},
                            {"embedding_size", c.hp.embedding_size}, {"hidden_size", c.hp.hidden_size},
                            {"dropout", c.hp.dropout}, {"mlp_layers", c.hp.mlp_layers},
                            {"gnn_layers", c.hp.gnn_layers}, {"fanout", c.hp.fanout},
                            {"k", c.hp.k}, {"m", c.hp.m}, {"bins", c.hp.bins}};
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["train_fraction"] = c.train_fraction;
    j["valid_fraction"] = c.valid_fraction;
    j["synthesis_depth"] = c.synthesis_depth;
    j["time_filter"] = c.time_filter;
    j["max_vocabulary"] = c.max_vocabulary;
    j["text_dim"] = c.text_dim;
    j["word_vectors"] = c.word_vectors;
    return j.dump(2) + "\n";
}

SRPConfig config_from_json(std::string_view text) {
    SRPConfig c;
    try {
        const json j = json::parse(text);
        if (!j.is_object()) {
            throw ConfigError("config must be a JSON object");
        }
        static const std::set<std::string> known = {
            "toggles",        "graph_mode",      "seed",        "task",           "hyperparameters",
            "max_epochs",     "patience",        "train_fraction", "valid_fraction", "synthesis_depth",
            "time_filter",    "max_vocabulary",  "text_dim",    "word_vectors"};
        for (const auto& [key, _] : j.items()) {
            if (!known.contains(key)) {
                throw ConfigError("unknown config key: " + key);
            }
        }
        if (j.contains("toggles")) {
            c.toggles = ModuleToggles::parse(j["toggles"].get<std::string>());
        }
        if (j.contains("graph_mode")) {
            c.graph_mode = parse_graph_mode(j["graph_mode"].get<std::string>());
        }
        if (j.contains("seed")) {
            c.seed = j["seed"].get<std::uint64_t>();
        }
        if (j.contains("task")) {
            c.task = parse_task_kind(j["task"].get<std::string>());
        }
        if (j.contains("hyperparameters")) {
            const json& h = j["hyperparameters"];
            static const std::set<std::string> hp_keys = {"learning_rate", "batch_size", "embedding_size",
                                                          "hidden_size",   "dropout",    "mlp_layers",
                                                          "gnn_layers",    "fanout",     "k",
                                                          "m",             "bins"};
            for (const auto& [key, _] : h.items()) {
                if (!hp_keys.contains(key)) {
                    throw ConfigError("unknown hyperparameter: " + key);
                }
            }
            auto get = [&](const char* key, auto& field) {
                if (h.contains(key)) {
                    field = h[key].get<std::remove_reference_t<decltype(field)>>();
                }
            };
            get("learning_rate", c.hp.learning_rate);
            get("batch_size", c.hp.batch_size);
            get("embedding_size", c.hp.embedding_size);
            get("hidden_size", c.hp.hidden_size);
            get("dropout", c.hp.dropout);
            get("mlp_layers", c.hp.mlp_layers);
            get("gnn_layers", c.hp.gnn_layers);
            get("fanout", c.hp.fanout);
            get("k", c.hp.k);
            get("m", c.hp.m);
            get("bins", c.hp.bins);
        }
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) {
                field = j[key].get<std::remove_reference_t<decltype(field)>>();
            }
        };
        get("max_epochs", c.max_epochs);
        get("patience", c.patience);
        get("train_fraction", c.train_fraction);
        get("valid_fraction", c.valid_fraction);
        get("synthesis_depth", c.synthesis_depth);
        get("time_filter", c.time_filter);
        get("max_vocabulary", c.max_vocabulary);
        get("text_dim", c.text_dim);
        get("word_vectors", c.word_vectors);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    return c;
}

SRPConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

void save_config(const SRPConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write config " + path.string());
    }
    out << config_to_json(config);
}

// --- Reports -------------------------------------------------------------------------

void EvalReport::add(std::string combo, std::string seed, std::string split, std::string metric, double value) {
    rows.push_back(EvalRow{std::move(combo), std::move(seed), std::move(split), std::move(metric), value});
}

const EvalRow* EvalReport::find(std::string_view combo, std::string_view seed, std::string_view split) const {
    for (const auto& r : rows) {
        if (r.combo == combo && r.seed == seed && r.split == split) {
            return &r;
        }
    }
    return nullptr;
}

std::string EvalReport::to_csv() const {
    std::string out = "combo,seed,split,metric,value\n";
    for (const auto& r : rows) {
        out += r.combo + "," + r.seed + "," + r.split + "," + r.metric + "," + format_number(r.value) + "\n";
    }
    return out;
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write report " + path.string());
    }
    out << to_csv();
}

// --- Task --------------------------------------------------------------------------------

std::size_t TaskInfo::output_width() const { return kind == TaskKind::multiclass ? classes.size() : 1; }

std::size_t TaskInfo::label_channel_width() const {
    return (kind == TaskKind::multiclass ? classes.size() : 1) + 1;
}

std::string TaskInfo::metric_name() const {
    switch (kind) {
        case TaskKind::binary:
            return "auc";
        case TaskKind::multiclass:
            return "acc";
        case TaskKind::regression:
            return "rmse";
    }
    return "?";
}

TaskInfo decode_task(const Database& db, TaskKind kind, std::span<const std::size_t> train_rows) {
    TaskInfo info;
    info.kind = kind;
    const Table& t = db.target_table();
    const std::size_t col = db.target_column();
    info.targets.assign(t.size(), 0.0);
    info.labeled.assign(t.size(), false);
    if (kind == TaskKind::regression) {
        for (std::size_t r = 0; r < t.size(); ++r) {
            const Value& v = t.at(r, col);
            if (v.is_number()) {
                info.targets[r] = v.as_number();
                info.labeled[r] = true;
            } else if (!v.is_missing()) {
                throw ConfigError("regression target must be numeric");
            }
        }
        double sum = 0.0, ss = 0.0;
        std::size_t n = 0;
        for (std::size_t r : train_rows) {
            if (info.labeled[r]) {
                sum += info.targets[r];
                ++n;
            }
        }
        info.target_mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
        for (std::size_t r : train_rows) {
            if (info.labeled[r]) {
                ss += (info.targets[r] - info.target_mean) * (info.targets[r] - info.target_mean);
            }
        }
        info.target_std = n > 0 ? std::sqrt(ss / static_cast<double>(n)) : 1.0;
        if (!(info.target_std > 0.0)) {
            info.target_std = 1.0;
        }
        return info;
    }
    std::set<std::string> classes;
    auto name_of = [](const Value& v) { return v.is_number() ? format_number(v.as_number()) : v.as_string(); };
    for (std::size_t r = 0; r < t.size(); ++r) {
        if (!t.at(r, col).is_missing()) {
            classes.insert(name_of(t.at(r, col)));
        }
    }
    info.classes.assign(classes.begin(), classes.end());
    if (kind == TaskKind::binary && info.classes.size() != 2) {
        throw ConfigError("binary task needs exactly two label values, found " +
                          std::to_string(info.classes.size()));
    }
    if (kind == TaskKind::multiclass && info.classes.size() < 2) {
        throw ConfigError("multiclass task needs at least two label values");
    }
    for (std::size_t r = 0; r < t.size(); ++r) {
        if (!t.at(r, col).is_missing()) {
            const auto it = std::lower_bound(info.classes.begin(), info.classes.end(), name_of(t.at(r, col)));
            info.targets[r] = static_cast<double>(it - info.classes.begin());
            info.labeled[r] = true;
        }
    }
    return info;
}

// --- Offline stages --------------------------------------------------------------------

namespace {

constexpr std::int64_t kNoCutoff = std::numeric_limits<std::int64_t>::max();

std::vector<std::size_t> visible_rows(const Database& db, std::size_t table, std::optional<std::int64_t> cutoff) {
    std::vector<std::size_t> rows;
    const auto ts = db.row_timestamps(table);
    for (std::size_t r = 0; r < db.table(table).size(); ++r) {
        if (!ts || !cutoff || (*ts)[r] < *cutoff) {
            rows.push_back(r);
        }
    }
    return rows;
}

}  // namespace

TableEncodings encode_tables(const PreparedData& data, const SRPConfig& config) {
    const Database& db = data.db;
    TableEncodings enc;
    std::optional<WordVectors> vectors;
    if (!config.word_vectors.empty()) {
        vectors = WordVectors::load(config.word_vectors);
    }
    EncoderConfig ec{config.max_vocabulary, config.hp.m, config.text_dim, vectors ? &*vectors : nullptr};
    const std::size_t target = db.table_index(db.schema().target.table);
    for (std::size_t t = 0; t < db.tables().size(); ++t) {
        const FeatureTable ft = table_features(db, t);
        nn::Tensor x(db.table(t).size(), 0);
        if (!ft.columns.empty()) {
            std::vector<std::size_t> fit_rows =
                t == target ? data.split.train : visible_rows(db, t, data.time_filter ? data.visible_cutoff : std::nullopt);
            if (fit_rows.empty()) {
                fit_rows.resize(db.table(t).size());
                for (std::size_t i = 0; i < fit_rows.size(); ++i) {
                    fit_rows[i] = i;
                }
            }
            const auto specs = fit_encoders(ft, fit_rows, ec);
            x = encode_rows(ft, specs, ec.vectors);
        }
        if (t == target) {
            // Label channel of every labeled row. Neighbors reached by sampling or
            // retrieval are strictly earlier than the query; a seed's own
            // channel is hidden.
            const TaskInfo& task = data.task;
            const std::size_t lw = task.label_channel_width();
            enc.label_offset = x.cols();
            nn::Tensor y(x.rows(), x.cols() + lw);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                std::copy(x.row(r).begin(), x.row(r).end(), y.row(r).begin());
            }
            for (std::size_t r = 0; r < x.rows(); ++r) {
                if (!task.labeled[r]) {
                    continue;
                }
                auto row = y.row(r);
                switch (task.kind) {
                    case TaskKind::binary:
                        row[enc.label_offset] = task.targets[r];
                        break;
                    case TaskKind::multiclass:
                        row[enc.label_offset + static_cast<std::size_t>(task.targets[r])] = 1.0;
                        break;
                    case TaskKind::regression:
                        row[enc.label_offset] = (task.targets[r] - task.target_mean) / task.target_std;
                        break;
                }
                row[enc.label_offset + lw - 1] = 1.0;
            }
            x = std::move(y);
        }
        enc.per_table.push_back(std::move(x));
    }
    return enc;
}

PreparedData prepare(const Database& db, const SRPConfig& config, const PrepareOptions& options) {
    config.validate(true);
    PreparedData data;
    data.db = db;
    data.time_filter = config.time_filter;
    const TaskKind kind = config.task.value_or(db.schema().target.task);
    data.split = temporal_split(db, config.train_fraction, config.valid_fraction);
    if (data.split.train.empty()) {
        throw ConfigError("training split is empty");
    }
    data.task = decode_task(db, kind, data.split.train);

    const std::size_t target = db.table_index(db.schema().target.table);
    const auto target_ts = db.row_timestamps(target);
    data.target_cutoffs = target_ts ? *target_ts : std::vector<std::int64_t>(db.table(target).size(), kNoCutoff);
    if (!data.split.valid.empty()) {
        data.visible_cutoff = data.target_cutoffs[data.split.valid.front()];
    } else if (!data.split.test.empty()) {
        data.visible_cutoff = data.target_cutoffs[data.split.test.front()];
    }

    if (options.synthesis) {
        data.paths = find_synthesis_paths(db.schema(), config.synthesis_depth);
        data.unary_features = synthesize_features(db, data.paths, config.time_filter);
        data.has_synthesis = true;
    } else {
        data.unary_features = original_features(db);
    }

    if (options.retrieval || options.propagation) {
        data.encodings = encode_tables(data, config);
    }

    if (options.retrieval) {
        RetrievalConfig rc;
        rc.k = config.hp.k;
        rc.bins = config.hp.bins;
        rc.time_filter = config.time_filter;
        data.dummies = retrieve_all(db, rc, config.time_filter ? data.visible_cutoff : std::nullopt);
        data.retrieval_db = with_dummy_tables(db, data.dummies);
        data.has_retrieval = true;

        // Aggregate of the retrieved rows of the target table: mean label
        // channel and the link count over k. Their other features reach the
        // model through the retrieval graph.
        const nn::Tensor& enc = data.encodings->per_table[target];
        const std::size_t off = data.encodings->label_offset;
        const std::size_t w = enc.cols() - off;
        nn::Tensor agg(db.table(target).size(), w + 1);
        for (const DummyTable& d : data.dummies) {
            if (d.source_table != db.schema().target.table) {
                continue;
            }
            std::vector<std::size_t> count(agg.rows(), 0);
            for (const RetrievalLink& link : d.links) {
                auto dst = agg.row(link.query);
                auto src = enc.row(link.retrieved);
                for (std::size_t j = 0; j < w; ++j) {
                    dst[j] += src[off + j];
                }
                count[link.query] += 1;
            }
            for (std::size_t r = 0; r < agg.rows(); ++r) {
                if (count[r] > 0) {
                    auto dst = agg.row(r);
                    for (std::size_t j = 0; j < w; ++j) {
                        dst[j] /= static_cast<double>(count[r]);
                    }
                    dst[w] = static_cast<double>(count[r]) / static_cast<double>(config.hp.k);
                }
            }
            data.retrieval_features = std::move(agg);
            break;
        }
    }

    if (options.propagation) {
        data.graph = build_graph(db, config.graph_mode);
        if (data.retrieval_db) {
            data.retrieval_graph = build_graph(*data.retrieval_db, config.graph_mode);
        }
        data.has_propagation = true;
    }
    return data;
}

PreparedData prepare(const Database& db, const SRPConfig& config) {
    return prepare(db, config,
                   PrepareOptions{config.toggles.synthesis, config.toggles.retrieval, config.toggles.propagation});
}

// --- Model ----------------------------------------------------------------------------

SrpModel::SrpModel(const PreparedData& data, const SRPConfig& config) : data_(&data), config_(config) {
    config_.validate(true);
    const ModuleToggles& t = config_.toggles;
    if ((t.synthesis && !data.has_synthesis) || (t.retrieval && !data.has_retrieval) ||
        (t.propagation && !data.has_propagation)) {
        throw ConfigError("offline stages missing for toggles " + t.label());
    }
    const Database& db = data.db;
    const std::size_t target = db.table_index(db.schema().target.table);
    const std::size_t emb = config_.hp.embedding_size;
    Rng init(mix64(config_.seed, 0x5eedULL));

    use_unary_ = t.synthesis || t.retrieval || !t.propagation;
    if (use_unary_) {
        const FeatureTable ft = t.synthesis ? data.unary_features : original_features(db);
        std::optional<WordVectors> vectors;
        if (!config_.word_vectors.empty()) {
            vectors = WordVectors::load(config_.word_vectors);
        }
        EncoderConfig ec{config_.max_vocabulary, config_.hp.m, config_.text_dim, vectors ? &*vectors : nullptr};
        nn::Tensor x(db.table(target).size(), 0);
        if (!ft.columns.empty()) {
            const auto specs = fit_encoders(ft, data.split.train, ec);
            x = encode_rows(ft, specs, ec.vectors);
        }
        const nn::Tensor* extra = t.retrieval && data.retrieval_features ? &*data.retrieval_features : nullptr;
        const std::size_t w = x.cols() + (extra != nullptr ? extra->cols() : 0);
        // A constant column keeps the projection well-formed for featureless targets.
        const std::size_t total = w == 0 ? 1 : w;
        unary_inputs_ = nn::Tensor(x.rows(), total, w == 0 ? 1.0 : 0.0);
        for (std::size_t r = 0; r < x.rows() && w > 0; ++r) {
            auto dst = unary_inputs_.row(r);
            std::copy(x.row(r).begin(), x.row(r).end(), dst.begin());
            if (extra != nullptr) {
                std::copy(extra->row(r).begin(), extra->row(r).end(), dst.begin() + x.cols());
            }
        }
        unary_weight_ = nn::Parameter("unary.weight", total, emb);
        nn::glorot_uniform(unary_weight_, init);
        unary_bias_ = nn::Parameter("unary.bias", 1, emb);
    }

    if (t.propagation) {
        graph_ = t.retrieval ? &*data.retrieval_graph : &*data.graph;
        const auto tt = graph_->node_type_index(db.schema().target.table);
        if (!tt) {
            throw ConfigError("target table is not a node type of the graph");
        }
        target_node_type_ = *tt;
        std::vector<std::size_t> widths;
        for (const NodeType& nt : graph_->node_types) {
            if (nt.table < data.encodings->per_table.size()) {
                node_inputs_.features.push_back(data.encodings->per_table[nt.table]);
            } else {
                node_inputs_.features.emplace_back(nt.count, 0);
            }
            widths.push_back(node_inputs_.features.back().cols());
            std::vector<std::size_t> hidden;
            if (nt.table == target) {
                // The seed's own features already feed H_u when it is present.
                const std::size_t from = use_unary_ ? 0 : data.encodings->label_offset;
                for (std::size_t c = from; c < widths.back(); ++c) {
                    hidden.push_back(c);
                }
            }
            node_inputs_.seed_hidden_columns.push_back(std::move(hidden));
        }
        PropagationConfig pc{emb, config_.hp.gnn_layers, config_.hp.dropout};
        propagator_ = std::make_unique<Propagator>(widths, graph_->edge_types.size(), pc, init);
    }

    std::size_t in = (use_unary_ ? emb : 0) + (t.propagation ? emb : 0);
    const std::size_t out = data.task.output_width();
    head_weights_.reserve(config_.hp.mlp_layers);
    head_biases_.reserve(config_.hp.mlp_layers);
    for (std::size_t l = 0; l < config_.hp.mlp_layers; ++l) {
        const bool last = l + 1 == config_.hp.mlp_layers;
        const std::size_t width = last ? out : config_.hp.hidden_size;
        head_weights_.emplace_back("head" + std::to_string(l) + ".weight", in, width);
        nn::glorot_uniform(head_weights_.back(), init);
        head_biases_.emplace_back("head" + std::to_string(l) + ".bias", 1, width);
        in = width;
    }
}

std::vector<nn::Parameter*> SrpModel::parameters() {
    std::vector<nn::Parameter*> out;
    if (use_unary_) {
        out.push_back(&unary_weight_);
        out.push_back(&unary_bias_);
    }
    if (propagator_) {
        for (auto* p : propagator_->parameters()) {
            out.push_back(p);
        }
    }
    for (std::size_t l = 0; l < head_weights_.size(); ++l) {
        out.push_back(&head_weights_[l]);
        out.push_back(&head_biases_[l]);
    }
    return out;
}

std::string SrpModel::checkpoint() const {
    auto params = const_cast<SrpModel*>(this)->parameters();
    std::vector<const nn::Parameter*> view(params.begin(), params.end());
    return nn::checkpoint_bytes(view);
}

void SrpModel::restore(const std::string& bytes) {
    auto params = parameters();
    nn::load_checkpoint_bytes(bytes, params);
}

std::uint64_t SrpModel::eval_sampler_seed() const { return mix64(config_.seed, 0xe7a1ULL); }

SampledBlock SrpModel::sample(std::span<const std::size_t> rows, std::uint64_t sampler_seed) const {
    if (!graph_) {
        return {};
    }
    SamplerConfig sc;
    sc.layers = config_.hp.gnn_layers;
    sc.fanout = {config_.hp.fanout};
    sc.seed = sampler_seed;
    sc.temporal = data_->time_filter;
    std::vector<std::int64_t> cutoffs(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        cutoffs[i] = data_->target_cutoffs[rows[i]];
    }
    return sample_neighbors(*graph_, target_node_type_, rows, std::span<const std::int64_t>(cutoffs), sc);
}

nn::Var SrpModel::forward(nn::Tape& tape, std::span<const std::size_t> rows, const SampledBlock* block,
                          Rng* dropout_rng) {
    std::vector<nn::Var> parts;
    if (use_unary_) {
        nn::Tensor x(rows.size(), unary_inputs_.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::copy(unary_inputs_.row(rows[i]).begin(), unary_inputs_.row(rows[i]).end(), x.row(i).begin());
        }
        nn::Var h = nn::relu(nn::linear(tape.constant(std::move(x)), tape.parameter(unary_weight_),
                                        tape.parameter(unary_bias_)));
        if (dropout_rng != nullptr) {
            h = nn::dropout(h, config_.hp.dropout, *dropout_rng);
        }
        parts.push_back(h);
    }
    if (propagator_) {
        if (block == nullptr || block->seed_count() != rows.size()) {
            throw ConfigError("propagation needs a sampled block for the batch");
        }
        parts.push_back(propagator_->propagate(tape, *block, node_inputs_, dropout_rng));
    }
    nn::Var z = parts.size() == 1 ? parts[0] : nn::concat_cols(parts);
    for (std::size_t l = 0; l < head_weights_.size(); ++l) {
        z = nn::linear(z, tape.parameter(head_weights_[l]), tape.parameter(head_biases_[l]));
        if (l + 1 < head_weights_.size()) {
            z = nn::relu(z);
            if (dropout_rng != nullptr) {
                z = nn::dropout(z, config_.hp.dropout, *dropout_rng);
            }
        }
    }
    switch (data_->task.kind) {
        case TaskKind::binary:
            return nn::sigmoid(z);
        case TaskKind::multiclass:
            return nn::softmax(z);
        case TaskKind::regression:
            return z;
    }
    return z;
}

nn::Tensor SrpModel::predict(std::span<const std::size_t> rows) {
    const std::size_t out_w = data_->task.output_width();
    nn::Tensor out(rows.size(), out_w);
    const std::size_t batch = std::max<std::size_t>(config_.hp.batch_size, 1);
    nn::Tape tape;
    for (std::size_t start = 0; start < rows.size(); start += batch) {
        const auto part = rows.subspan(start, std::min(batch, rows.size() - start));
        SampledBlock block;
        if (graph_) {
            block = sample(part, eval_sampler_seed());
        }
        nn::Var y = forward(tape, part, graph_ ? &block : nullptr, nullptr);
        const nn::Tensor& v = y.value();
        std::copy(v.data().begin(), v.data().end(), out.data().begin() + start * out_w);
        tape.clear();
    }
    return out;
}

nn::Var SrpModel::loss(nn::Var output, std::span<const std::size_t> rows) const {
    const TaskInfo& task = data_->task;
    switch (task.kind) {
        case TaskKind::binary: {
            std::vector<double> y(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                y[i] = task.targets[rows[i]];
            }
            return nn::bce(output, y);
        }
        case TaskKind::multiclass: {
            std::vector<std::size_t> y(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                y[i] = static_cast<std::size_t>(task.targets[rows[i]]);
            }
            return nn::cross_entropy(output, y);
        }
        case TaskKind::regression: {
            std::vector<double> y(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                y[i] = (task.targets[rows[i]] - task.target_mean) / task.target_std;
            }
            return nn::mse(output, y);
        }
    }
    throw ConfigError("unknown task");
}

std::optional<double> SrpModel::evaluate(std::span<const std::size_t> rows) {
    if (rows.empty()) {
        return std::nullopt;
    }
    const TaskInfo& task = data_->task;
    const nn::Tensor p = predict(rows);
    switch (task.kind) {
        case TaskKind::binary: {
            std::vector<double> y(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                y[i] = task.targets[rows[i]];
            }
            try {
                return auc(p.data(), y);
            } catch (const DataError&) {
                return std::nullopt;
            }
        }
        case TaskKind::multiclass: {
            std::vector<std::size_t> pred(rows.size()), y(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                auto r = p.row(i);
                pred[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
                y[i] = static_cast<std::size_t>(task.targets[rows[i]]);
            }
            return accuracy(pred, y);
        }
        case TaskKind::regression: {
            std::vector<double> pred(rows.size()), y(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                pred[i] = p[i] * task.target_std + task.target_mean;
                y[i] = task.targets[rows[i]];
            }
            return rmse(pred, y);
        }
    }
    return std::nullopt;
}

double selection_score(TaskKind kind, double metric) { return kind == TaskKind::regression ? -metric : metric; }

// --- Training -----------------------------------------------------------------------------

TrainResult train_model(SrpModel& model, const PreparedData& data, std::string_view combo) {
    const SRPConfig& config = model.config();
    TrainResult result;
    auto params = model.parameters();
    nn::AdamOptions adam;
    adam.learning_rate = config.hp.learning_rate;

    std::vector<std::size_t> order = data.split.train;
    const std::size_t batch = config.hp.batch_size;
    double best_score = -std::numeric_limits<double>::infinity();
    result.checkpoint = model.checkpoint();
    nn::Tape tape;
    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        Rng shuffle(mix64(config.seed, 0x100000ULL + epoch));
        shuffle.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::span<const std::size_t> rows(order.data() + start, std::min(batch, order.size() - start));
            const std::uint64_t batch_key = mix64(mix64(config.seed, epoch + 1), batches);
            SampledBlock block;
            if (model.uses_graph()) {
                block = model.sample(rows, batch_key);
            }
            Rng dropout(mix64(batch_key, 0xd20ULL));
            nn::Var out = model.forward(tape, rows, model.uses_graph() ? &block : nullptr,
                                        config.hp.dropout > 0.0 ? &dropout : nullptr);
            nn::Var l = model.loss(out, rows);
            const double lv = l.value()[0];
            if (!std::isfinite(lv)) {
                throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch + 1));
            }
            epoch_loss += lv;
            ++batches;
            tape.backward(l);
            nn::adam_step(params, adam);
        }
        epoch_loss /= static_cast<double>(std::max<std::size_t>(batches, 1));
        result.loss_history.push_back(epoch_loss);

        const auto metric = model.evaluate(data.split.valid);
        const double score = metric ? selection_score(data.task.kind, *metric) : -epoch_loss;
        result.valid_history.push_back(metric.value_or(std::nan("")));
        if (score > best_score) {
            best_score = score;
            result.best_epoch = epoch;
            result.checkpoint = model.checkpoint();
        } else if (epoch - result.best_epoch >= config.patience) {
            break;
        }
    }
    model.restore(result.checkpoint);

    const std::string seed = std::to_string(config.seed);
    const std::string name = combo.empty() ? config.toggles.label() : std::string(combo);
    const std::string metric = data.task.metric_name();
    for (auto [split, rows] : {std::pair<const char*, const std::vector<std::size_t>*>{"train", &data.split.train},
                               {"valid", &data.split.valid},
                               {"test", &data.split.test}}) {
        if (const auto v = model.evaluate(*rows)) {
            result.report.add(name, seed, split, metric, *v);
        }
    }
    return result;
}

TrainResult train(const Database& db, const SRPConfig& config) {
    config.validate();
    const PreparedData data = prepare(db, config);
    SrpModel model(data, config);
    return train_model(model, data);
}

}  // namespace srp

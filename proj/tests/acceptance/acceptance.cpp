// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fixtures.hpp"
#include "srp/encoding.hpp"
#include "srp/graph.hpp"
#include "srp/metrics.hpp"
#include "srp/model.hpp"
#include "srp/nn.hpp"
#include "srp/propagation.hpp"
#include "srp/retrieval.hpp"
#include "srp/synthesis.hpp"
#include "srp/synthgen.hpp"

using namespace srp;
using namespace srp::testing;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        if (pass) {
            detail = why;
        }
        pass = false;
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// --- 1. retrieval against a brute-force scorer ---------------------------------------

/// One random table of numeric and categorical columns plus an excluded target.
Database random_retrieval_table(Rng& rng, bool timed) {
    const std::size_t rows = 2 + rng.below(999);
    const std::size_t width = 1 + rng.below(8);
    std::string schema = R"({"tables": [{"name": "T", )";
    if (timed) {
        schema += R"("timestamp_column": "ts", )";
    }
    schema += R"("columns": [{"name": "id", "kind": "primary_key"})";
    if (timed) {
        schema += R"(, {"name": "ts", "kind": "timestamp"})";
    }
    std::vector<bool> numeric(width);
    std::vector<std::size_t> levels(width);
    for (std::size_t c = 0; c < width; ++c) {
        numeric[c] = rng.bernoulli(0.5);
        levels[c] = 2 + rng.below(12);
        schema += R"(, {"name": "f)" + std::to_string(c) + R"(", "kind": ")" +
                  (numeric[c] ? "numeric" : "categorical") + "\"}";
    }
    schema += R"(, {"name": "y", "kind": "numeric"}]}], "target": {"table": "T", "column": "y", "task": "regression"}})";

    std::string csv = timed ? "id,ts" : "id";
    for (std::size_t c = 0; c < width; ++c) {
        csv += ",f" + std::to_string(c);
    }
    csv += ",y\n";
    for (std::size_t r = 0; r < rows; ++r) {
        csv += "r" + std::to_string(r);
        if (timed) {
            csv += "," + std::to_string(rng.below(rows / 3 + 2));
        }
        for (std::size_t c = 0; c < width; ++c) {
            csv += ",";
            if (rng.bernoulli(0.1)) {
                continue;
            }
            if (numeric[c]) {
                csv += std::to_string(static_cast<double>(rng.below(levels[c] * 3)) * 0.5);
            } else {
                csv += "k" + std::to_string(rng.below(levels[c]));
            }
        }
        csv += ",0\n";
    }
    return make_db(schema, {{"T", csv}});
}

/// Brute-force top-K over raw values: quantile bins from sorted order statistics,
/// scores summed per column in column order.
std::vector<std::vector<RetrievalLink>> brute_force_topk(const Database& db, std::size_t k, std::size_t bins) {
    const Table& t = db.table("T");
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < t.def.columns.size(); ++c) {
        const auto& name = t.def.columns[c].name;
        if (name.size() > 1 && name[0] == 'f') {
            cols.push_back(c);
        }
    }
    const std::size_t n = t.size();
    // codes: -1 missing, else bin index or category id
    std::vector<std::vector<std::int64_t>> code(n, std::vector<std::int64_t>(cols.size(), -1));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        const std::size_t c = cols[j];
        if (t.def.columns[c].kind == ColumnKind::numeric) {
            std::vector<double> v;
            for (const auto& row : t.rows) {
                if (!row[c].is_missing()) {
                    v.push_back(row[c].as_number());
                }
            }
            if (v.empty()) {
                continue;
            }
            std::sort(v.begin(), v.end());
            std::vector<double> b(bins);
            for (std::size_t q = 1; q <= bins; ++q) {
                // smallest order statistic whose cumulative fraction i/n reaches q/B
                std::size_t i = 1;
                while (static_cast<double>(i) * static_cast<double>(bins) < static_cast<double>(q) * v.size()) {
                    ++i;
                }
                b[q - 1] = v[i - 1];
            }
            for (std::size_t r = 0; r < n; ++r) {
                if (t.rows[r][c].is_missing()) {
                    continue;
                }
                const double x = t.rows[r][c].as_number();
                std::size_t q = 1;
                while (q < bins && x > b[q - 1]) {
                    ++q;
                }
                code[r][j] = static_cast<std::int64_t>(q);
            }
        } else {
            std::map<std::string, std::int64_t> ids;
            for (std::size_t r = 0; r < n; ++r) {
                if (!t.rows[r][c].is_missing()) {
                    code[r][j] = ids.emplace(t.rows[r][c].as_category(), ids.size()).first->second;
                }
            }
        }
    }
    const auto ts = db.row_timestamps(0);
    std::vector<std::vector<RetrievalLink>> out(n);
    for (std::size_t q = 0; q < n; ++q) {
        std::vector<std::size_t> pool;
        for (std::size_t r = 0; r < n; ++r) {
            if (!ts || (*ts)[r] < (*ts)[q]) {
                pool.push_back(r);
            }
        }
        std::vector<std::map<std::int64_t, std::size_t>> freq(cols.size());
        for (std::size_t r : pool) {
            for (std::size_t j = 0; j < cols.size(); ++j) {
                if (code[r][j] != -1) {
                    ++freq[j][code[r][j]];
                }
            }
        }
        const double total = static_cast<double>(pool.size());
        std::vector<RetrievalLink> scored;
        for (std::size_t r : pool) {
            if (r == q) {
                continue;
            }
            double s = 0.0;
            for (std::size_t j = 0; j < cols.size(); ++j) {
                if (code[q][j] != -1 && code[q][j] == code[r][j]) {
                    const double cnt = static_cast<double>(freq[j][code[q][j]]);
                    s += std::log((total - cnt + 0.5) / (cnt + 0.5));
                }
            }
            scored.push_back({q, r, s});
        }
        std::sort(scored.begin(), scored.end(), [](const RetrievalLink& a, const RetrievalLink& b) {
            return a.score != b.score ? a.score > b.score : a.retrieved < b.retrieved;
        });
        scored.resize(std::min(k, scored.size()));
        out[q] = std::move(scored);
    }
    return out;
}

Outcome criterion_retrieval_oracle() {
    const auto t0 = Clock::now();
    Outcome o;
    Rng rng(1001);
    std::size_t compared = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const bool timed = trial % 2 == 1;
        const Database db = random_retrieval_table(rng, timed);
        const std::size_t k = 1 + rng.below(6);
        const std::size_t bins = 2 + rng.below(9);
        std::vector<std::size_t> all(db.table("T").size());
        std::iota(all.begin(), all.end(), 0);
        const CodedTable coded = code_table(db, 0, fit_discretization(db, 0, all, bins));
        const RetrievalIndex index(coded);
        std::optional<std::span<const std::int64_t>> cut;
        if (coded.timestamps) {
            cut = std::span<const std::int64_t>(*coded.timestamps);
        }
        const DummyTable got = retrieve_topk(coded, k, index, cut);
        const auto want = brute_force_topk(db, k, bins);
        std::vector<std::vector<RetrievalLink>> by_query(want.size());
        for (const auto& l : got.links) {
            by_query[l.query].push_back(l);
        }
        for (std::size_t q = 0; q < want.size(); ++q) {
            ++compared;
            if (by_query[q].size() != want[q].size()) {
                o.fail("table " + std::to_string(trial) + " query " + std::to_string(q) + ": set size differs");
                continue;
            }
            for (std::size_t i = 0; i < want[q].size(); ++i) {
                if (by_query[q][i].retrieved != want[q][i].retrieved ||
                    std::abs(by_query[q][i].score - want[q][i].score) > 1e-9) {
                    o.fail("table " + std::to_string(trial) + " query " + std::to_string(q) + ": ranking differs");
                }
            }
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 60.0) {
        o.fail("took " + fmt("%.1f", secs) + " s");
    }
    if (o.pass) {
        o.detail = std::to_string(compared) + " queries over 50 tables match, " + fmt("%.1f", secs) + " s";
    }
    return o;
}

// --- 2. FA encoding ---------------------------------------------------------------------

Outcome criterion_fa_encoding() {
    Outcome o;
    Rng rng(2002);
    ColumnEncoderSpec spec;
    spec.kind = EncoderKind::fa_weighted;
    for (int c = 0; c < 12; ++c) {
        spec.vocabulary.push_back("c" + std::to_string(c < 10 ? c : c + 80));
    }
    std::sort(spec.vocabulary.begin(), spec.vocabulary.end());
    spec.width = spec.vocabulary.size() + 1;
    for (int trial = 0; trial < 1000; ++trial) {
        FrequencyMap f;
        const std::size_t distinct = 1 + rng.below(8);
        for (std::size_t i = 0; i < distinct; ++i) {
            // includes some categories outside the vocabulary
            f["c" + std::to_string(rng.below(14))] += 1 + static_cast<std::int64_t>(rng.below(5));
        }
        const std::size_t m = 1 + rng.below(5);
        const auto v = encode_fa(f, spec, m);
        const double sum = std::accumulate(v.begin(), v.end(), 0.0);
        if (std::abs(sum - 1.0) > 1e-12) {
            o.fail("weights sum to " + fmt("%.17g", sum));
        }
        std::vector<Value> group;
        for (const auto& [cat, n] : f) {
            for (std::int64_t i = 0; i < n; ++i) {
                group.push_back(Value::category(cat));
            }
        }
        const auto mode = std::get<Value>(aggregate(group, AggregatorKind::MODE));
        std::vector<double> one_hot(spec.width, 0.0);
        one_hot[spec.lookup(mode.as_category())] = 1.0;
        if (encode_fa(f, spec, 1) != one_hot) {
            o.fail("m = 1 differs from the MODE one-hot");
        }
    }
    if (o.pass) {
        o.detail = "1000 maps: sums within 1e-12, m = 1 equals MODE one-hot";
    }
    return o;
}

// --- 3. gradients -----------------------------------------------------------------------

struct GradStats {
    std::size_t checked = 0;
    double worst = 0.0;
    std::string worst_name;
};

/// Central differences for every entry of every parameter; `loss` rebuilds the
/// scalar loss on a fresh tape.
void finite_difference(std::span<nn::Parameter* const> params, const std::function<nn::Var(nn::Tape&)>& loss,
                       GradStats& stats) {
    for (nn::Parameter* p : params) {
        p->zero_grad();
    }
    {
        nn::Tape tape;
        tape.backward(loss(tape));
    }
    std::vector<nn::Tensor> analytic;
    for (nn::Parameter* p : params) {
        analytic.push_back(p->grad);
    }
    auto eval = [&] {
        nn::Tape tape;
        return loss(tape).value()[0];
    };
    for (std::size_t k = 0; k < params.size(); ++k) {
        nn::Parameter& p = *params[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value[i];
            const double h = 1e-6 * std::max(1.0, std::abs(saved));
            p.value[i] = saved + h;
            const double up = eval();
            p.value[i] = saved - h;
            const double down = eval();
            p.value[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[k][i];
            const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
            const double rel = std::abs(a - numeric) / scale;
            ++stats.checked;
            if (rel > stats.worst) {
                stats.worst = rel;
                stats.worst_name = p.name;
            }
        }
    }
}

nn::Parameter random_param(Rng& rng, const std::string& name, std::size_t r, std::size_t c) {
    nn::Parameter p(name, r, c);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
        p.value[i] = rng.uniform(-1, 1);
    }
    return p;
}

void op_gradients(GradStats& stats) {
    using namespace nn;
    Rng rng(3003);
    auto reduce = [](Tape& t, Var x) {
        Tensor w(x.cols(), 1);
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] = 0.25 + 0.1 * static_cast<double>(i);
        }
        return mean_rows(matmul(x, t.constant(w)));
    };
    Parameter a = random_param(rng, "op.a", 4, 3), b = random_param(rng, "op.b", 3, 5), c = random_param(rng, "op.c", 1, 5);
    Parameter d = random_param(rng, "op.d", 4, 5), e = random_param(rng, "op.e", 4, 1);
    std::vector<Parameter*> ps{&a, &b, &c, &d, &e};
    const std::vector<std::size_t> idx{3, 0, 2, 2, 1};
    const std::vector<std::size_t> src{0, 1, 2, 3, 4}, dst{0, 0, 1, 2, 2};
    const std::vector<std::size_t> classes{1, 4, 0, 2};
    const std::vector<double> labels{1, 0, 1, 0};
    finite_difference(ps,
                      [&](Tape& t) {
                          Var x = linear(t.parameter(a), t.parameter(b), t.parameter(c));
                          Var y = relu(add(x, mul(t.parameter(d), scale(t.parameter(d), 0.5))));
                          Var z = add_row(y, t.parameter(c));
                          Var g = segment_mean(gather_rows(z, idx), src, dst, 3);
                          const std::vector<Var> rows{g, broadcast_rows(t.parameter(c), 1)};
                          const std::vector<Var> cols{z, t.parameter(e)};
                          Var loss = add(reduce(t, concat_rows(rows)), reduce(t, concat_cols(cols)));
                          loss = add(loss, cross_entropy(softmax(z), classes));
                          loss = add(loss, bce(sigmoid(t.parameter(e)), labels));
                          loss = add(loss, mse(t.parameter(e), labels));
                          return add(loss, reduce(t, matmul(mean_rows(y), t.constant(Tensor(5, 2, 0.3)))));
                      },
                      stats);
}

Outcome criterion_gradients() {
    Outcome o;
    GradStats stats;
    op_gradients(stats);

    const SynthData data = small_synthetic(31, 400);
    SRPConfig c;
    c.toggles = ModuleToggles{true, true, true};
    c.seed = 5;
    c.hp.dropout = 0.0;
    c.hp.fanout = 2;
    c.hp.embedding_size = 6;
    c.hp.hidden_size = 8;
    const PreparedData prepared = prepare(data.db, c);
    SrpModel model(prepared, c);
    // smallest seed batch whose sampled block reaches 50 nodes
    std::vector<std::size_t> rows;
    SampledBlock block;
    for (std::size_t r : prepared.split.train) {
        rows.push_back(r);
        block = model.sample(rows, 77);
        if (block.nodes.size() >= 50) {
            break;
        }
    }
    const auto params = model.parameters();
    std::size_t entries = 0;
    for (auto* p : params) {
        entries += p->value.size();
    }
    const std::size_t before = stats.checked;
    finite_difference(params, [&](nn::Tape& tape) { return model.loss(model.forward(tape, rows, &block, nullptr), rows); },
                      stats);
    if (stats.checked - before != entries) {
        o.fail("not every parameter entry was checked");
    }
    if (stats.worst >= 1e-4) {
        o.fail("relative error " + fmt("%.3g", stats.worst) + " in " + stats.worst_name);
    }
    if (o.pass) {
        o.detail = std::to_string(stats.checked) + " entries (S+R+P model on a " + std::to_string(block.nodes.size()) +
                   "-node block), worst relative error " + fmt("%.2g", stats.worst);
    }
    return o;
}

// --- 4. leakage -------------------------------------------------------------------------

/// Rewrites every Interaction and Session row at or after `pivot`.
Database mutate_future(const Database& db, std::int64_t pivot, std::uint64_t seed) {
    Rng rng(seed);
    auto tables = db.tables();
    const std::size_t users = db.table("User").size();
    const std::size_t items = db.table("Item").size();
    for (auto& t : tables) {
        const auto ts_col = t.def.timestamp_column ? t.def.column_index(*t.def.timestamp_column) : std::nullopt;
        if (!ts_col) {
            continue;
        }
        for (auto& row : t.rows) {
            if (row[*ts_col].as_timestamp() < pivot) {
                continue;
            }
            for (std::size_t c = 0; c < t.def.columns.size(); ++c) {
                const ColumnDef& col = t.def.columns[c];
                if (c == *ts_col || col.kind == ColumnKind::primary_key) {
                    continue;
                }
                if (col.kind == ColumnKind::foreign_key) {
                    const bool user = col.fk_target->table == "User";
                    row[c] = Value::category((user ? "u" : "p") + std::to_string(rng.below(user ? users : items)));
                } else if (col.kind == ColumnKind::numeric) {
                    row[c] = Value::number(rng.normal() * 10.0);
                } else if (col.name == "label") {
                    row[c] = Value::category(rng.bernoulli(0.5) ? "1" : "0");
                } else {
                    row[c] = Value::category("z" + std::to_string(rng.below(3)));
                }
            }
        }
    }
    return Database(db.schema(), std::move(tables));
}

struct LeakCounts {
    std::size_t features = 0;
    std::size_t retrieved = 0;
    std::size_t predictions = 0;
    std::size_t total() const { return features + retrieved + predictions; }
};

LeakCounts count_changes(const Database& db, bool time_filter) {
    SRPConfig c;
    c.toggles = ModuleToggles{true, true, true};
    c.seed = 4;
    c.max_epochs = 2;
    c.time_filter = time_filter;
    const PreparedData a = prepare(db, c);
    const auto& valid = a.split.valid;
    const std::int64_t pivot = a.target_cutoffs[valid[valid.size() / 2]];
    const Database mutated = mutate_future(db, pivot, 404);
    const PreparedData b = prepare(mutated, c);

    std::vector<std::size_t> past;
    for (std::size_t r = 0; r < a.target_cutoffs.size(); ++r) {
        if (a.target_cutoffs[r] < pivot) {
            past.push_back(r);
        }
    }
    LeakCounts n;
    for (std::size_t col = 0; col < a.unary_features.columns.size(); ++col) {
        const FeatureColumn& x = a.unary_features.columns[col];
        const FeatureColumn& y = b.unary_features.columns[col];
        for (std::size_t r : past) {
            const bool same = x.kind == FeatureKind::frequency ? x.frequencies[r] == y.frequencies[r]
                                                                : x.values[r] == y.values[r];
            n.features += same ? 0 : 1;
        }
    }
    const std::string target = db.schema().target.table;
    auto links = [&](const PreparedData& d) {
        std::map<std::size_t, std::vector<std::size_t>> out;
        for (const DummyTable& t : d.dummies) {
            if (t.source_table == target) {
                for (const auto& l : t.links) {
                    out[l.query].push_back(l.retrieved);
                }
            }
        }
        return out;
    };
    const auto la = links(a), lb = links(b);
    for (std::size_t r : past) {
        const auto ia = la.find(r), ib = lb.find(r);
        const bool same = (ia == la.end()) == (ib == lb.end()) && (ia == la.end() || ia->second == ib->second);
        n.retrieved += same ? 0 : 1;
    }

    SrpModel ma(a, c);
    const TrainResult trained = train_model(ma, a);
    SrpModel mb(b, c);
    mb.restore(trained.checkpoint);
    const nn::Tensor pa = ma.predict(past), pb = mb.predict(past);
    for (std::size_t i = 0; i < pa.size(); ++i) {
        n.predictions += pa[i] == pb[i] ? 0 : 1;
    }
    return n;
}

Outcome criterion_leakage() {
    const auto t0 = Clock::now();
    Outcome o;
    SynthSpec spec;
    spec.seed = 44;
    spec.n_interactions = 2000;
    spec.n_sessions = 2000;
    const Database db = generate_synthetic(spec).db;
    const LeakCounts on = count_changes(db, true);
    const LeakCounts off = count_changes(db, false);
    if (on.total() != 0) {
        o.fail("time filter on: " + std::to_string(on.features) + " features, " + std::to_string(on.retrieved) +
               " retrieved sets, " + std::to_string(on.predictions) + " predictions changed");
    }
    if (off.total() == 0) {
        o.fail("time filter off: nothing changed (negative control)");
    }
    const double secs = seconds_since(t0);
    if (secs >= 120.0) {
        o.fail("took " + fmt("%.1f", secs) + " s");
    }
    if (o.pass) {
        o.detail = "filter on: 0 changes; filter off: " + std::to_string(off.features) + " features, " +
                   std::to_string(off.retrieved) + " retrieved sets, " + std::to_string(off.predictions) +
                   " predictions changed; " + fmt("%.1f", secs) + " s";
    }
    return o;
}

// --- 5. ablation direction ---------------------------------------------------------------

std::string table_text(const AblationResult& r) {
    std::string s;
    for (const auto& row : r.rows) {
        s += row.combo + "=" + fmt("%.3f", row.mean) + " ";
    }
    return s;
}

Outcome criterion_ablation() {
    const auto t0 = Clock::now();
    Outcome o;
    const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    SynthSpec spec;
    spec.n_interactions = 5000;
    spec.unary_signal_strength = 0.8;
    spec.composite_signal_strength = 0.8;
    spec.noise = 0.1;
    const Database db = generate_synthetic(spec).db;
    SRPConfig base;
    AblationOptions opt;
    opt.seeds = 5;
    opt.workers = workers;
    const AblationResult full = ablate(db, base, opt);
    std::printf("  ablation (both signals): %s\n", table_text(full).c_str());
    const double best = full.find("S+R+P")->mean;
    for (const auto& row : full.rows) {
        if (row.combo != "S+R+P" && row.combo != "none" && row.mean > best) {
            o.fail("(a) " + row.combo + " " + fmt("%.4f", row.mean) + " > S+R+P " + fmt("%.4f", best));
        }
    }
    const double none = full.find("none")->mean;
    if (std::abs(none - 0.5) > 0.05) {
        o.fail("(c) all-off mean AUC " + fmt("%.4f", none));
    }

    spec.unary_signal_strength = 0.0;
    const Database composite = generate_synthetic(spec).db;
    opt.combinations = {ModuleToggles::parse("s"), ModuleToggles::parse("r"), ModuleToggles::parse("s,r"),
                        ModuleToggles::parse("r,p"), ModuleToggles::parse("s,r,p")};
    const AblationResult comp = ablate(composite, base, opt);
    std::printf("  ablation (composite only): %s\n", table_text(comp).c_str());
    for (const auto& row : comp.rows) {
        if (row.combo == "S") {
            if (std::abs(row.mean - 0.5) > 0.05) {
                o.fail("(b) S-only mean AUC " + fmt("%.4f", row.mean) + " outside 0.5 +- 0.05");
            }
        } else if (row.mean < 0.65) {
            o.fail("(b) " + row.combo + " mean AUC " + fmt("%.4f", row.mean) + " < 0.65");
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 1200.0) {
        o.fail("took " + fmt("%.0f", secs) + " s");
    }
    if (o.pass) {
        o.detail = "S+R+P " + fmt("%.4f", best) + " is the best row, all-off " + fmt("%.4f", none) +
                   ", composite-only checks hold; " + fmt("%.0f", secs) + " s";
    }
    return o;
}

// --- 6. AUC oracle ------------------------------------------------------------------------

Outcome criterion_auc() {
    Outcome o;
    Rng rng(6006);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(999);
        std::vector<double> s(n), y(n);
        const std::uint64_t levels = trial % 3 == 0 ? 5 : 100000;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(levels)) / 3.0;
            y[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
        }
        y[0] = 1.0;
        y[n - 1] = 0.0;
        double wins = 0.0, pairs = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (y[i] == 1.0 && y[j] == 0.0) {
                    pairs += 1.0;
                    wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
                }
            }
        }
        const double got = auc(s, y);
        if (got != wins / pairs) {
            o.fail("set " + std::to_string(trial) + ": " + fmt("%.17g", got) + " vs " + fmt("%.17g", wins / pairs));
        }
    }
    std::vector<std::size_t> pred{0, 1, 2, 2}, lab{0, 1, 1, 2};
    if (accuracy(pred, lab) != 0.75) {
        o.fail("accuracy example");
    }
    if (o.pass) {
        o.detail = "200 sets equal pairwise counting exactly";
    }
    return o;
}

// --- 7. graph counts ----------------------------------------------------------------------

Outcome criterion_graph_counts() {
    Outcome o;
    Rng rng(7007);
    for (int trial = 0; trial < 20; ++trial) {
        const Database db = random_database(rng);
        std::size_t fk_cells = 0, rows = 0, converted = 0;
        for (const auto& t : db.tables()) {
            rows += t.size();
            const bool link = !t.def.primary_key() && t.def.foreign_keys().size() == 2;
            converted += link ? t.size() : 0;
            for (std::size_t c : t.def.foreign_keys()) {
                for (const auto& row : t.rows) {
                    fk_cells += row[c].is_missing() ? 0 : 1;
                }
            }
        }
        const HeteroGraph r2n = build_r2n(db);
        const HeteroGraph r2ne = build_r2ne(db);
        std::size_t forward = 0;
        for (const auto& e : r2n.edge_types) {
            forward += e.is_reverse() ? 0 : e.edge_count();
        }
        if (forward != fk_cells) {
            o.fail("schema " + std::to_string(trial) + ": " + std::to_string(forward) + " edges vs " +
                   std::to_string(fk_cells) + " FK cells");
        }
        if (r2n.node_count() - r2ne.node_count() != converted || r2n.node_count() != rows) {
            o.fail("schema " + std::to_string(trial) + ": node reduction differs from converted rows");
        }
    }
    if (o.pass) {
        o.detail = "20 random schemas exact";
    }
    return o;
}

// --- 8. propagation degeneracies -----------------------------------------------------------

Outcome criterion_propagation() {
    Outcome o;
    Rng rng(8008);
    {
        std::string csv = "id,x,y\n";
        for (int i = 0; i < 10; ++i) {
            csv += "t" + std::to_string(i) + "," + std::to_string(i * 0.3) + ",0\n";
        }
        const Database db = make_db(R"({"tables": [{"name": "T", "columns": [
            {"name": "id", "kind": "primary_key"}, {"name": "x", "kind": "numeric"}, {"name": "y", "kind": "numeric"}]}],
            "target": {"table": "T", "column": "y", "task": "regression"}})",
                                    {{"T", csv}});
        const HeteroGraph g = build_r2n(db);
        NodeInputs in;
        nn::Tensor f(10, 4);
        for (std::size_t i = 0; i < f.size(); ++i) {
            f[i] = rng.normal();
        }
        in.features.push_back(f);
        in.seed_hidden_columns.resize(1);
        PropagationConfig cfg;
        cfg.hidden = 5;
        cfg.layers = 3;
        Propagator p({4}, 0, cfg, rng);
        for (nn::Parameter* q : p.parameters()) {
            for (std::size_t i = 0; i < q->value.size(); ++i) {
                q->value[i] = rng.uniform(-1, 1);
            }
        }
        std::vector<std::size_t> seeds(10);
        std::iota(seeds.begin(), seeds.end(), 0);
        const SampledBlock b = sample_neighbors(g, 0, seeds, std::nullopt, SamplerConfig{3, {4}, 1, false});
        nn::Tape tape;
        const nn::Tensor h = p.propagate(tape, b, in).value();
        const auto ps = p.parameters();
        double worst = 0.0;
        for (std::size_t s = 0; s < 10; ++s) {
            std::vector<double> x(f.row(s).begin(), f.row(s).end());
            // input projection, then one self-path layer per level
            auto affine = [](const std::vector<double>& v, const nn::Tensor& w, const nn::Tensor& b) {
                std::vector<double> out(w.cols());
                for (std::size_t j = 0; j < w.cols(); ++j) {
                    out[j] = b[j];
                    for (std::size_t i = 0; i < v.size(); ++i) {
                        out[j] += v[i] * w(i, j);
                    }
                }
                return out;
            };
            x = affine(x, ps[0]->value, ps[1]->value);
            for (std::size_t l = 0; l < 3; ++l) {
                x = affine(x, ps[2 + 2 * l]->value, ps[3 + 2 * l]->value);
                if (l < 2) {
                    for (double& v : x) {
                        v = std::max(0.0, v);
                    }
                }
            }
            for (std::size_t j = 0; j < x.size(); ++j) {
                worst = std::max(worst, std::abs(x[j] - h(s, j)));
            }
        }
        if (worst > 1e-12) {
            o.fail("empty graph differs from the self-path MLP by " + fmt("%.3g", worst));
        }
    }
    {
        const SynthData data = small_synthetic(88, 400);
        const HeteroGraph g = build_r2n(data.db);
        const std::size_t target = *g.node_type_index("Interaction");
        NodeInputs in;
        for (const auto& nt : g.node_types) {
            nn::Tensor f(nt.count, 3);
            for (std::size_t i = 0; i < f.size(); ++i) {
                f[i] = rng.normal();
            }
            in.features.push_back(std::move(f));
        }
        in.seed_hidden_columns.resize(g.node_types.size());
        std::vector<std::size_t> widths(g.node_types.size(), 3);
        PropagationConfig cfg;
        cfg.hidden = 6;
        cfg.layers = 2;
        Propagator p(widths, g.edge_types.size(), cfg, rng);
        std::size_t probes = 0, changed = 0;
        while (probes < 100) {
            const std::vector<std::size_t> seeds{rng.below(g.node_types[target].count)};
            const SampledBlock b = sample_neighbors(g, target, seeds, std::nullopt, SamplerConfig{2, {3}, rng.next(), false});
            std::set<std::pair<std::size_t, std::size_t>> inside;
            for (const BlockNode& n : b.nodes) {
                inside.insert({n.type, n.id});
            }
            const std::size_t t = rng.below(g.node_types.size());
            const std::size_t id = rng.below(g.node_types[t].count);
            if (inside.contains({t, id})) {
                continue;
            }
            nn::Tape t1;
            const nn::Tensor before = p.propagate(t1, b, in).value();
            const double saved = in.features[t](id, 0);
            in.features[t](id, 0) = saved + 50.0;
            nn::Tape t2;
            changed += p.propagate(t2, b, in).value() == before ? 0 : 1;
            in.features[t](id, 0) = saved;
            ++probes;
        }
        if (changed != 0) {
            o.fail(std::to_string(changed) + " of 100 out-of-block probes changed a seed embedding");
        }
    }
    if (o.pass) {
        o.detail = "empty graph matches the self-path MLP within 1e-12; 100 out-of-block probes unchanged";
    }
    return o;
}

// --- 9. determinism -----------------------------------------------------------------------

Outcome criterion_determinism() {
    Outcome o;
    SynthSpec spec;
    spec.seed = 9;
    spec.n_interactions = 1500;
    spec.n_sessions = 1000;
    SRPConfig c;
    c.seed = 12;
    c.max_epochs = 5;
    TempDir dir;
    generate_to_disk(spec, dir.path() / "a");
    generate_to_disk(spec, dir.path() / "b");
    auto run = [&](const std::filesystem::path& p) {
        const Database db = load_database(load_schema(p / "schema.json"), p);
        return train(db, c);
    };
    const TrainResult a = run(dir.path() / "a");
    const TrainResult b = run(dir.path() / "b");
    if (a.report.to_csv() != b.report.to_csv()) {
        o.fail("EvalReports differ");
    }
    if (a.checkpoint != b.checkpoint) {
        o.fail("checkpoints differ");
    }
    if (o.pass) {
        o.detail = "two S+R+P runs: identical report and " + std::to_string(a.checkpoint.size()) + "-byte checkpoint";
    }
    return o;
}

// --- 10. inference overhead -----------------------------------------------------------------

double per_sample_seconds(SrpModel& model, std::span<const std::size_t> rows) {
    model.predict(rows);  // warm-up
    std::vector<double> times;
    for (int rep = 0; rep < 5; ++rep) {
        const auto t0 = Clock::now();
        model.predict(rows);
        times.push_back(seconds_since(t0) / static_cast<double>(rows.size()));
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

Outcome criterion_inference_overhead() {
    Outcome o;
    SynthSpec spec;
    spec.n_interactions = 5000;
    const Database db = generate_synthetic(spec).db;
    SRPConfig full;
    full.max_epochs = 3;
    SRPConfig prop = full;
    prop.toggles = ModuleToggles::parse("p");
    const PreparedData df = prepare(db, full);
    const PreparedData dp = prepare(db, prop);
    SrpModel mf(df, full), mp(dp, prop);
    train_model(mf, df);
    train_model(mp, dp);
    const double tf = per_sample_seconds(mf, df.split.test);
    const double tp = per_sample_seconds(mp, dp.split.test);
    const double ratio = tf / tp;
    const std::string numbers = "S+R+P " + fmt("%.1f", tf * 1e6) + " us/sample, P " + fmt("%.1f", tp * 1e6) +
                                " us/sample, ratio " + fmt("%.2f", ratio);
    if (ratio > 1.25) {
        o.fail(numbers + " > 1.25");
    } else {
        o.detail = numbers;
    }
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {"retrieval matches brute-force scoring", criterion_retrieval_oracle},
        {"FA encoding sums and MODE reduction", criterion_fa_encoding},
        {"finite-difference gradients", criterion_gradients},
        {"leakage suite with negative control", criterion_leakage},
        {"ablation direction on the planted-signal benchmark", criterion_ablation},
        {"AUC equals pairwise counting", criterion_auc},
        {"graph construction counts", criterion_graph_counts},
        {"propagation degeneracies", criterion_propagation},
        {"end-to-end determinism", criterion_determinism},
        {"inference overhead of S+R+P over P", criterion_inference_overhead},
    };
    int failures = 0;
    int index = 0;
    for (const Criterion& c : criteria) {
        ++index;
        Outcome out;
        const auto t0 = Clock::now();
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out.fail(std::string("exception: ") + e.what());
        }
        std::printf("%s %d %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", index, c.name, out.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
        failures += out.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}

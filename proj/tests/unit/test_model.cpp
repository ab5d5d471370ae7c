#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "srp/errors.hpp"
#include "srp/model.hpp"

using namespace srp;
using namespace srp::testing;

namespace {

const char* kToySchema = R"({"tables": [{"name": "T", "timestamp_column": "ts", "columns": [
    {"name": "id", "kind": "primary_key"}, {"name": "ts", "kind": "timestamp"},
    {"name": "x", "kind": "numeric"}, {"name": "y", "kind": "categorical"}]}],
    "target": {"table": "T", "column": "y", "task": "binary"}})";

/// y = [x > 0] on a single timestamped table.
Database separable(std::size_t n, std::uint64_t seed, int classes = 2) {
    Rng rng(seed);
    std::string csv = "id,ts,x,y\n";
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.uniform(-1, 1);
        const int y = classes == 2 ? (x > 0 ? 1 : 0) : static_cast<int>((x + 1.0) / 2.0 * classes);
        csv += "t" + std::to_string(i) + "," + std::to_string(i) + "," + std::to_string(x) + "," +
               std::to_string(std::min(y, classes - 1)) + "\n";
    }
    return make_db(kToySchema, {{"T", csv}});
}

SRPConfig quick(ModuleToggles toggles, std::uint64_t seed = 1) {
    SRPConfig c;
    c.toggles = toggles;
    c.seed = seed;
    c.max_epochs = 6;
    c.patience = 3;
    c.hp.batch_size = 64;
    c.hp.dropout = 0.0;
    return c;
}

const ModuleToggles kS{true, false, false};
const ModuleToggles kP{false, false, true};
const ModuleToggles kAll{true, true, true};

}  // namespace

TEST_CASE("toggle labels and parsing") {
    CHECK(ModuleToggles::parse("s,r,p") == kAll);
    CHECK(ModuleToggles::parse("S+P").label() == "S+P");
    CHECK(ModuleToggles::parse("none").label() == "none");
    CHECK_THROWS_AS(ModuleToggles::parse("x"), ConfigError);
    const auto combos = ablation_combinations();
    REQUIRE(combos.size() == 8);
    std::vector<std::string> labels;
    for (const auto& c : combos) {
        labels.push_back(c.label());
    }
    CHECK(labels == std::vector<std::string>{"none", "S", "R", "P", "S+R", "S+P", "R+P", "S+R+P"});
}

TEST_CASE("config validation and JSON round trip") {
    SRPConfig c;
    c.validate();
    c.toggles = ModuleToggles{false, false, false};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.validate(true);
    c.toggles = kAll;
    c.graph_mode = GraphMode::r2n;
    c.hp.k = 7;
    c.hp.learning_rate = 0.00123;
    c.seed = 99;
    c.task = TaskKind::multiclass;
    CHECK(config_from_json(config_to_json(c)) == c);
    CHECK_THROWS_AS(config_from_json(R"({"hyperparameters": {"nope": 1}})"), ConfigError);
}

TEST_CASE("EvalReport CSV") {
    EvalReport r;
    r.add("S", "0", "test", "auc", 0.75);
    r.add("S", "0", "valid", "auc", 0.1);
    CHECK(r.to_csv() == "combo,seed,split,metric,value\nS,0,test,auc,0.75\nS,0,valid,auc,0.1\n");
    REQUIRE(r.find("S", "0", "valid") != nullptr);
    CHECK(r.find("S", "0", "valid")->value == 0.1);
    CHECK(r.find("P", "0", "test") == nullptr);
}

TEST_CASE("output activations: sigmoid for binary, softmax rows for multiclass") {
    const Database db = separable(120, 3, 3);
    SRPConfig c = quick(kS);
    c.task = TaskKind::multiclass;
    const PreparedData data = prepare(db, c);
    CHECK(data.task.classes == std::vector<std::string>{"0", "1", "2"});
    SrpModel m(data, c);
    const nn::Tensor p = m.predict(data.split.test);
    REQUIRE(p.cols() == 3);
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (double v : p.row(i)) {
            CHECK(v > 0.0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }

    const Database bin = separable(120, 3);
    const SRPConfig cb = quick(kS);
    const PreparedData bd = prepare(bin, cb);
    SrpModel mb(bd, cb);
    const nn::Tensor pb = mb.predict(bd.split.test);
    for (double v : pb.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("separable toy target: S-only reaches train AUC 1 within 50 epochs") {
    const Database db = separable(300, 11);
    SRPConfig c = quick(kS);
    c.max_epochs = 50;
    c.patience = 50;
    c.hp.learning_rate = 1e-2;
    const TrainResult r = train(db, c);
    REQUIRE(r.report.find("S", "1", "train") != nullptr);
    CHECK(r.report.find("S", "1", "train")->value >= 0.999);
}

TEST_CASE("early stopping restores the best validation checkpoint") {
    const SynthData data = small_synthetic(3, 500);
    SRPConfig c = quick(kAll, 4);
    c.max_epochs = 8;
    c.patience = 2;
    const PreparedData prepared = prepare(data.db, c);
    SrpModel model(prepared, c);
    const TrainResult r = train_model(model, prepared);
    const double best = *std::max_element(r.valid_history.begin(), r.valid_history.end());
    CHECK(r.valid_history[r.best_epoch] == best);
    CHECK(r.report.find("S+R+P", "4", "valid")->value == best);
    CHECK(model.checkpoint() == r.checkpoint);
    CHECK(r.valid_history.size() <= c.max_epochs);
}

TEST_CASE("determinism: identical seeds give identical reports and checkpoints") {
    const SynthData data = small_synthetic(5, 400);
    const SRPConfig c = quick(kAll, 9);
    const TrainResult a = train(data.db, c);
    const TrainResult b = train(data.db, c);
    CHECK(a.report.to_csv() == b.report.to_csv());
    CHECK(a.checkpoint == b.checkpoint);
}

TEST_CASE("ablation purity: tables outside the active modules never reach the prediction") {
    SynthData data = small_synthetic(6, 400);
    SRPConfig c = quick(kS, 2);
    c.synthesis_depth = 1;  // Session is two hops away from Interaction
    const PreparedData base = prepare(data.db, c);
    CHECK_FALSE(base.graph.has_value());
    CHECK(base.dummies.empty());
    SrpModel m1(base, c);
    const nn::Tensor p1 = m1.predict(base.split.test);

    auto tables = data.db.tables();
    const std::size_t session = data.db.table_index("Session");
    for (auto& row : tables[session].rows) {
        row[3] = Value::number(row[3].as_number() * -3.0 + 1.0);
    }
    const Database mutated(data.db.schema(), std::move(tables));
    const PreparedData changed = prepare(mutated, c);
    SrpModel m2(changed, c);
    CHECK(m2.predict(changed.split.test) == p1);

    // negative control: propagation does see the session table
    SRPConfig cp = quick(kP, 2);
    const PreparedData pa = prepare(data.db, cp);
    const PreparedData pb = prepare(mutated, cp);
    SrpModel ma(pa, cp), mb(pb, cp);
    CHECK_FALSE(ma.predict(pa.split.test) == mb.predict(pb.split.test));
}

TEST_CASE("decode_task") {
    const Database db = review_db();
    const std::vector<std::size_t> train{0, 1, 2, 3, 4, 5};
    const TaskInfo t = decode_task(db, TaskKind::binary, train);
    CHECK(t.classes == std::vector<std::string>{"0", "1"});
    CHECK(t.output_width() == 1);
    CHECK(t.metric_name() == "auc");
    CHECK(t.targets.size() == 10);
    CHECK(t.targets[0] == 1.0);
    CHECK(t.targets[1] == 0.0);
}

TEST_CASE("divergence guard") {
    std::string csv = "id,ts,x,y\n";
    for (int i = 0; i < 100; ++i) {
        csv += "t" + std::to_string(i) + "," + std::to_string(i) + "," + std::to_string(i % 7) + "," +
               std::to_string(i * 3) + "\n";
    }
    std::string schema = kToySchema;
    schema.replace(schema.find("\"y\", \"kind\": \"categorical\""), 26, "\"y\", \"kind\": \"numeric\"");
    schema.replace(schema.find("binary"), 6, "regression");
    const Database db = make_db(schema, {{"T", csv}});
    SRPConfig c = quick(kS);
    c.hp.learning_rate = 1e300;
    CHECK_THROWS_AS(train(db, c), DivergenceError);
}

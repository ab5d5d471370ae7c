#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "srp/csv.hpp"
#include "srp/errors.hpp"
#include "srp/rdb.hpp"

using namespace srp;
using namespace srp::testing;

namespace {

const char* kUserReview = R"({
  "tables": [
    {"name": "User", "columns": [{"name": "id", "kind": "primary_key"}, {"name": "age", "kind": "numeric"}]},
    {"name": "Review", "timestamp_column": "ts", "columns": [
      {"name": "id", "kind": "primary_key"},
      {"name": "user_id", "kind": "foreign_key", "fk_target": {"table": "User", "column": "id"}},
      {"name": "ts", "kind": "timestamp"},
      {"name": "stars", "kind": "numeric"}]}
  ],
  "target": {"table": "Review", "column": "stars", "task": "regression"}
})";

std::string error_of(auto&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("csv reader handles quotes, embedded newlines and CRLF") {
    std::istringstream in("a,\"b,c\",\"\"\r\n\"x\"\"y\",\"line\nbreak\",\n");
    csv::Reader reader(in);
    csv::Record r;
    REQUIRE(reader.next(r));
    CHECK(r.fields == std::vector<std::string>{"a", "b,c", ""});
    CHECK(r.quoted == std::vector<bool>{false, true, true});
    REQUIRE(reader.next(r));
    CHECK(r.fields == std::vector<std::string>{"x\"y", "line\nbreak", ""});
    CHECK_FALSE(reader.next(r));
}

TEST_CASE("csv writer quotes only when needed and round-trips") {
    std::ostringstream out;
    csv::write_record(out, {"plain", "with,comma", "quote\"d", ""});
    CHECK(out.str() == "plain,\"with,comma\",\"quote\"\"d\",\n");
    std::istringstream in(out.str());
    csv::Reader reader(in);
    csv::Record r;
    REQUIRE(reader.next(r));
    CHECK(r.fields == std::vector<std::string>{"plain", "with,comma", "quote\"d", ""});
}

TEST_CASE("minimal schema parses") {
    const Schema s = parse_schema(kUserReview);
    CHECK(s.tables.size() == 2);
    CHECK(s.target.task == TaskKind::regression);
    CHECK(parse_schema(schema_to_json(s)).tables.size() == 2);
}

TEST_CASE("dangling FK and duplicate primary keys are rejected") {
    std::string bad = kUserReview;
    bad.replace(bad.find("\"table\": \"User\", \"column\""), 15, "\"table\": \"Nope\"");
    CHECK(error_of([&] { parse_schema(bad); }).find("dangling FK") != std::string::npos);
    CHECK_THROWS_AS(parse_schema(R"({"tables": [{"name": "T", "columns": [
        {"name": "a", "kind": "primary_key"}, {"name": "b", "kind": "primary_key"}]}],
        "target": {"table": "T", "column": "a"}})"),
                    ConfigError);
}

TEST_CASE("load_database counts rows, reports FK violations and coercions") {
    const std::string users = "id,age\n1,20\n2,30\n3,40\n";
    Database db = make_db(kUserReview, {{"User", users},
                                        {"Review", "id,user_id,ts,stars\na,1,1,5\nb,1,2,4\nc,2,3,3\nd,3,4,2\ne,3,5,1\n"}});
    std::size_t rows = 0;
    for (const auto& t : db.tables()) {
        rows += t.size();
    }
    CHECK(rows == 8);

    const std::string msg = error_of([&] {
        make_db(kUserReview, {{"User", users}, {"Review", "id,user_id,ts,stars\na,1,1,5\nb,1,2,4\nc,2,3,3\nd,99,4,2\n"}});
    });
    CHECK(msg.find("FK violation Review.user_id row 4") != std::string::npos);

    Database coerced = make_db(kUserReview, {{"User", "id,age\n1,abc\n"}, {"Review", "id,user_id,ts,stars\na,1,1,5\n"}});
    CHECK(coerced.report().total_coercions() == 1);
    CHECK(coerced.table("User").at(0, 1).is_missing());
}

TEST_CASE("temporal split examples") {
    auto db_with = [](const std::string& rows) {
        return make_db(kUserReview, {{"User", "id,age\n1,20\n"}, {"Review", "id,user_id,ts,stars\n" + rows}});
    };
    std::string rows;
    for (int i = 1; i <= 10; ++i) {
        rows += "r" + std::to_string(i) + ",1," + std::to_string(i) + ",1\n";
    }
    const Split s = temporal_split(db_with(rows), 0.6, 0.2);
    CHECK(s.train == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    CHECK(s.valid == std::vector<std::size_t>{6, 7});
    CHECK(s.test == std::vector<std::size_t>{8, 9});

    const Split ties = temporal_split(db_with("a,1,7,1\nb,1,7,1\nc,1,7,1\nd,1,7,1\n"), 0.5, 0.25);
    CHECK(ties.train == std::vector<std::size_t>{0, 1});
    CHECK(ties.valid == std::vector<std::size_t>{2});
    CHECK(ties.test == std::vector<std::size_t>{3});

    const Schema untimed = parse_schema(R"({"tables": [{"name": "T", "columns": [
        {"name": "id", "kind": "primary_key"}, {"name": "y", "kind": "numeric"}]}],
        "target": {"table": "T", "column": "y", "task": "regression"}})");
    Database u(untimed, {Table{untimed.tables[0], {{Value::category("a"), Value::number(1)}}}});
    CHECK_THROWS_AS(temporal_split(u, 0.6, 0.2), ConfigError);
}

TEST_CASE("property: split is a disjoint, covering, time-monotone partition") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::string rows;
        const int n = 1 + static_cast<int>(rng.below(60));
        for (int i = 0; i < n; ++i) {
            const bool missing_label = rng.bernoulli(0.1);
            rows += "r" + std::to_string(i) + ",1," + std::to_string(rng.below(20)) + "," +
                    (missing_label ? "" : "1") + "\n";
        }
        Database db = make_db(kUserReview, {{"User", "id,age\n1,20\n"}, {"Review", "id,user_id,ts,stars\n" + rows}});
        const double tf = 0.1 + 0.5 * rng.uniform();
        const double vf = 0.05 + 0.3 * rng.uniform();
        const Split s = temporal_split(db, tf, vf);
        std::vector<std::size_t> all;
        all.insert(all.end(), s.train.begin(), s.train.end());
        all.insert(all.end(), s.valid.begin(), s.valid.end());
        all.insert(all.end(), s.test.begin(), s.test.end());
        std::set<std::size_t> unique(all.begin(), all.end());
        CHECK(unique.size() == all.size());
        std::size_t labeled = 0;
        const Table& t = db.table("Review");
        for (std::size_t r = 0; r < t.size(); ++r) {
            labeled += t.at(r, 3).is_missing() ? 0 : 1;
        }
        CHECK(all.size() == labeled);
        auto ts = [&](std::size_t r) { return t.at(r, 2).as_timestamp(); };
        for (std::size_t i = 1; i < all.size(); ++i) {
            CHECK(std::make_pair(ts(all[i - 1]), 0) <= std::make_pair(ts(all[i]), 0));
        }
    }
}

TEST_CASE("property: referential integrity holds for loaded random databases") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const Database db = random_database(rng);
        for (std::size_t t = 0; t < db.tables().size(); ++t) {
            const Table& table = db.table(t);
            for (std::size_t c : table.def.foreign_keys()) {
                const Table& ref = db.table(table.def.columns[c].fk_target->table);
                std::set<std::string> keys;
                for (const auto& row : ref.rows) {
                    keys.insert(row[*ref.def.primary_key()].as_category());
                }
                for (const auto& row : table.rows) {
                    if (!row[c].is_missing()) {
                        CHECK(keys.contains(row[c].as_category()));
                    }
                }
            }
        }
    }
}

TEST_CASE("round trip: load then save yields identical CSVs") {
    const Database db = review_db();
    TempDir a, b;
    save_database(db, a.path());
    const Database again = load_database(load_schema(a.path() / "schema.json"), a.path());
    save_database(again, b.path());
    for (const auto& t : db.tables()) {
        CHECK(read_text(a.path() / (t.def.name + ".csv")) == read_text(b.path() / (t.def.name + ".csv")));
    }
    CHECK(read_text(a.path() / "schema.json") == read_text(b.path() / "schema.json"));
}

TEST_CASE("format_number round-trips doubles") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double v = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0);
        CHECK(std::stod(format_number(v)) == v);
    }
    CHECK(format_number(3.0) == "3");
}

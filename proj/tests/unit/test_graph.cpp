#include <algorithm>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "srp/graph.hpp"
#include "srp/retrieval.hpp"

using namespace srp;
using namespace srp::testing;

namespace {

const char* kStar = R"({
  "tables": [
    {"name": "User", "columns": [{"name": "id", "kind": "primary_key"}, {"name": "age", "kind": "numeric"}]},
    {"name": "Review", "columns": [
      {"name": "id", "kind": "primary_key"},
      {"name": "user_id", "kind": "foreign_key", "fk_target": {"table": "User", "column": "id"}},
      {"name": "stars", "kind": "numeric"}]}
  ],
  "target": {"table": "User", "column": "age", "task": "regression"}
})";

std::size_t forward_edges(const HeteroGraph& g) {
    std::size_t n = 0;
    for (const auto& e : g.edge_types) {
        n += e.is_reverse() ? 0 : e.edge_count();
    }
    return n;
}

std::size_t fk_cells(const Database& db) {
    std::size_t n = 0;
    for (const auto& t : db.tables()) {
        for (std::size_t c : t.def.foreign_keys()) {
            for (const auto& row : t.rows) {
                n += row[c].is_missing() ? 0 : 1;
            }
        }
    }
    return n;
}

bool is_converted(const TableDef& def) { return !def.primary_key() && def.foreign_keys().size() == 2; }

void check_transpose(const HeteroGraph& g) {
    for (std::size_t i = 0; i < g.edge_types.size(); ++i) {
        const EdgeType& e = g.edge_types[i];
        const EdgeType& r = g.edge_types[e.reverse];
        CHECK(r.reverse == i);
        CHECK(r.src_type == e.dst_type);
        CHECK(r.dst_type == e.src_type);
        std::multiset<std::pair<std::size_t, std::size_t>> fwd, back;
        for (std::size_t v = 0; v + 1 < e.offsets.size(); ++v) {
            for (auto u : e.neighbors(v)) {
                fwd.insert({v, u});
            }
        }
        for (std::size_t u = 0; u + 1 < r.offsets.size(); ++u) {
            for (auto v : r.neighbors(u)) {
                back.insert({v, u});
            }
        }
        CHECK(fwd == back);
    }
}

}  // namespace

TEST_CASE("R2N examples") {
    const Database db = make_db(kStar, {{"User", "id,age\na,1\nb,2\nc,3\n"},
                                        {"Review", "id,user_id,stars\nr1,a,1\nr2,a,2\nr3,b,3\nr4,c,4\nr5,,5\n"}});
    const HeteroGraph g = build_r2n(db);
    CHECK(g.node_count() == 8);
    CHECK(forward_edges(g) == 4);
    CHECK(g.edge_count() == 8);
    CHECK(g.edge_types.size() == 2);
    check_transpose(g);
    // no two-FK tables: R2N/E equals R2N
    const HeteroGraph e = build_r2ne(db);
    CHECK(e.node_count() == g.node_count());
    CHECK(e.edge_count() == g.edge_count());
}

TEST_CASE("dummy table becomes 6 nodes in R2N and 6 User-User edges in R2N/E") {
    const Database db = make_db(kStar, {{"User", "id,age\na,1\nb,2\nc,3\n"}, {"Review", "id,user_id,stars\n"}});
    DummyTable d;
    d.source_table = "User";
    for (std::size_t q = 0; q < 3; ++q) {
        for (std::size_t r = 0; r < 3; ++r) {
            if (q != r) {
                d.links.push_back({q, r, 1.0});
            }
        }
    }
    const std::vector<DummyTable> dummies{d};
    const Database with = with_dummy_tables(db, dummies);
    const HeteroGraph r2n = build_r2n(with);
    const auto dt = r2n.node_type_index("User__retrieval");
    REQUIRE(dt);
    CHECK(r2n.node_types[*dt].count == 6);
    CHECK(forward_edges(r2n) == 12);
    check_transpose(r2n);

    const HeteroGraph r2ne = build_r2ne(with);
    CHECK_FALSE(r2ne.node_type_index("User__retrieval").has_value());
    CHECK(r2ne.node_count() == 3);
    CHECK(forward_edges(r2ne) == 6);
    CHECK(r2ne.edge_count() == 12);
    check_transpose(r2ne);
}

TEST_CASE("table with PK and two FKs stays a node type") {
    const Database db = review_db();
    const HeteroGraph g = build_r2ne(db);
    CHECK(g.node_type_index("Review").has_value());
    CHECK(g.node_count() == build_r2n(db).node_count());
}

TEST_CASE("star sampling: cardinality, exhaustion, determinism") {
    std::string reviews = "id,user_id,stars\n";
    for (int i = 0; i < 10; ++i) {
        reviews += "r" + std::to_string(i) + ",a,1\n";
    }
    const Database db = make_db(kStar, {{"User", "id,age\na,1\n"}, {"Review", reviews}});
    const HeteroGraph g = build_r2n(db);
    const std::size_t user = *g.node_type_index("User");
    const std::vector<std::size_t> seeds{0};
    SamplerConfig cfg{1, {5}, 42, true};
    const SampledBlock b = sample_neighbors(g, user, seeds, std::nullopt, cfg);
    CHECK(b.level_size(1) == 5);
    std::set<std::uint32_t> ids;
    for (std::size_t i = b.level_offsets[1]; i < b.level_offsets[2]; ++i) {
        ids.insert(b.nodes[i].id);
    }
    CHECK(ids.size() == 5);
    CHECK(sample_neighbors(g, user, seeds, std::nullopt, cfg) == b);
    cfg.fanout = {20};
    CHECK(sample_neighbors(g, user, seeds, std::nullopt, cfg).level_size(1) == 10);
}

TEST_CASE("property: edge conservation, transpose and node reduction on random schemas") {
    Rng rng(123);
    for (int trial = 0; trial < 40; ++trial) {
        const Database db = random_database(rng);
        const HeteroGraph r2n = build_r2n(db);
        const HeteroGraph r2ne = build_r2ne(db);
        CHECK(forward_edges(r2n) == fk_cells(db));
        check_transpose(r2n);
        check_transpose(r2ne);
        std::size_t converted = 0, rows = 0;
        for (const auto& t : db.tables()) {
            rows += t.size();
            converted += is_converted(t.def) ? t.size() : 0;
        }
        CHECK(r2n.node_count() == rows);
        CHECK(r2ne.node_count() == rows - converted);
    }
}

TEST_CASE("property: sampled edges exist, levels are adjacent, temporal mask holds") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const SynthData data = small_synthetic(rng.next(), 200);
        const Database& db = data.db;
        for (GraphMode mode : {GraphMode::r2n, GraphMode::r2ne}) {
            const HeteroGraph g = build_graph(db, mode);
            const std::size_t target = *g.node_type_index(db.schema().target.table);
            const auto cut = *db.row_timestamps(db.table_index(db.schema().target.table));
            std::vector<std::size_t> seeds;
            for (int i = 0; i < 20; ++i) {
                seeds.push_back(rng.below(cut.size()));
            }
            const SamplerConfig cfg{2, {3}, rng.next(), true};
            std::vector<std::int64_t> seed_cut;
            for (std::size_t s : seeds) {
                seed_cut.push_back(cut[s]);
            }
            const SampledBlock b = sample_neighbors(g, target, seeds, std::span<const std::int64_t>(seed_cut), cfg);
            CHECK(b.layers == 2);
            for (const BlockEdge& e : b.edges) {
                const BlockNode& src = b.nodes[e.src];
                const BlockNode& dst = b.nodes[e.dst];
                CHECK(src.level == dst.level + 1);
                CHECK(src.seed == dst.seed);
                const EdgeType& et = g.edge_types[e.type];
                CHECK(et.src_type == dst.type);
                CHECK(et.dst_type == src.type);
                const auto nb = et.neighbors(dst.id);
                CHECK(std::find(nb.begin(), nb.end(), src.id) != nb.end());
            }
            for (const BlockNode& n : b.nodes) {
                if (n.level == 0) {
                    continue;
                }
                const NodeType& nt = g.node_types[n.type];
                if (!nt.timestamps) {
                    continue;
                }
                const std::int64_t t = (*nt.timestamps)[n.id];
                const std::int64_t c = seed_cut[n.seed];
                CHECK((nt.inherited_time ? t <= c : t < c));
            }
        }
    }
}

TEST_CASE("edge list dump skips reverse types") {
    const Database db = review_db();
    const HeteroGraph g = build_r2n(db);
    TempDir dir;
    write_edge_lists(g, db, dir.path());
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
        CHECK(entry.path().filename().string().find("#rev") == std::string::npos);
        ++files;
    }
    CHECK(files == 2);
    CHECK(read_text(dir.path() / "Review.user_id.csv").find("Review,r1,User,u1") != std::string::npos);
}

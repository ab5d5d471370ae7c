#include "srp/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "srp/errors.hpp"
#include "srp/random.hpp"

namespace srp {

namespace {

constexpr std::size_t kAttributes = 6;     // composite attribute columns c1..c6
constexpr std::size_t kLevels = 40;        // values per attribute
constexpr double kCopyRate = 0.75;         // chance a row copies its bucket's prototype value
constexpr std::size_t kRowsPerBucket = 10;
constexpr std::size_t kActiveBuckets = 8;  // buckets live over a window of about this many bucket spans
constexpr double kLogitScale = 4.0;
constexpr double kActivityNoise = 1.5;
constexpr double kScoreNoise = 1.5;
constexpr std::int64_t kEpoch = 1'600'000'000;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Buckets {
    std::vector<double> polarity;                              // +1 / -1, half each
    std::vector<std::array<std::size_t, kAttributes>> prototype;
};

/// Half the buckets positive, half negative, in random order; prototypes are
/// drawn independently, so a single attribute value says little about the
/// polarity of the next bucket that uses it.
Buckets make_buckets(std::size_t count, Rng& rng) {
    const std::size_t half = std::max<std::size_t>(1, count / 2);
    Buckets b;
    b.polarity.assign(2 * half, 1.0);
    for (std::size_t z = half; z < 2 * half; ++z) {
        b.polarity[z] = -1.0;
    }
    rng.shuffle(b.polarity);
    b.prototype.resize(2 * half);
    for (auto& proto : b.prototype) {
        for (std::size_t& v : proto) {
            v = rng.below(kLevels);
        }
    }
    return b;
}

/// Intercept giving a mean positive rate of `target` over the given logits.
double solve_bias(const std::vector<double>& logits, double target) {
    if (target <= 0.0 || target >= 1.0) {
        return target <= 0.0 ? -50.0 : 50.0;
    }
    double lo = -50.0, hi = 50.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        double mean = 0.0;
        for (double x : logits) {
            mean += sigmoid(x + mid);
        }
        mean /= static_cast<double>(logits.size());
        (mean < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

ColumnDef column(std::string name, ColumnKind kind, std::optional<ColumnRef> fk = std::nullopt) {
    return ColumnDef{std::move(name), kind, std::move(fk)};
}

}  // namespace

void SynthSpec::validate() const {
    if (n_users == 0 || n_items == 0 || n_interactions == 0) {
        throw ConfigError("synthetic sizes must be at least 1");
    }
    for (double v : {unary_signal_strength, composite_signal_strength, noise, class_balance}) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ConfigError("synthetic strengths, noise and class balance must lie in [0, 1]");
        }
    }
}

SynthData generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    Rng user_rng(mix64(spec.seed, 1));
    Rng item_rng(mix64(spec.seed, 2));
    Rng bucket_rng(mix64(spec.seed, 3));
    Rng row_rng(mix64(spec.seed, 4));
    Rng label_rng(mix64(spec.seed, 5));
    Rng session_rng(mix64(spec.seed, 6));

    Schema schema;
    TableDef user{"User",
                  {column("id", ColumnKind::primary_key), column("activity", ColumnKind::numeric),
                   column("region", ColumnKind::categorical)},
                  std::nullopt,
                  std::nullopt};
    TableDef item{"Item",
                  {column("id", ColumnKind::primary_key), column("price", ColumnKind::numeric),
                   column("category", ColumnKind::categorical)},
                  std::nullopt,
                  std::nullopt};
    TableDef inter{"Interaction",
                   {column("id", ColumnKind::primary_key),
                    column("user_id", ColumnKind::foreign_key, ColumnRef{"User", "id"}),
                    column("item_id", ColumnKind::foreign_key, ColumnRef{"Item", "id"}),
                    column("ts", ColumnKind::timestamp)},
                   std::string("ts"),
                   std::nullopt};
    for (std::size_t a = 0; a < kAttributes; ++a) {
        inter.columns.push_back(column("c" + std::to_string(a + 1), ColumnKind::categorical));
    }
    inter.columns.push_back(column("channel", ColumnKind::categorical));
    inter.columns.push_back(column("label", ColumnKind::categorical));
    TableDef session{"Session",
                     {column("id", ColumnKind::primary_key),
                      column("user_id", ColumnKind::foreign_key, ColumnRef{"User", "id"}),
                      column("ts", ColumnKind::timestamp), column("score", ColumnKind::numeric)},
                     std::string("ts"),
                     std::nullopt};
    schema.tables = {user, item, session, inter};
    schema.target = TargetSpec{"Interaction", "label", TaskKind::binary};

    SynthData out;
    std::vector<Table> tables(4);
    tables[0].def = user;
    tables[1].def = item;
    tables[2].def = session;
    tables[3].def = inter;

    out.unary_latent.resize(spec.n_users);
    for (std::size_t u = 0; u < spec.n_users; ++u) {
        const double a = user_rng.normal();
        out.unary_latent[u] = a;
        const double activity = a + kActivityNoise * user_rng.normal();
        tables[0].rows.push_back({Value::category("u" + std::to_string(u)), Value::number(std::round(activity * 1e4) / 1e4),
                                  Value::category("r" + std::to_string(user_rng.below(5)))});
    }
    for (std::size_t i = 0; i < spec.n_items; ++i) {
        const double price = std::round(std::exp(2.0 + 0.5 * item_rng.normal()) * 100.0) / 100.0;
        tables[1].rows.push_back({Value::category("p" + std::to_string(i)), Value::number(price),
                                  Value::category("k" + std::to_string(item_rng.below(6)))});
    }

    // Sessions spread over the whole interaction period.
    const std::int64_t span = static_cast<std::int64_t>(spec.n_interactions) * 3600;
    for (std::size_t i = 0; i < spec.n_sessions; ++i) {
        const std::size_t u = session_rng.below(spec.n_users);
        const double score = out.unary_latent[u] + kScoreNoise * session_rng.normal();
        const std::int64_t ts = kEpoch + static_cast<std::int64_t>(session_rng.below(static_cast<std::uint64_t>(span)));
        tables[2].rows.push_back({Value::category("s" + std::to_string(i)), Value::category("u" + std::to_string(u)),
                                  Value::timestamp(ts), Value::number(std::round(score * 1e4) / 1e4)});
    }
    std::stable_sort(tables[2].rows.begin(), tables[2].rows.end(),
              [](const auto& a, const auto& b) { return a[2].as_timestamp() < b[2].as_timestamp(); });
    for (std::size_t i = 0; i < tables[2].rows.size(); ++i) {
        tables[2].rows[i][0] = Value::category("s" + std::to_string(i));
    }

    const Buckets buckets = make_buckets(std::max<std::size_t>(2, spec.n_interactions / kRowsPerBucket), bucket_rng);
    std::vector<double> logits(spec.n_interactions);
    std::vector<std::size_t> users(spec.n_interactions);
    std::vector<std::array<std::size_t, kAttributes>> attrs(spec.n_interactions);
    out.composite_latent.resize(spec.n_interactions);
    for (std::size_t r = 0; r < spec.n_interactions; ++r) {
        users[r] = row_rng.below(spec.n_users);
        // Buckets are short-lived: row r draws from the few buckets active at its time.
        const std::size_t n_buckets = buckets.polarity.size();
        const std::size_t active = std::min(kActiveBuckets, n_buckets);
        const std::size_t first = r * (n_buckets - active + 1) / spec.n_interactions;
        const std::size_t z = first + row_rng.below(active);
        for (std::size_t a = 0; a < kAttributes; ++a) {
            const bool copy = row_rng.uniform() < kCopyRate;
            const std::size_t noise_value = row_rng.below(kLevels);
            attrs[r][a] = copy ? buckets.prototype[z][a] : noise_value;
        }
        const double c = buckets.polarity[z];
        out.composite_latent[r] = c;
        logits[r] = kLogitScale * (spec.unary_signal_strength * out.unary_latent[users[r]] +
                                   spec.composite_signal_strength * c);
    }
    const double bias = solve_bias(logits, spec.class_balance);

    out.probability.resize(spec.n_interactions);
    for (std::size_t r = 0; r < spec.n_interactions; ++r) {
        const double p = sigmoid(logits[r] + bias);
        out.probability[r] = (1.0 - spec.noise) * p + spec.noise * spec.class_balance;
        // Fixed draw order keeps rows coupled across strengths and noise rates.
        const double u_label = label_rng.uniform();
        const double u_noise = label_rng.uniform();
        const double u_coin = label_rng.uniform();
        const bool y = u_noise < spec.noise ? u_coin < spec.class_balance : u_label < p;
        const std::int64_t ts = kEpoch + static_cast<std::int64_t>(r) * 3600 +
                                static_cast<std::int64_t>(row_rng.below(1800));
        std::vector<Value> row{Value::category("i" + std::to_string(r)),
                               Value::category("u" + std::to_string(users[r])),
                               Value::category("p" + std::to_string(row_rng.below(spec.n_items))),
                               Value::timestamp(ts)};
        for (std::size_t a = 0; a < kAttributes; ++a) {
            row.push_back(Value::category("v" + std::to_string(attrs[r][a])));
        }
        row.push_back(Value::category("ch" + std::to_string(row_rng.below(3))));
        row.push_back(Value::category(y ? "1" : "0"));
        tables[3].rows.push_back(std::move(row));
    }
    out.db = Database(std::move(schema), std::move(tables));
    return out;
}

void generate_to_disk(const SynthSpec& spec, const std::filesystem::path& dir) {
    save_database(generate_synthetic(spec).db, dir);
}

}  // namespace srp

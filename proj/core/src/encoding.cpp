#include "srp/encoding.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "srp/errors.hpp"
#include "srp/hash.hpp"

namespace srp {

std::string_view to_string(EncoderKind kind) {
    switch (kind) {
        case EncoderKind::numeric_affine:
            return "numeric_affine";
        case EncoderKind::one_hot:
            return "one_hot";
        case EncoderKind::fa_weighted:
            return "fa_weighted";
        case EncoderKind::text_vector:
            return "text_vector";
    }
    return "?";
}

EncoderKind parse_encoder_kind(std::string_view name) {
    for (auto k : {EncoderKind::numeric_affine, EncoderKind::one_hot, EncoderKind::fa_weighted,
                   EncoderKind::text_vector}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ConfigError("unknown encoder kind: " + std::string(name));
}

// --- Word vectors -----------------------------------------------------------------

WordVectors WordVectors::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open word-vector file " + path.string());
    }
    return parse(in);
}

WordVectors WordVectors::parse(std::istream& in) {
    WordVectors wv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string token;
        if (!(ls >> token)) {
            continue;
        }
        std::vector<double> v;
        std::string cell;
        while (ls >> cell) {
            double x = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
            if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(x)) {
                throw DataError("malformed word-vector file: bad number on line " + std::to_string(line_no));
            }
            v.push_back(x);
        }
        if (v.empty() || (wv.dim_ != 0 && v.size() != wv.dim_)) {
            throw DataError("malformed word-vector file: inconsistent width on line " + std::to_string(line_no));
        }
        wv.add(std::move(token), std::move(v));
    }
    return wv;
}

const std::vector<double>* WordVectors::find(const std::string& token) const {
    auto it = vectors_.find(token);
    return it == vectors_.end() ? nullptr : &it->second;
}

void WordVectors::add(std::string token, std::vector<double> v) {
    if (dim_ == 0) {
        dim_ = v.size();
    } else if (v.size() != dim_) {
        throw DataError("word vector width mismatch for " + token);
    }
    vectors_[std::move(token)] = std::move(v);
}

// --- Specs --------------------------------------------------------------------------

std::size_t ColumnEncoderSpec::lookup(const std::string& category) const {
    auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), category);
    if (it != vocabulary.end() && *it == category) {
        return static_cast<std::size_t>(it - vocabulary.begin());
    }
    return vocabulary.size();
}

namespace {

std::vector<std::string> top_vocabulary(const std::map<std::string, std::int64_t>& counts, std::size_t cap) {
    std::vector<std::pair<std::string, std::int64_t>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (items.size() > cap) {
        items.resize(cap);
    }
    std::vector<std::string> vocab;
    for (auto& [k, _] : items) {
        vocab.push_back(k);
    }
    std::sort(vocab.begin(), vocab.end());
    return vocab;
}

std::string category_of(const Value& v) { return v.is_number() ? format_number(v.as_number()) : v.as_string(); }

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

}  // namespace

std::vector<ColumnEncoderSpec> fit_encoders(const FeatureTable& table, std::span<const std::size_t> train_rows,
                                            const EncoderConfig& config) {
    if (train_rows.empty()) {
        throw ConfigError("encoders need a nonempty training split");
    }
    std::vector<ColumnEncoderSpec> specs;
    for (const FeatureColumn& col : table.columns) {
        ColumnEncoderSpec spec;
        spec.tag = col.tag;
        spec.m = config.m;
        switch (col.kind) {
            case FeatureKind::numeric: {
                spec.kind = EncoderKind::numeric_affine;
                double sum = 0.0;
                std::size_t n = 0;
                for (std::size_t r : train_rows) {
                    if (col.values[r].is_number()) {
                        sum += col.values[r].as_number();
                        ++n;
                    }
                }
                spec.mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
                double ss = 0.0;
                for (std::size_t r : train_rows) {
                    if (col.values[r].is_number()) {
                        const double d = col.values[r].as_number() - spec.mean;
                        ss += d * d;
                    }
                }
                spec.stddev = n > 0 ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
                if (!(spec.stddev > 0.0)) {
                    spec.stddev = 1.0;
                }
                spec.width = 2;
                break;
            }
            case FeatureKind::categorical: {
                spec.kind = EncoderKind::one_hot;
                std::map<std::string, std::int64_t> counts;
                for (std::size_t r : train_rows) {
                    if (!col.values[r].is_missing()) {
                        counts[category_of(col.values[r])] += 1;
                    }
                }
                spec.vocabulary = top_vocabulary(counts, config.max_vocabulary);
                spec.width = spec.vocabulary.size() + 1;
                break;
            }
            case FeatureKind::frequency: {
                spec.kind = EncoderKind::fa_weighted;
                std::map<std::string, std::int64_t> counts;
                for (std::size_t r : train_rows) {
                    if (col.frequencies[r]) {
                        for (const auto& [k, c] : *col.frequencies[r]) {
                            counts[k] += c;
                        }
                    }
                }
                spec.vocabulary = top_vocabulary(counts, config.max_vocabulary);
                spec.width = spec.vocabulary.size() + 1;
                break;
            }
            case FeatureKind::text:
                spec.kind = EncoderKind::text_vector;
                spec.width = config.vectors != nullptr ? config.vectors->dim() : config.text_dim;
                break;
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

std::vector<double> encode_fa(const std::optional<FrequencyMap>& freq, const ColumnEncoderSpec& spec, std::size_t m) {
    std::vector<double> out(spec.width, 0.0);
    if (!freq || freq->empty() || m == 0) {
        return out;
    }
    std::vector<std::pair<std::string, std::int64_t>> items(freq->begin(), freq->end());
    // Entries arrive in lexicographic order; a stable sort on count keeps the
    // lexicographically smaller category first among ties.
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (items.size() > m) {
        items.resize(m);
    }
    std::int64_t total = 0;
    for (const auto& [_, c] : items) {
        total += c;
    }
    if (total <= 0) {
        return out;
    }
    for (const auto& [k, c] : items) {
        out[spec.lookup(k)] += static_cast<double>(c) / static_cast<double>(total);
    }
    return out;
}

std::vector<double> encode_text(std::string_view text, const ColumnEncoderSpec& spec, const WordVectors* vectors) {
    std::vector<double> out(spec.width, 0.0);
    const auto tokens = tokenize(text);
    if (tokens.empty() || spec.width == 0) {
        return out;
    }
    if (vectors != nullptr) {
        std::size_t hits = 0;
        for (const auto& t : tokens) {
            if (const auto* v = vectors->find(t)) {
                for (std::size_t i = 0; i < out.size() && i < v->size(); ++i) {
                    out[i] += (*v)[i];
                }
                ++hits;
            }
        }
        if (hits > 0) {
            for (double& x : out) {
                x /= static_cast<double>(hits);
            }
        }
        return out;
    }
    for (const auto& t : tokens) {
        const std::uint64_t h = Fnv1a().update(t).digest();
        const double sign = ((h >> 63) & 1U) != 0U ? -1.0 : 1.0;
        out[h % spec.width] += sign;
    }
    double norm = 0.0;
    for (double x : out) {
        norm += x * x;
    }
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : out) {
            x /= norm;
        }
    }
    return out;
}

std::size_t encoded_width(std::span<const ColumnEncoderSpec> specs) {
    std::size_t w = 0;
    for (const auto& s : specs) {
        w += s.width;
    }
    return w;
}

nn::Tensor encode_rows(const FeatureTable& table, std::span<const ColumnEncoderSpec> specs, const WordVectors* vectors,
                       std::optional<std::span<const std::size_t>> rows) {
    if (specs.size() != table.columns.size()) {
        throw ConfigError("encoder count does not match the feature table");
    }
    const std::size_t n = rows ? rows->size() : table.rows;
    const std::size_t width = encoded_width(specs);
    nn::Tensor out(n, width);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = rows ? (*rows)[i] : i;
        auto dst = out.row(i);
        std::size_t offset = 0;
        for (std::size_t c = 0; c < specs.size(); ++c) {
            const ColumnEncoderSpec& spec = specs[c];
            const FeatureColumn& col = table.columns[c];
            switch (spec.kind) {
                case EncoderKind::numeric_affine:
                    if (col.values[r].is_number()) {
                        dst[offset] = (col.values[r].as_number() - spec.mean) / spec.stddev;
                    } else {
                        dst[offset + 1] = 1.0;
                    }
                    break;
                case EncoderKind::one_hot:
                    if (!col.values[r].is_missing()) {
                        dst[offset + spec.lookup(category_of(col.values[r]))] = 1.0;
                    }
                    break;
                case EncoderKind::fa_weighted: {
                    const auto v = encode_fa(col.frequencies[r], spec, spec.m);
                    std::copy(v.begin(), v.end(), dst.begin() + offset);
                    break;
                }
                case EncoderKind::text_vector:
                    if (!col.values[r].is_missing()) {
                        const auto v = encode_text(col.values[r].as_string(), spec, vectors);
                        std::copy(v.begin(), v.end(), dst.begin() + offset);
                    }
                    break;
            }
            offset += spec.width;
        }
        if (offset != width) {
            throw ConfigError("encoded width mismatch");
        }
    }
    return out;
}

std::string encoders_to_json(std::span<const ColumnEncoderSpec> specs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : specs) {
        arr.push_back({{"column", s.tag.header()},
                       {"kind", std::string(to_string(s.kind))},
                       {"vocabulary", s.vocabulary},
                       {"width", s.width},
                       {"m", s.m},
                       {"mean", s.mean},
                       {"stddev", s.stddev}});
    }
    return arr.dump(2) + "\n";
}

std::vector<ColumnEncoderSpec> encoders_from_json(std::string_view text) {
    std::vector<ColumnEncoderSpec> specs;
    try {
        const auto arr = nlohmann::json::parse(text);
        for (const auto& j : arr) {
            ColumnEncoderSpec s;
            s.tag = FeatureTag::parse_header(j.at("column").get<std::string>());
            s.kind = parse_encoder_kind(j.at("kind").get<std::string>());
            s.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
            s.width = j.at("width").get<std::size_t>();
            s.m = j.at("m").get<std::size_t>();
            s.mean = j.at("mean").get<double>();
            s.stddev = j.at("stddev").get<double>();
            specs.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad encoder spec file: ") + e.what());
    }
    return specs;
}

}  // namespace srp

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "srp/nn.hpp"
#include "srp/synthesis.hpp"

namespace srp {

enum class EncoderKind { numeric_affine, one_hot, fa_weighted, text_vector };

std::string_view to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view name);

/// Pretrained token vectors read from `token v1 ... vd` lines.
class WordVectors {
  public:
    WordVectors() = default;
    static WordVectors load(const std::filesystem::path& path);
    static WordVectors parse(std::istream& in);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }
    const std::vector<double>* find(const std::string& token) const;
    void add(std::string token, std::vector<double> v);

  private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<double>> vectors_;
};

struct ColumnEncoderSpec {
    FeatureTag tag;
    EncoderKind kind = EncoderKind::numeric_affine;
    std::vector<std::string> vocabulary;  // sorted; index vocabulary.size() is OOV
    std::size_t width = 0;
    std::size_t m = 2;
    double mean = 0.0;
    double stddev = 1.0;

    /// Vocabulary index of a category, OOV slot when unseen.
    std::size_t lookup(const std::string& category) const;
};

struct EncoderConfig {
    std::size_t max_vocabulary = 64;
    std::size_t m = 2;
    std::size_t text_dim = 16;
    const WordVectors* vectors = nullptr;
};

/// Fits one spec per column of `table` using the rows in `train_rows` only.
/// Numeric: z-score (std 0 -> 1) plus a missing-indicator slot. Categorical and
/// FA: the `max_vocabulary` most frequent training categories (ties
/// lexicographic) plus OOV.
std::vector<ColumnEncoderSpec> fit_encoders(const FeatureTable& table, std::span<const std::size_t> train_rows,
                                            const EncoderConfig& config);

/// Frequency-weighted one-hot: the m most frequent categories (ties lexicographic)
/// weighted by their share of the retained counts. Missing -> zeros.
std::vector<double> encode_fa(const std::optional<FrequencyMap>& freq, const ColumnEncoderSpec& spec, std::size_t m);

/// Mean of pretrained token vectors when `vectors` is given, otherwise an
/// L2-normalized signed hashed bag of words. Lowercased whitespace tokens.
std::vector<double> encode_text(std::string_view text, const ColumnEncoderSpec& spec, const WordVectors* vectors);

std::size_t encoded_width(std::span<const ColumnEncoderSpec> specs);

/// Row-wise concatenation of every column encoding, in column order. With
/// `rows`, only those rows are encoded (in that order).
nn::Tensor encode_rows(const FeatureTable& table, std::span<const ColumnEncoderSpec> specs,
                       const WordVectors* vectors = nullptr,
                       std::optional<std::span<const std::size_t>> rows = std::nullopt);

std::string encoders_to_json(std::span<const ColumnEncoderSpec> specs);
std::vector<ColumnEncoderSpec> encoders_from_json(std::string_view text);

}  // namespace srp

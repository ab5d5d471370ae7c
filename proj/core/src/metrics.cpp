#include "srp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "srp/errors.hpp"

namespace srp {

double auc(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) {
        throw ConfigError("scores and labels differ in length");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of positive ranks, in half-units so that averaged ranks stay integral.
    std::uint64_t positives = 0;
    std::uint64_t twice_rank_sum = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        std::uint64_t pos_in_group = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            pos_in_group += labels[order[j]] > 0.5 ? 1 : 0;
            ++j;
        }
        // Ranks i+1..j average to (i+1+j)/2.
        twice_rank_sum += pos_in_group * static_cast<std::uint64_t>(i + 1 + j);
        positives += pos_in_group;
        i = j;
    }
    const std::uint64_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw DataError("AUC undefined");
    }
    // U = R+ - P(P+1)/2; both terms doubled.
    const std::uint64_t twice_u = twice_rank_sum - positives * (positives + 1);
    return static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels) {
    if (predicted.size() != labels.size() || labels.empty()) {
        throw ConfigError("accuracy needs equal, nonempty prediction and label lists");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        hits += predicted[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double rmse(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size() || targets.empty()) {
        throw ConfigError("rmse needs equal, nonempty prediction and target lists");
    }
    double ss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double d = predictions[i] - targets[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(targets.size()));
}

}  // namespace srp

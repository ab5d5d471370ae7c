#pragma once

#include <cstddef>
#include <span>

namespace srp {

/// ROC AUC via the Mann-Whitney rank statistic; tied scores share their
/// average rank. Labels are 0/1. Throws DataError("AUC undefined") when only
/// one class is present.
double auc(std::span<const double> scores, std::span<const double> labels);

/// Fraction of rows whose predicted class equals the label.
double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels);

double rmse(std::span<const double> predictions, std::span<const double> targets);

}  // namespace srp

#pragma once

#include <vector>

#include "mcmult/common.hpp"

namespace mcmult {

struct MetricsReport {
  double acc7 = 0.0;
  double acc2 = 0.0;
  double f1 = 0.0;
  double mae = 0.0;
  double corr = 0.0;
};

/// Class index to sentiment score: evenly spaced over [-3,3], so with seven
/// classes index c maps to c-3.
double class_to_score(int cls, int num_classes);

/// Nearest integer sentiment bucket of a score, clamped to [-3,3], rounding
/// half away from zero.
int score_to_bucket(double score);

/// Scores are compared as: seven-bucket accuracy, sign accuracy (zero counts
/// positive), binary F1 on the positive class, mean absolute error, and
/// Pearson correlation (0 when either side has zero variance).
MetricsReport compute_metrics(const std::vector<double>& predicted,
                              const std::vector<double>& target);

}  // namespace mcmult

#include "mcmult/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace mcmult {

double class_to_score(int cls, int num_classes) {
  if (num_classes < 2) throw ContractError("need at least two classes");
  if (cls < 0 || cls >= num_classes) {
    throw ContractError("class index out of range");
  }
  return -3.0 + 6.0 * cls / (num_classes - 1);
}

int score_to_bucket(double score) {
  const double clamped = std::clamp(score, -3.0, 3.0);
  return static_cast<int>(clamped < 0.0 ? -std::floor(-clamped + 0.5)
                                        : std::floor(clamped + 0.5));
}

MetricsReport compute_metrics(const std::vector<double>& predicted,
                              const std::vector<double>& target) {
  if (predicted.empty() || predicted.size() != target.size()) {
    throw ContractError("metrics need equally sized, nonempty score lists");
  }
  const std::size_t n = predicted.size();
  MetricsReport r;
  std::size_t hits7 = 0, hits2 = 0, tp = 0, fp = 0, fn = 0;
  double abs_err = 0.0;
  double mean_p = 0.0, mean_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (score_to_bucket(predicted[i]) == score_to_bucket(target[i])) ++hits7;
    const bool pos_p = predicted[i] >= 0.0;
    const bool pos_t = target[i] >= 0.0;
    if (pos_p == pos_t) ++hits2;
    if (pos_p && pos_t) ++tp;
    if (pos_p && !pos_t) ++fp;
    if (!pos_p && pos_t) ++fn;
    abs_err += std::abs(predicted[i] - target[i]);
    mean_p += predicted[i];
    mean_t += target[i];
  }
  mean_p /= n;
  mean_t /= n;
  r.acc7 = static_cast<double>(hits7) / n;
  r.acc2 = static_cast<double>(hits2) / n;
  const double denom_f1 = 2.0 * tp + fp + fn;
  r.f1 = denom_f1 > 0.0 ? 2.0 * tp / denom_f1 : 0.0;
  r.mae = abs_err / n;
  double cov = 0.0, var_p = 0.0, var_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = predicted[i] - mean_p;
    const double dt = target[i] - mean_t;
    cov += dp * dt;
    var_p += dp * dp;
    var_t += dt * dt;
  }
  if (var_p > 0.0 && var_t > 0.0) {
    r.corr = std::clamp(cov / std::sqrt(var_p * var_t), -1.0, 1.0);
  }
  return r;
}

}  // namespace mcmult

#pragma once

#include <filesystem>

#include "mcmult/dataset.hpp"
#include "mcmult/metrics.hpp"
#include "mcmult/model.hpp"

namespace mcmult {

enum class LossKind { CrossEntropy, L1Regression };

std::string loss_name(LossKind k);
LossKind loss_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double clip_norm = 0.8;
  LossKind loss = LossKind::CrossEntropy;
  std::uint64_t seed = 42;
  // Stop after this many epochs without a validation-acc2 improvement;
  // 0 trains the full epoch budget.
  int patience = 0;

  void validate() const;
};

struct EpochStats {
  double train_loss = 0.0;
  MetricsReport valid;
  double wall_seconds = 0.0;
};

struct RunHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  bool early_stopped = false;
};

/// Loss of one sample: cross entropy over logits or L1 against the score.
Var sample_loss(Model& model, Tape& tape, const ModelInput& in,
                const Label& label, LossKind kind, bool training);

/// Epoch loop: shuffle, pad, accumulate per-batch gradients, clip to the
/// global-norm budget, Adam update. Keeps and restores the parameters of the
/// best validation epoch. Throws CheckError on a non-finite loss.
RunHistory train(Model& model, const std::vector<MultimodalSample>& train_set,
                 const std::vector<MultimodalSample>& valid_set,
                 const TrainConfig& cfg);

/// Deterministic eval-mode metrics over per-sample predictions.
MetricsReport evaluate(Model& model,
                       const std::vector<MultimodalSample>& samples);

/// Max relative error between tape gradients of the full loss and central
/// finite differences over every parameter coordinate.
double model_gradient_check(Model& model, const ModelInput& in,
                            const Label& label, LossKind kind,
                            double eps = 1e-4);

void write_history_csv(const std::filesystem::path& file,
                       const RunHistory& history);

}  // namespace mcmult

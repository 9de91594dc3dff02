#pragma once

#include <filesystem>

#include "mcmult/train.hpp"

namespace mcmult {

enum class AblationAxis { Variants, Branches, BlockLayerGrid, Depth };

std::string axis_name(AblationAxis axis);
AblationAxis axis_from_name(const std::string& name);

struct AblationArm {
  std::string name;
  ModelConfig model;
};

/// Arms for one axis, derived from the base configuration:
///   variants — the five connectivity variants at the base depth;
///   branches — three unimodal, three single-target, and the full model;
///   bl       — block counts 1..5 and per-block layer counts 1..4;
///   depth    — flat single-scale stacks of depth 5, 7, 10 and 12.
std::vector<AblationArm> ablation_arms(const ModelConfig& base,
                                       AblationAxis axis);

struct AblationResult {
  std::string arm;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  MetricsReport metrics;
  std::size_t param_count = 0;
  double wall_seconds = 0.0;
};

/// Trains and evaluates each arm on the same split for every seed. A failing
/// arm is recorded and the run continues. Arms are independent model
/// instances, so `jobs` > 1 trains them in parallel.
std::vector<AblationResult> ablation_run(const ModelConfig& base,
                                         const TrainConfig& trainer,
                                         AblationAxis axis,
                                         const std::vector<std::uint64_t>& seeds,
                                         const DatasetSplit& data,
                                         int jobs = 1);

void write_ablation_csv(const std::filesystem::path& file,
                        const std::vector<AblationResult>& results);

}  // namespace mcmult

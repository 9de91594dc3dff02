#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcmult/ablate.hpp"
#include "mcmult/dataset.hpp"
#include "mcmult/train.hpp"

namespace mcmult {

/// Everything one command run needs, merged from defaults, an optional flat
/// key=value config file, and command-line overrides (flags win over file,
/// file wins over defaults). Unknown keys are rejected by name.
struct RunConfig {
  ModelConfig model;
  TrainConfig trainer;
  SyntheticSpec synth;
  SplitRatios ratios;
  std::uint64_t seed = 42;

  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> params_file;

  AblationAxis axis = AblationAxis::Variants;
  int jobs = 1;
  std::vector<std::uint64_t> ablate_seeds;  // empty -> {seed}

  BranchId export_branch{Modality::Vision, Modality::Text};
  int block_index = 1;
  int head_index = 0;
  int scale_index = 0;
  int sample_index = 0;

  /// Applies one key=value pair; throws ConfigError naming unknown keys and
  /// unparsable values.
  void apply(const std::string& key, const std::string& value);

  /// Full resolved key=value listing, suitable for echoing into output dirs.
  std::vector<std::pair<std::string, std::string>> resolved() const;

  void validate() const;

  static RunConfig load(
      const std::optional<std::filesystem::path>& file,
      const std::vector<std::pair<std::string, std::string>>& overrides);
};

}  // namespace mcmult

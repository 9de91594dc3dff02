#pragma once

#include <filesystem>

#include "mcmult/dataset.hpp"
#include "mcmult/model.hpp"

namespace mcmult {

struct AttentionExportRequest {
  BranchId branch{Modality::Vision, Modality::Text};
  int block = 1;   // 1-based; resolved to the block's leading layer
  int head = 0;
  int scale = 0;   // which source scale's weight matrix to export
};

struct AttentionExportResult {
  Matrix weights;  // T_target x T_source, rows sum to 1
  std::filesystem::path csv;
  std::filesystem::path meta;
};

/// Runs an eval-mode forward on one sample and writes the selected
/// attention-weight matrix as CSV next to a key=value sidecar.
AttentionExportResult export_attention(Model& model,
                                       const MultimodalSample& sample,
                                       const AttentionExportRequest& req,
                                       const std::filesystem::path& out_dir,
                                       const std::string& stem = "attention");

}  // namespace mcmult

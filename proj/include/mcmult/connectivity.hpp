#pragma once

#include <vector>

#include "mcmult/config.hpp"

namespace mcmult {

/// One layer slot in a branch schedule. `sources` index the sibling branch's
/// output list, where 0 is the sibling's embedding (the source modality's
/// low-level feature) and i is the output of the sibling's layer slot i-1.
/// Slot t produces output t+1 and may only reference sibling outputs <= t,
/// which makes a level-synchronous round schedule valid by construction.
struct LayerPlan {
  int block = 1;               // 1-based owning block
  bool multiscale = false;     // carries a scale aggregator
  std::vector<int> sources;    // sibling output indices feeding K/V
};

/// Per-branch layer schedule for one variant. Identical for every branch of
/// a model, so one instance describes the whole graph.
struct ConnectivityGraph {
  std::vector<LayerPlan> layers;
  std::vector<int> block_output;  // block b -> output index of its last layer

  int depth() const { return static_cast<int>(layers.size()); }
  int num_blocks() const { return static_cast<int>(block_output.size()) - 1; }
  /// Slot of the block's leading (multi-scale) layer.
  int block_head_slot(int block) const;
  /// True when some layer reads sibling outputs beyond the embedding.
  bool reads_sibling_layers() const;
};

ConnectivityGraph build_connectivity(const ModelConfig& cfg);

}  // namespace mcmult

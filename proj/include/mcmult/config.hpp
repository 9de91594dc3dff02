#pragma once

#include <array>
#include <string>
#include <vector>

#include "mcmult/common.hpp"

namespace mcmult {

/// The three input streams, in fixed total order.
enum class Modality : int { Text = 0, Vision = 1, Audio = 2 };

constexpr std::array<Modality, 3> kModalities = {
    Modality::Text, Modality::Vision, Modality::Audio};

inline int index_of(Modality m) { return static_cast<int>(m); }
char modality_letter(Modality m);
Modality modality_from_letter(char c);

enum class Variant { MCMulT, Dense, LocalDense, Global, MulT };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

/// A directed crossmodal stream: source supplies keys/values, target keeps
/// its time base. source == target denotes a unimodal self-attention stack.
struct BranchId {
  Modality source;
  Modality target;

  bool self() const { return source == target; }
  BranchId sibling() const { return BranchId{target, source}; }
  bool operator<(const BranchId& o) const {
    if (target != o.target) return index_of(target) < index_of(o.target);
    return index_of(source) < index_of(o.source);
  }
  bool operator==(const BranchId& o) const {
    return source == o.source && target == o.target;
  }
};

std::string branch_name(const BranchId& b);         // e.g. "V->L"
BranchId branch_from_name(const std::string& name); // accepts "V->L" or "L"

/// All six directed crossmodal pairs, target-major order.
std::vector<BranchId> all_branches();

struct ModelConfig {
  int dim = 8;               // common feature dimension d
  int heads = 2;             // attention heads, must divide dim
  int blocks = 4;            // B
  int layers_per_block = 3;  // L, single-source layers after each block head
  Variant variant = Variant::MCMulT;
  std::array<int, 3> conv_kernel = {3, 3, 3};  // per modality, odd
  std::array<int, 3> input_dim = {8, 6, 5};    // raw feature dims per modality
  double attn_dropout = 0.2;
  double fc_dropout = 0.1;
  std::vector<BranchId> branches = all_branches();  // streams fed to prediction
  int num_classes = 2;
  int prediction_layers = 1;
  bool regression_head = false;  // 1 score output instead of C logits

  int head_dim() const { return dim / heads; }
  int depth() const { return blocks * (1 + layers_per_block); }

  /// Branches actually built: the configured ones plus, for variants whose
  /// layers read sibling scales above 0, each branch's reverse stream.
  std::vector<BranchId> instantiated_branches() const;
  /// Targets of the configured branches, in modality order.
  std::vector<Modality> targets() const;
  /// Modalities touched by any instantiated branch.
  std::vector<Modality> used_modalities() const;
  bool unimodal() const;

  void validate() const;  // throws ConfigError
};

}  // namespace mcmult

#include "mcmult/connectivity.hpp"

#include <algorithm>
#include <set>

namespace mcmult {

char modality_letter(Modality m) {
  switch (m) {
    case Modality::Text: return 'L';
    case Modality::Vision: return 'V';
    case Modality::Audio: return 'A';
  }
  throw ContractError("bad modality value");
}

Modality modality_from_letter(char c) {
  switch (c) {
    case 'L': case 'l': case 'T': case 't': return Modality::Text;
    case 'V': case 'v': return Modality::Vision;
    case 'A': case 'a': return Modality::Audio;
    default:
      throw ConfigError(std::string("unknown modality letter: ") + c);
  }
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::MCMulT: return "mcmult";
    case Variant::Dense: return "dense";
    case Variant::LocalDense: return "local_dense";
    case Variant::Global: return "global";
    case Variant::MulT: return "mult";
  }
  throw ContractError("bad variant value");
}

Variant variant_from_name(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (c == '-') c = '_';
    s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (s == "mcmult") return Variant::MCMulT;
  if (s == "dense" || s == "mcmult_dense") return Variant::Dense;
  if (s == "local_dense" || s == "localdense" || s == "mcmult_localdense")
    return Variant::LocalDense;
  if (s == "global" || s == "mcmult_global") return Variant::Global;
  if (s == "mult") return Variant::MulT;
  throw ConfigError("unknown variant: " + name);
}

std::string branch_name(const BranchId& b) {
  if (b.self()) return std::string(1, modality_letter(b.source));
  return std::string(1, modality_letter(b.source)) + "->" +
         modality_letter(b.target);
}

BranchId branch_from_name(const std::string& name) {
  if (name.size() == 1) {
    Modality m = modality_from_letter(name[0]);
    return BranchId{m, m};
  }
  auto arrow = name.find("->");
  if (arrow == std::string::npos || arrow + 2 >= name.size() || arrow != 1) {
    throw ConfigError("bad branch name: '" + name +
                      "' (expected e.g. V->L, or a single letter)");
  }
  return BranchId{modality_from_letter(name[0]),
                  modality_from_letter(name[arrow + 2])};
}

std::vector<BranchId> all_branches() {
  std::vector<BranchId> out;
  for (Modality target : kModalities) {
    for (Modality source : kModalities) {
      if (source != target) out.push_back(BranchId{source, target});
    }
  }
  return out;
}

std::vector<BranchId> ModelConfig::instantiated_branches() const {
  std::set<BranchId> set(branches.begin(), branches.end());
  if (build_connectivity(*this).reads_sibling_layers()) {
    for (const auto& b : branches) set.insert(b.sibling());
  }
  return {set.begin(), set.end()};
}

std::vector<Modality> ModelConfig::targets() const {
  std::set<int> seen;
  for (const auto& b : branches) seen.insert(index_of(b.target));
  std::vector<Modality> out;
  for (int i : seen) out.push_back(static_cast<Modality>(i));
  return out;
}

std::vector<Modality> ModelConfig::used_modalities() const {
  std::set<int> seen;
  for (const auto& b : instantiated_branches()) {
    seen.insert(index_of(b.source));
    seen.insert(index_of(b.target));
  }
  std::vector<Modality> out;
  for (int i : seen) out.push_back(static_cast<Modality>(i));
  return out;
}

bool ModelConfig::unimodal() const {
  return branches.size() == 1 && branches[0].self();
}

void ModelConfig::validate() const {
  if (dim <= 0) throw ConfigError("dim must be positive");
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("heads must divide dim (dim=" + std::to_string(dim) +
                      ", heads=" + std::to_string(heads) + ")");
  }
  if (dim % 2 != 0) {
    throw ConfigError("dim must be even for the sinusoidal position table");
  }
  if (blocks < 1) throw ConfigError("blocks must be >= 1");
  if (layers_per_block < 0) throw ConfigError("layers must be >= 0");
  for (int i = 0; i < 3; ++i) {
    if (conv_kernel[i] <= 0 || conv_kernel[i] % 2 == 0) {
      throw ConfigError("conv kernel for " +
                        std::string(1, modality_letter(kModalities[i])) +
                        " must be odd and positive");
    }
    if (input_dim[i] <= 0) throw ConfigError("input dims must be positive");
  }
  if (attn_dropout < 0.0 || attn_dropout >= 1.0 || fc_dropout < 0.0 ||
      fc_dropout >= 1.0) {
    throw ConfigError("dropout rates must be in [0,1)");
  }
  if (branches.empty()) throw ConfigError("at least one branch is required");
  bool any_self = false, any_cross = false;
  std::set<BranchId> seen;
  for (const auto& b : branches) {
    if (!seen.insert(b).second) {
      throw ConfigError("branch listed twice: " + branch_name(b));
    }
    (b.self() ? any_self : any_cross) = true;
  }
  if (any_self && (any_cross || branches.size() > 1)) {
    throw ConfigError(
        "a unimodal branch must be the only branch in the model");
  }
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (prediction_layers < 1) {
    throw ConfigError("prediction_layers must be >= 1");
  }
}

int ConnectivityGraph::block_head_slot(int block) const {
  if (block < 1 || block > num_blocks()) {
    throw ContractError("block index out of range: " + std::to_string(block));
  }
  // Slot t produces output t+1, so the slot following the previous block's
  // output is this block's head.
  return block_output[block - 1];
}

bool ConnectivityGraph::reads_sibling_layers() const {
  for (const auto& l : layers) {
    for (int s : l.sources) {
      if (s > 0) return true;
    }
  }
  return false;
}

namespace {

void check_schedule(const ConnectivityGraph& g) {
  for (int slot = 0; slot < g.depth(); ++slot) {
    if (g.layers[slot].sources.empty()) {
      throw ContractError("layer slot with no sources");
    }
    for (int s : g.layers[slot].sources) {
      if (s < 0 || s > slot) {
        throw ContractError("connectivity references a later output");
      }
    }
  }
}

}  // namespace

ConnectivityGraph build_connectivity(const ModelConfig& cfg) {
  const int B = cfg.blocks;
  const int L = cfg.layers_per_block;
  const int group = 1 + L;
  ConnectivityGraph g;
  g.block_output.push_back(0);

  if (cfg.unimodal()) {
    // Plain self-attention stack at the same total depth; each slot attends
    // its own previous output (the sibling of a self branch is itself).
    for (int t = 0; t < B * group; ++t) {
      g.layers.push_back(LayerPlan{t / group + 1, false, {t}});
      if ((t + 1) % group == 0) g.block_output.push_back(t + 1);
    }
    check_schedule(g);
    return g;
  }

  switch (cfg.variant) {
    case Variant::MCMulT:
      for (int b = 1; b <= B; ++b) {
        LayerPlan head{b, true, {}};
        for (int j = 0; j < b; ++j) head.sources.push_back(g.block_output[j]);
        g.layers.push_back(std::move(head));
        const int head_out = (b - 1) * group + 1;
        for (int l = 0; l < L; ++l) {
          g.layers.push_back(LayerPlan{b, false, {head_out}});
        }
        g.block_output.push_back(b * group);
      }
      break;
    case Variant::Dense:
      // Every layer is multi-scale over all preceding sibling outputs.
      for (int t = 0; t < B * group; ++t) {
        LayerPlan p{t / group + 1, true, {}};
        for (int j = 0; j <= t; ++j) p.sources.push_back(j);
        g.layers.push_back(std::move(p));
        if ((t + 1) % group == 0) g.block_output.push_back(t + 1);
      }
      break;
    case Variant::LocalDense:
      // Block heads as in MCMulT; the in-block layers densely attend every
      // sibling output produced so far inside the same-level block.
      for (int b = 1; b <= B; ++b) {
        LayerPlan head{b, true, {}};
        for (int j = 0; j < b; ++j) head.sources.push_back(g.block_output[j]);
        g.layers.push_back(std::move(head));
        const int head_out = (b - 1) * group + 1;
        for (int l = 0; l < L; ++l) {
          LayerPlan local{b, true, {}};
          for (int j = 0; j <= l; ++j) local.sources.push_back(head_out + j);
          g.layers.push_back(std::move(local));
        }
        g.block_output.push_back(b * group);
      }
      break;
    case Variant::Global:
      // Block heads only; one multi-scale layer per block.
      for (int b = 1; b <= B; ++b) {
        LayerPlan head{b, true, {}};
        for (int j = 0; j < b; ++j) head.sources.push_back(g.block_output[j]);
        g.layers.push_back(std::move(head));
        g.block_output.push_back(b);
      }
      break;
    case Variant::MulT:
      // Flat stack at matched depth; every layer reads sibling scale 0.
      for (int t = 0; t < B * group; ++t) {
        g.layers.push_back(LayerPlan{t / group + 1, false, {0}});
        if ((t + 1) % group == 0) g.block_output.push_back(t + 1);
      }
      break;
  }
  check_schedule(g);
  return g;
}

}  // namespace mcmult

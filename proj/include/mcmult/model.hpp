#pragma once

#include <map>
#include <unordered_map>
#include <vector>

#include "mcmult/connectivity.hpp"
#include "mcmult/optim.hpp"
#include "mcmult/tensor.hpp"

namespace mcmult {

/// Fixed sinusoidal position table, T x d, sin on even columns and cos on
/// odd columns at matching frequencies. d must be even.
Matrix positional_encoding(int t_len, int d);

struct EmbedParams {
  Parameter* kernel = nullptr;  // (k * d_in) x d, tap-major
  Parameter* bias = nullptr;    // 1 x d
};

/// Projections of one attention layer. wq/wo are shared across the layer's
/// sources; every source gets its own key/value pair.
struct AttnLayerParams {
  Parameter* wq = nullptr;
  Parameter* wo = nullptr;
  std::vector<std::pair<Parameter*, Parameter*>> kv;  // (wk, wv) per source
  // Scale aggregator, present on multi-scale layers only.
  Parameter* agg_q = nullptr;
  std::vector<Parameter*> agg_k;
  // Feed-forward and the two normalizations around it.
  Parameter* ff_w1 = nullptr;
  Parameter* ff_b1 = nullptr;
  Parameter* ff_w2 = nullptr;
  Parameter* ff_b2 = nullptr;
  Parameter* ln1_gain = nullptr;
  Parameter* ln1_bias = nullptr;
  Parameter* ln2_gain = nullptr;
  Parameter* ln2_bias = nullptr;
  bool multiscale = false;
};

struct ModelParams {
  ParameterStore store;
  std::map<int, EmbedParams> embed;  // keyed by modality index
  std::map<BranchId, std::vector<AttnLayerParams>> branches;
  std::map<int, std::vector<AttnLayerParams>> prediction;  // by target index
  Parameter* head_w1 = nullptr;
  Parameter* head_b1 = nullptr;
  Parameter* head_w2 = nullptr;
  Parameter* head_b2 = nullptr;
};

/// Registers every trainable tensor for `cfg` in canonical order.
ModelParams build_parameters(const ModelConfig& cfg,
                             const ConnectivityGraph& plan);

/// Exact trainable-scalar count; pure in the configuration.
std::size_t count_parameters(const ModelConfig& cfg);

/// One (possibly padded) sample as the model consumes it. An empty mask
/// means every row is a real position; padded rows must hold zeros.
struct ModelInput {
  std::array<Matrix, 3> data;
  std::array<BoolVec, 3> mask;

  const BoolVec* effective_mask(int modality) const;
  Index last_real_row(int modality) const;
};

/// Per-layer forward records kept for inspection and attention export.
struct LayerTrace {
  std::vector<std::vector<Matrix>> attention;  // [source][head], pre-dropout
  std::vector<Matrix> interactions;            // attended feature per source
  Matrix scale_weights;                        // T x n aggregator softmax
  Matrix aggregated;
  Matrix ff_output;
};

struct ForwardTrace {
  std::map<BranchId, std::vector<LayerTrace>> layers;
  std::map<BranchId, std::vector<Matrix>> outputs;  // [0..depth], 0 = embedding
};

/// Per-pass state shared by the layer kit: the tape, dropout mode, and a
/// cache so each parameter is watched once per pass.
struct ForwardCtx {
  ForwardCtx(Tape& tape_ref, const ModelConfig& cfg_ref, bool training_flag,
             Rng& rng_ref)
      : tape(tape_ref), cfg(cfg_ref), training(training_flag), rng(rng_ref) {}

  Tape& tape;
  const ModelConfig& cfg;
  bool training = false;
  Rng& rng;

  Var p(Parameter* param);

 private:
  std::unordered_map<const Parameter*, Var> watched_;
};

// ---- layer kit (each piece independently drivable) -----------------------

/// Temporal convolution to the common dimension plus the position table.
Var embed_low_level(ForwardCtx& ctx, const Matrix& raw, Modality m,
                    const EmbedParams& ep, bool add_position = true);

/// Multi-head scaled dot-product attention from target queries to source
/// keys/values; heads are concatenated and projected by wo. Masked source
/// positions receive exactly zero weight. `head_weights_out`, when given,
/// collects the pre-dropout weight matrix of every head.
Var crossmodal_attention(ForwardCtx& ctx, const Var& target,
                         const Var& source, const Var& wq, const Var& wk,
                         const Var& wv, const Var& wo,
                         const BoolVec* source_mask,
                         std::vector<Matrix>* head_weights_out = nullptr);

/// One attention output per source scale; the query and output projections
/// are shared, key/value projections are per scale.
std::vector<Var> multiscale_interaction_set(ForwardCtx& ctx, const Var& prev,
                                            const std::vector<Var>& sources,
                                            const AttnLayerParams& lp,
                                            const BoolVec* source_mask,
                                            LayerTrace* trace = nullptr);

/// Convex combination of the candidates, weighted per time step by a
/// softmax over scaled dot products between a learned query of `prev` and
/// learned keys of each candidate.
Var multiscale_aggregate(ForwardCtx& ctx, const std::vector<Var>& candidates,
                         const Var& prev, const AttnLayerParams& lp,
                         Matrix* weights_out = nullptr);

/// R = A + LN(prev); out = R + f(LN(R)) with f a dim -> 4*dim -> dim map.
Var positionwise_ff(ForwardCtx& ctx, const Var& attended, const Var& prev,
                    const AttnLayerParams& lp, Var* ff_out = nullptr);

/// Full layer: interaction set, aggregation (identity for single-source
/// layers without an aggregator), then the feed-forward block.
Var layer_forward(ForwardCtx& ctx, const Var& prev,
                  const std::vector<Var>& sources,
                  const AttnLayerParams& lp, const BoolVec* source_mask,
                  LayerTrace* trace = nullptr);

/// One model instance: configuration, schedule, parameters, dropout stream.
/// Confine an instance to one thread during a step.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const ConnectivityGraph& plan() const { return plan_; }
  ParameterStore& params() { return params_.store; }
  const ParameterStore& params() const { return params_.store; }
  const ModelParams& param_map() const { return params_; }
  Rng& rng() { return rng_; }

  /// Forward pass to logits (1xC) or a score (1x1 for regression heads).
  Var forward(Tape& tape, const ModelInput& in, bool training,
              ForwardTrace* trace = nullptr);

  /// Eval-mode forward mapped to a sentiment score.
  double predict_score(const ModelInput& in);

  double score_from_logits(const Matrix& logits) const;

 private:
  ModelConfig cfg_;
  ConnectivityGraph plan_;
  ModelParams params_;
  std::vector<BranchId> instantiated_;
  Rng rng_;
};

}  // namespace mcmult

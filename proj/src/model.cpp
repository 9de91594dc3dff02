#include "mcmult/model.hpp"

#include <cmath>

#include "mcmult/metrics.hpp"

namespace mcmult {

Matrix positional_encoding(int t_len, int d) {
  if (d <= 0 || d % 2 != 0) {
    throw ConfigError("positional encoding needs an even dimension, got " +
                      std::to_string(d));
  }
  if (t_len < 0) throw ContractError("negative sequence length");
  Matrix pe(t_len, d);
  for (int pos = 0; pos < t_len; ++pos) {
    for (int i = 0; i < d / 2; ++i) {
      const double freq = std::pow(10000.0, (2.0 * i) / d);
      pe(pos, 2 * i) = std::sin(pos / freq);
      pe(pos, 2 * i + 1) = std::cos(pos / freq);
    }
  }
  return pe;
}

Var ForwardCtx::p(Parameter* param) {
  auto it = watched_.find(param);
  if (it != watched_.end()) return it->second;
  Var v = tape.watch(*param);
  watched_.emplace(param, v);
  return v;
}

// ---- parameter registration -----------------------------------------------

namespace {

AttnLayerParams register_attn_layer(ParameterStore& store,
                                    const std::string& prefix, int width,
                                    int num_sources, bool multiscale) {
  AttnLayerParams lp;
  lp.multiscale = multiscale;
  const Index w = width;
  lp.wq = &store.add(prefix + ".wq", w, w, ParamInit::Projection);
  for (int j = 0; j < num_sources; ++j) {
    Parameter& k =
        store.add(prefix + ".k" + std::to_string(j), w, w, ParamInit::Projection);
    Parameter& v =
        store.add(prefix + ".v" + std::to_string(j), w, w, ParamInit::Projection);
    lp.kv.emplace_back(&k, &v);
  }
  lp.wo = &store.add(prefix + ".wo", w, w, ParamInit::Projection);
  if (multiscale) {
    lp.agg_q = &store.add(prefix + ".agg.q", w, w, ParamInit::Projection);
    for (int j = 0; j < num_sources; ++j) {
      lp.agg_k.push_back(&store.add(prefix + ".agg.k" + std::to_string(j), w,
                                    w, ParamInit::Projection));
    }
  }
  lp.ff_w1 = &store.add(prefix + ".ff.w1", w, 4 * w, ParamInit::Projection);
  lp.ff_b1 = &store.add(prefix + ".ff.b1", 1, 4 * w, ParamInit::Zero);
  lp.ff_w2 = &store.add(prefix + ".ff.w2", 4 * w, w, ParamInit::Projection);
  lp.ff_b2 = &store.add(prefix + ".ff.b2", 1, w, ParamInit::Zero);
  lp.ln1_gain = &store.add(prefix + ".ln1.gain", 1, w, ParamInit::One);
  lp.ln1_bias = &store.add(prefix + ".ln1.bias", 1, w, ParamInit::Zero);
  lp.ln2_gain = &store.add(prefix + ".ln2.gain", 1, w, ParamInit::One);
  lp.ln2_bias = &store.add(prefix + ".ln2.bias", 1, w, ParamInit::Zero);
  return lp;
}

int branches_into(const ModelConfig& cfg, Modality target) {
  int n = 0;
  for (const auto& b : cfg.branches) {
    if (b.target == target) ++n;
  }
  return n;
}

}  // namespace

ModelParams build_parameters(const ModelConfig& cfg,
                             const ConnectivityGraph& plan) {
  ModelParams mp;
  const int d = cfg.dim;
  for (Modality m : cfg.used_modalities()) {
    const int mi = index_of(m);
    EmbedParams ep;
    ep.kernel = &mp.store.add(
        std::string("embed.") + modality_letter(m) + ".kernel",
        static_cast<Index>(cfg.conv_kernel[mi]) * cfg.input_dim[mi], d,
        ParamInit::Projection);
    ep.bias = &mp.store.add(std::string("embed.") + modality_letter(m) +
                                ".bias",
                            1, d, ParamInit::Zero);
    mp.embed[mi] = ep;
  }
  for (const BranchId& b : cfg.instantiated_branches()) {
    std::vector<AttnLayerParams> layers;
    for (int slot = 0; slot < plan.depth(); ++slot) {
      const LayerPlan& lp = plan.layers[slot];
      layers.push_back(register_attn_layer(
          mp.store, "br." + branch_name(b) + ".l" + std::to_string(slot), d,
          static_cast<int>(lp.sources.size()), lp.multiscale));
    }
    mp.branches.emplace(b, std::move(layers));
  }
  Index head_in = 0;
  for (Modality t : cfg.targets()) {
    const int width = branches_into(cfg, t) * d;
    std::vector<AttnLayerParams> layers;
    for (int i = 0; i < cfg.prediction_layers; ++i) {
      layers.push_back(register_attn_layer(
          mp.store,
          std::string("pred.") + modality_letter(t) + ".l" + std::to_string(i),
          width, 1, false));
    }
    mp.prediction.emplace(index_of(t), std::move(layers));
    head_in += width;
  }
  const Index out_dim = cfg.regression_head ? 1 : cfg.num_classes;
  mp.head_w1 = &mp.store.add("head.w1", head_in, head_in, ParamInit::Projection);
  mp.head_b1 = &mp.store.add("head.b1", 1, head_in, ParamInit::Zero);
  mp.head_w2 = &mp.store.add("head.w2", head_in, out_dim, ParamInit::Projection);
  mp.head_b2 = &mp.store.add("head.b2", 1, out_dim, ParamInit::Zero);
  return mp;
}

std::size_t count_parameters(const ModelConfig& cfg) {
  cfg.validate();
  return build_parameters(cfg, build_connectivity(cfg)).store.scalar_count();
}

// ---- input helpers ----------------------------------------------------------

const BoolVec* ModelInput::effective_mask(int modality) const {
  const BoolVec& m = mask[modality];
  if (m.size() == 0 || m.all()) return nullptr;
  return &m;
}

Index ModelInput::last_real_row(int modality) const {
  const BoolVec& m = mask[modality];
  if (m.size() == 0) return data[modality].rows() - 1;
  for (Index i = m.size() - 1; i >= 0; --i) {
    if (m(i)) return i;
  }
  throw MaskError("sequence has no unmasked positions");
}

// ---- layer kit ---------------------------------------------------------------

Var embed_low_level(ForwardCtx& ctx, const Matrix& raw, Modality m,
                    const EmbedParams& ep, bool add_position) {
  const int mi = index_of(m);
  if (raw.cols() != ctx.cfg.input_dim[mi]) {
    throw ConfigError("input dim " + std::to_string(raw.cols()) + " for " +
                      modality_letter(m) + " does not match configured " +
                      std::to_string(ctx.cfg.input_dim[mi]));
  }
  Var x = ctx.tape.leaf(raw);
  Var z = conv1d_same(x, ctx.p(ep.kernel), ctx.p(ep.bias),
                      ctx.cfg.conv_kernel[mi]);
  if (add_position) {
    z = add_constant(z, positional_encoding(static_cast<int>(raw.rows()),
                                            ctx.cfg.dim));
  }
  return z;
}

Var crossmodal_attention(ForwardCtx& ctx, const Var& target,
                         const Var& source, const Var& wq, const Var& wk,
                         const Var& wv, const Var& wo,
                         const BoolVec* source_mask,
                         std::vector<Matrix>* head_weights_out) {
  if (target.cols() != source.cols()) {
    throw DimensionError("crossmodal_attention: feature dims disagree, " +
                         shape_string(target.value()) + " vs " +
                         shape_string(source.value()));
  }
  Var q = matmul(target, wq);
  Var k = matmul(source, wk);
  Var v = matmul(source, wv);
  const int h = ctx.cfg.heads;
  const Index width = q.cols();
  if (width % h != 0) {
    throw DimensionError("attention width not divisible by head count");
  }
  const Index dk = width / h;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  std::optional<BoolMask> mask_mat;
  if (source_mask != nullptr) {
    if (source_mask->size() != source.rows()) {
      throw DimensionError("source mask length does not match source rows");
    }
    mask_mat.emplace(target.rows(), source.rows());
    for (Index i = 0; i < target.rows(); ++i) {
      for (Index j = 0; j < source.rows(); ++j) {
        (*mask_mat)(i, j) = (*source_mask)(j);
      }
    }
  }

  std::vector<Var> heads;
  heads.reserve(h);
  for (int i = 0; i < h; ++i) {
    Var qi = slice_cols(q, i * dk, dk);
    Var ki = slice_cols(k, i * dk, dk);
    Var vi = slice_cols(v, i * dk, dk);
    Var scores = scale(matmul_nt(qi, ki), inv_sqrt_dk);
    Var weights =
        softmax_rows(scores, mask_mat ? &mask_mat.value() : nullptr);
    if (head_weights_out != nullptr) {
      head_weights_out->push_back(weights.value());
    }
    Var kept = dropout(weights, ctx.cfg.attn_dropout, ctx.training, ctx.rng);
    heads.push_back(matmul(kept, vi));
  }
  Var merged = h == 1 ? heads[0] : concat_cols(heads);
  return matmul(merged, wo);
}

std::vector<Var> multiscale_interaction_set(ForwardCtx& ctx, const Var& prev,
                                            const std::vector<Var>& sources,
                                            const AttnLayerParams& lp,
                                            const BoolVec* source_mask,
                                            LayerTrace* trace) {
  if (sources.empty()) {
    throw ContractError("interaction set needs at least one source scale");
  }
  if (sources.size() != lp.kv.size()) {
    throw ContractError("layer has " + std::to_string(lp.kv.size()) +
                        " key/value pairs but got " +
                        std::to_string(sources.size()) + " sources");
  }
  std::vector<Var> out;
  out.reserve(sources.size());
  for (std::size_t j = 0; j < sources.size(); ++j) {
    std::vector<Matrix>* heads_out = nullptr;
    if (trace != nullptr) {
      trace->attention.emplace_back();
      heads_out = &trace->attention.back();
    }
    Var h = crossmodal_attention(ctx, prev, sources[j], ctx.p(lp.wq),
                                 ctx.p(lp.kv[j].first),
                                 ctx.p(lp.kv[j].second), ctx.p(lp.wo),
                                 source_mask, heads_out);
    if (trace != nullptr) trace->interactions.push_back(h.value());
    out.push_back(h);
  }
  return out;
}

Var multiscale_aggregate(ForwardCtx& ctx, const std::vector<Var>& candidates,
                         const Var& prev, const AttnLayerParams& lp,
                         Matrix* weights_out) {
  const std::size_t n = candidates.size();
  if (n == 0) throw ContractError("aggregate over an empty candidate list");
  if (lp.agg_q == nullptr || lp.agg_k.size() != n) {
    throw ContractError("aggregator parameters do not match candidate count");
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(prev.cols()));
  Var q = matmul(prev, ctx.p(lp.agg_q));
  std::vector<Var> score_cols;
  score_cols.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    Var kj = matmul(candidates[j], ctx.p(lp.agg_k[j]));
    score_cols.push_back(scale(rowwise_dot(q, kj), inv_sqrt));
  }
  Var scores = n == 1 ? score_cols[0] : concat_cols(score_cols);
  Var weights = softmax_rows(scores);
  if (weights_out != nullptr) *weights_out = weights.value();
  Var out = scale_rows(candidates[0], slice_cols(weights, 0, 1));
  for (std::size_t j = 1; j < n; ++j) {
    out = add(out, scale_rows(candidates[j],
                              slice_cols(weights, static_cast<Index>(j), 1)));
  }
  return out;
}

Var positionwise_ff(ForwardCtx& ctx, const Var& attended, const Var& prev,
                    const AttnLayerParams& lp, Var* ff_out) {
  Var r = add(attended,
              layer_norm(prev, ctx.p(lp.ln1_gain), ctx.p(lp.ln1_bias)));
  Var rn = layer_norm(r, ctx.p(lp.ln2_gain), ctx.p(lp.ln2_bias));
  Var hidden = dropout(relu(add_rowvec(matmul(rn, ctx.p(lp.ff_w1)),
                                       ctx.p(lp.ff_b1))),
                       ctx.cfg.fc_dropout, ctx.training, ctx.rng);
  Var projected = dropout(
      add_rowvec(matmul(hidden, ctx.p(lp.ff_w2)), ctx.p(lp.ff_b2)),
      ctx.cfg.fc_dropout, ctx.training, ctx.rng);
  if (ff_out != nullptr) *ff_out = projected;
  return add(r, projected);
}

Var layer_forward(ForwardCtx& ctx, const Var& prev,
                  const std::vector<Var>& sources,
                  const AttnLayerParams& lp, const BoolVec* source_mask,
                  LayerTrace* trace) {
  std::vector<Var> interactions =
      multiscale_interaction_set(ctx, prev, sources, lp, source_mask, trace);
  Var aggregated;
  if (lp.multiscale) {
    aggregated = multiscale_aggregate(
        ctx, interactions, prev, lp,
        trace != nullptr ? &trace->scale_weights : nullptr);
  } else {
    if (interactions.size() != 1) {
      throw ContractError("single-source layer received several sources");
    }
    aggregated = interactions[0];
  }
  if (trace != nullptr) trace->aggregated = aggregated.value();
  Var ff;
  Var out = positionwise_ff(ctx, aggregated, prev, lp, &ff);
  if (trace != nullptr) trace->ff_output = ff.value();
  return out;
}

// ---- model -------------------------------------------------------------------

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  plan_ = build_connectivity(cfg_);
  params_ = build_parameters(cfg_, plan_);
  params_.store.init_values(seed);
  instantiated_ = cfg_.instantiated_branches();
  rng_.seed(seed ^ 0x9e3779b97f4a7c15ull);
}

Var Model::forward(Tape& tape, const ModelInput& in, bool training,
                   ForwardTrace* trace) {
  ForwardCtx ctx{tape, cfg_, training, rng_};

  std::array<Var, 3> embedding;
  for (Modality m : cfg_.used_modalities()) {
    const int mi = index_of(m);
    embedding[mi] = embed_low_level(ctx, in.data[mi], m, params_.embed.at(mi));
  }

  // Level-synchronous rounds: slot t of every branch runs in round t and may
  // read sibling outputs up to index t, all of which already exist.
  std::map<BranchId, std::vector<Var>> outputs;
  for (const BranchId& b : instantiated_) {
    outputs[b] = {embedding[index_of(b.target)]};
  }
  for (int round = 0; round < plan_.depth(); ++round) {
    const LayerPlan& slot = plan_.layers[round];
    for (const BranchId& b : instantiated_) {
      const std::vector<Var>& sibling = outputs.at(b.sibling());
      std::vector<Var> sources;
      sources.reserve(slot.sources.size());
      for (int idx : slot.sources) sources.push_back(sibling[idx]);
      LayerTrace* lt = nullptr;
      if (trace != nullptr) {
        auto& lts = trace->layers[b];
        if (lts.size() != static_cast<std::size_t>(round)) {
          lts.resize(round);
        }
        lts.emplace_back();
        lt = &lts.back();
      }
      Var out = layer_forward(ctx, outputs.at(b)[round], sources,
                              params_.branches.at(b)[round],
                              in.effective_mask(index_of(b.source)), lt);
      outputs.at(b).push_back(out);
    }
  }
  if (trace != nullptr) {
    for (const auto& [b, outs] : outputs) {
      auto& dst = trace->outputs[b];
      dst.clear();
      for (const Var& v : outs) dst.push_back(v.value());
    }
  }

  // Per-target temporal summary over the concatenated incoming streams.
  std::vector<Var> summaries;
  for (Modality t : cfg_.targets()) {
    const int ti = index_of(t);
    std::vector<Var> streams;
    for (const BranchId& b : cfg_.branches) {
      if (b.target == t) streams.push_back(outputs.at(b).back());
    }
    Var x = streams.size() == 1 ? streams[0] : concat_cols(streams);
    for (const AttnLayerParams& lp : params_.prediction.at(ti)) {
      x = layer_forward(ctx, x, {x}, lp, in.effective_mask(ti), nullptr);
    }
    summaries.push_back(row(x, in.last_real_row(ti)));
  }
  Var joint = summaries.size() == 1 ? summaries[0] : concat_cols(summaries);
  Var hidden = dropout(relu(add_rowvec(matmul(joint, ctx.p(params_.head_w1)),
                                       ctx.p(params_.head_b1))),
                       cfg_.fc_dropout, training, rng_);
  return add_rowvec(matmul(hidden, ctx.p(params_.head_w2)),
                    ctx.p(params_.head_b2));
}

double Model::score_from_logits(const Matrix& logits) const {
  if (cfg_.regression_head) return logits(0, 0);
  Index best = 0;
  logits.row(0).maxCoeff(&best);
  return class_to_score(static_cast<int>(best), cfg_.num_classes);
}

double Model::predict_score(const ModelInput& in) {
  Tape tape;
  Var logits = forward(tape, in, /*training=*/false);
  return score_from_logits(logits.value());
}

}  // namespace mcmult

#include "mcmult/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "mcmult/io.hpp"

namespace mcmult {

std::string loss_name(LossKind k) {
  return k == LossKind::CrossEntropy ? "cross_entropy" : "l1_regression";
}

LossKind loss_from_name(const std::string& name) {
  if (name == "cross_entropy" || name == "ce") return LossKind::CrossEntropy;
  if (name == "l1_regression" || name == "l1") return LossKind::L1Regression;
  throw ConfigError("unknown loss: " + name);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
  if (patience < 0) throw ConfigError("patience must be >= 0");
}

Var sample_loss(Model& model, Tape& tape, const ModelInput& in,
                const Label& label, LossKind kind, bool training) {
  const ModelConfig& cfg = model.config();
  Var out = model.forward(tape, in, training);
  if (kind == LossKind::CrossEntropy) {
    if (cfg.regression_head) {
      throw ConfigError("cross-entropy loss needs a classification head");
    }
    int cls;
    if (label.is_score) {
      if (cfg.num_classes != 7) {
        throw ConfigError(
            "score labels can only be bucketed for a 7-class head");
      }
      cls = score_to_bucket(label.score) + 3;
    } else {
      cls = label.cls;
    }
    return cross_entropy_loss(out, cls);
  }
  if (!cfg.regression_head) {
    throw ConfigError("l1 loss needs a regression head");
  }
  return l1_loss(out, label_score(label, cfg.num_classes));
}

RunHistory train(Model& model, const std::vector<MultimodalSample>& train_set,
                 const std::vector<MultimodalSample>& valid_set,
                 const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("empty training set");
  RunHistory history;
  AdamState adam;
  double best_acc2 = -1.0;
  std::vector<Matrix> best_params = model.params().snapshot_values();
  history.best_epoch = -1;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto batches = batch_and_pad(train_set, cfg.batch_size,
                                       cfg.seed + static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      model.params().zero_grads();
      const double inv_n = 1.0 / static_cast<double>(batch.items.size());
      for (const Batch::Item& item : batch.items) {
        Tape tape;
        Var loss = sample_loss(model, tape, item.input, item.label, cfg.loss,
                               /*training=*/true);
        const double lv = loss.value()(0, 0);
        if (!std::isfinite(lv)) {
          throw CheckError("non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(bi));
        }
        loss_sum += lv;
        ++seen;
        tape.backward(scale(loss, inv_n));
      }
      clip_global_norm(model.params(), cfg.clip_norm);
      adam_step(model.params(), adam, cfg.learning_rate);
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(seen);
    if (!valid_set.empty()) stats.valid = evaluate(model, valid_set);
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      started)
            .count();
    history.epochs.push_back(stats);

    if (valid_set.empty() || stats.valid.acc2 > best_acc2) {
      best_acc2 = stats.valid.acc2;
      best_params = model.params().snapshot_values();
      history.best_epoch = epoch;
    } else if (cfg.patience > 0 &&
               epoch - history.best_epoch >= cfg.patience) {
      history.early_stopped = true;
      break;
    }
  }
  model.params().restore_values(best_params);
  return history;
}

MetricsReport evaluate(Model& model,
                       const std::vector<MultimodalSample>& samples) {
  if (samples.empty()) throw ContractError("empty evaluation set");
  std::vector<double> predicted, target;
  predicted.reserve(samples.size());
  target.reserve(samples.size());
  for (const MultimodalSample& s : samples) {
    predicted.push_back(model.predict_score(to_model_input(s)));
    target.push_back(label_score(s.label, model.config().num_classes));
  }
  return compute_metrics(predicted, target);
}

double model_gradient_check(Model& model, const ModelInput& in,
                            const Label& label, LossKind kind, double eps) {
  ParameterStore& params = model.params();
  params.zero_grads();
  {
    Tape tape;
    Var loss = sample_loss(model, tape, in, label, kind, /*training=*/false);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    const Matrix saved_value = p.value;
    const Matrix analytic = p.grad;
    const auto loss_at = [&](const Matrix& w) {
      p.value = w;
      Tape tape;
      Var loss = sample_loss(model, tape, in, label, kind, /*training=*/false);
      return loss.value()(0, 0);
    };
    worst = std::max(worst,
                     finite_diff_check(loss_at, saved_value, analytic, eps));
    p.value = saved_value;
  }
  return worst;
}

void write_history_csv(const std::filesystem::path& file,
                       const RunHistory& history) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "epoch,train_loss,acc7,acc2,f1,mae,corr,wall_seconds\n";
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const EpochStats& e = history.epochs[i];
    out << i << ',' << format_double(e.train_loss) << ','
        << format_double(e.valid.acc7) << ',' << format_double(e.valid.acc2)
        << ',' << format_double(e.valid.f1) << ','
        << format_double(e.valid.mae) << ',' << format_double(e.valid.corr)
        << ',' << format_double(e.wall_seconds) << '\n';
  }
  if (!out) throw IoError("write failed for " + file.string());
}

}  // namespace mcmult

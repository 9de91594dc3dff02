#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcmult/ablate.hpp"
#include "mcmult/attention_export.hpp"
#include "mcmult/io.hpp"
#include "mcmult/runconfig.hpp"

namespace fs = std::filesystem;
using namespace mcmult;

namespace {

struct CommandState {
  std::optional<fs::path> config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_shared_options(CLI::App* cmd, std::shared_ptr<CommandState> state) {
  cmd->add_option_function<std::string>(
      "--config", [state](const std::string& v) { state->config_file = v; },
      "flat key=value config file");
  const auto bind = [cmd, state](const std::string& flag,
                                 const std::string& key,
                                 const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag,
        [state, key](const std::string& v) {
          state->overrides.emplace_back(key, v);
        },
        desc);
  };
  bind("--out", "out_dir", "output directory");
  bind("--data", "data_dir", "dataset directory");
  bind("--seed", "seed", "master seed");
  bind("--variant", "variant",
       "mcmult | dense | local_dense | global | mult");
  bind("--blocks", "blocks", "number of blocks B");
  bind("--layers", "layers", "single-source layers per block L");
  bind("--dim", "dim", "common feature dimension d");
  bind("--heads", "heads", "attention heads");
  bind("--epochs", "epochs", "training epochs");
  bind("--branches", "branches",
       "comma list of streams, e.g. V->L,A->L (single letter = unimodal)");
  bind("--loss", "loss", "cross_entropy | l1_regression");
  bind("--batch-size", "batch_size", "batch size");
  bind("--patience", "patience", "early-stop patience (0 = off)");
  bind("--samples", "samples", "synthetic sample count");
  bind("--snr", "snr", "synthetic signal-to-noise ratio");
  bind("--classes", "num_classes", "number of classes");
  bind("--params", "params_file", "parameter file to load");
  bind("--axis", "axis", "ablation axis: variants | branches | bl | depth");
  bind("--jobs", "jobs", "parallel ablation arms");
  bind("--block-index", "block_index", "block to export");
  bind("--head-index", "head_index", "attention head to export");
  bind("--scale-index", "scale_index", "source scale to export");
  bind("--sample-index", "sample_index", "dataset sample to export");
  bind("--branch", "branch", "branch to export, e.g. V->L");
}

RunConfig resolve(const CommandState& state) {
  return RunConfig::load(state.config_file, state.overrides);
}

void echo_config(const RunConfig& rc, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  write_kv(dir / "config_resolved.txt", rc.resolved());
}

void print_metrics(const MetricsReport& m) {
  std::cout << "acc7  " << m.acc7 << "\n"
            << "acc2  " << m.acc2 << "\n"
            << "f1    " << m.f1 << "\n"
            << "mae   " << m.mae << "\n"
            << "corr  " << m.corr << "\n";
  std::cout << "csv: acc7,acc2,f1,mae,corr\n"
            << "csv: " << format_double(m.acc7) << ','
            << format_double(m.acc2) << ',' << format_double(m.f1) << ','
            << format_double(m.mae) << ',' << format_double(m.corr) << "\n";
}

/// Aligns model dims and class count with what the dataset actually holds.
std::vector<MultimodalSample> load_and_adapt(RunConfig& rc) {
  auto samples = load_dataset(rc.data_dir);
  for (int m = 0; m < 3; ++m) {
    rc.model.input_dim[m] = static_cast<int>(samples[0].streams[m].dim());
  }
  int max_cls = 1;
  for (const auto& s : samples) {
    if (!s.label.is_score) max_cls = std::max(max_cls, s.label.cls);
  }
  rc.model.num_classes = std::max(rc.model.num_classes, max_cls + 1);
  return samples;
}

int cmd_gen_data(const CommandState& state) {
  RunConfig rc = resolve(state);
  const auto samples = generate_synthetic(rc.synth);
  save_dataset(samples, rc.data_dir);
  write_kv(rc.data_dir / "config_resolved.txt", rc.resolved());
  std::cout << "wrote " << samples.size() << " samples to " << rc.data_dir
            << "\n";
  return 0;
}

int cmd_train(const CommandState& state) {
  RunConfig rc = resolve(state);
  const auto samples = load_and_adapt(rc);
  const DatasetSplit parts = split(samples, rc.ratios, rc.seed);
  Model model(rc.model, rc.seed);
  const RunHistory history = train(model, parts.train, parts.valid, rc.trainer);
  echo_config(rc, rc.out_dir);
  save_parameters(model.params(), rc.out_dir / "params.json");
  write_history_csv(rc.out_dir / "history.csv", history);
  std::cout << "trained " << history.epochs.size() << " epochs (best epoch "
            << history.best_epoch << (history.early_stopped ? ", early stop"
                                                            : "")
            << ")\n";
  if (!parts.valid.empty()) {
    std::cout << "validation metrics:\n";
    print_metrics(evaluate(model, parts.valid));
  }
  std::cout << "params: " << (rc.out_dir / "params.json") << "\n";
  return 0;
}

int cmd_eval(const CommandState& state) {
  RunConfig rc = resolve(state);
  const auto samples = load_and_adapt(rc);
  const DatasetSplit parts = split(samples, rc.ratios, rc.seed);
  Model model(rc.model, rc.seed);
  const fs::path params_path =
      rc.params_file.value_or(rc.out_dir / "params.json");
  load_parameters(model.params(), params_path);
  const MetricsReport m = evaluate(model, parts.test);
  echo_config(rc, rc.out_dir);
  std::ofstream csv(rc.out_dir / "metrics.csv");
  csv << "acc7,acc2,f1,mae,corr\n"
      << format_double(m.acc7) << ',' << format_double(m.acc2) << ','
      << format_double(m.f1) << ',' << format_double(m.mae) << ','
      << format_double(m.corr) << "\n";
  std::cout << "test metrics (" << parts.test.size() << " samples):\n";
  print_metrics(m);
  return 0;
}

int cmd_ablate(const CommandState& state) {
  RunConfig rc = resolve(state);
  const auto samples = load_and_adapt(rc);
  const DatasetSplit parts = split(samples, rc.ratios, rc.seed);
  const std::vector<std::uint64_t> seeds =
      rc.ablate_seeds.empty() ? std::vector<std::uint64_t>{rc.seed}
                              : rc.ablate_seeds;
  const auto results =
      ablation_run(rc.model, rc.trainer, rc.axis, seeds, parts, rc.jobs);
  echo_config(rc, rc.out_dir);
  write_ablation_csv(rc.out_dir / "ablation.csv", results);
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::cout << r.arm << " seed=" << r.seed;
    if (r.failed) {
      std::cout << " FAILED: " << r.error;
      ++failed;
    } else {
      std::cout << " acc2=" << r.metrics.acc2 << " f1=" << r.metrics.f1
                << " mae=" << r.metrics.mae;
    }
    std::cout << " params=" << r.param_count << "\n";
  }
  std::cout << "table: " << (rc.out_dir / "ablation.csv") << " ("
            << results.size() << " rows, " << failed << " failed)\n";
  return 0;
}

int cmd_count_params(const CommandState& state) {
  RunConfig rc = resolve(state);
  for (Variant v : {Variant::Dense, Variant::LocalDense, Variant::MCMulT,
                    Variant::MulT, Variant::Global}) {
    ModelConfig cfg = rc.model;
    cfg.variant = v;
    std::cout << variant_name(v) << " " << count_parameters(cfg) << "\n";
  }
  return 0;
}

int cmd_grad_check(const CommandState& state) {
  RunConfig rc = resolve(state);
  SyntheticSpec spec = rc.synth;
  spec.count = 1;
  const auto samples = generate_synthetic(spec);
  Model model(rc.model, rc.seed);
  const double err = model_gradient_check(
      model, to_model_input(samples[0]), samples[0].label, rc.trainer.loss);
  std::cout << "max relative error " << format_double(err) << " over "
            << model.params().scalar_count() << " parameters\n";
  return err < 1e-4 ? 0 : 1;
}

int cmd_export_attn(const CommandState& state) {
  RunConfig rc = resolve(state);
  const auto samples = load_and_adapt(rc);
  if (rc.sample_index < 0 ||
      static_cast<std::size_t>(rc.sample_index) >= samples.size()) {
    throw ContractError("sample_index out of range");
  }
  Model model(rc.model, rc.seed);
  const fs::path params_path =
      rc.params_file.value_or(rc.out_dir / "params.json");
  if (fs::exists(params_path)) {
    load_parameters(model.params(), params_path);
  }
  AttentionExportRequest req;
  req.branch = rc.export_branch;
  req.block = rc.block_index;
  req.head = rc.head_index;
  req.scale = rc.scale_index;
  echo_config(rc, rc.out_dir);
  const auto res = export_attention(model, samples[rc.sample_index], req,
                                    rc.out_dir);
  std::cout << "wrote " << res.csv << " (" << res.weights.rows() << "x"
            << res.weights.cols() << ") and " << res.meta << "\n";
  return 0;
}

int dispatch(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const MaskError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "multi-scale cooperative multimodal transformer workbench"};
  app.require_subcommand(1);

  struct Entry {
    CLI::App* cmd;
    std::shared_ptr<CommandState> state;
    std::function<int(const CommandState&)> handler;
  };
  std::vector<Entry> entries;
  const auto register_cmd =
      [&](const std::string& name, const std::string& desc,
          std::function<int(const CommandState&)> handler) {
        auto state = std::make_shared<CommandState>();
        CLI::App* cmd = app.add_subcommand(name, desc);
        add_shared_options(cmd, state);
        entries.push_back({cmd, state, std::move(handler)});
      };

  register_cmd("gen-data", "generate a synthetic dataset", cmd_gen_data);
  register_cmd("train", "train a model and save parameters + history",
               cmd_train);
  register_cmd("eval", "evaluate saved parameters on the test split",
               cmd_eval);
  register_cmd("ablate", "train/evaluate one ablation axis into a CSV table",
               cmd_ablate);
  register_cmd("count-params",
               "print trainable-parameter counts for all five variants",
               cmd_count_params);
  register_cmd("grad-check",
               "compare tape gradients against finite differences",
               cmd_grad_check);
  register_cmd("export-attn", "export one attention-weight matrix as CSV",
               cmd_export_attn);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (const Entry& entry : entries) {
    if (entry.cmd->parsed()) {
      return dispatch([&] { return entry.handler(*entry.state); });
    }
  }
  std::cerr << "no command given\n";
  return 2;
}

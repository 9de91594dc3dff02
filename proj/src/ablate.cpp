#include "mcmult/ablate.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <thread>

#include "mcmult/io.hpp"

namespace mcmult {

std::string axis_name(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::Variants: return "variants";
    case AblationAxis::Branches: return "branches";
    case AblationAxis::BlockLayerGrid: return "bl";
    case AblationAxis::Depth: return "depth";
  }
  throw ContractError("bad axis value");
}

AblationAxis axis_from_name(const std::string& name) {
  if (name == "variants") return AblationAxis::Variants;
  if (name == "branches") return AblationAxis::Branches;
  if (name == "bl" || name == "hyperparams") return AblationAxis::BlockLayerGrid;
  if (name == "depth") return AblationAxis::Depth;
  throw ConfigError("unknown ablation axis: " + name);
}

namespace {

std::vector<BranchId> branches_into_target(Modality target) {
  std::vector<BranchId> out;
  for (Modality source : kModalities) {
    if (source != target) out.push_back(BranchId{source, target});
  }
  return out;
}

std::string lower_modality(Modality m) {
  switch (m) {
    case Modality::Text: return "text";
    case Modality::Vision: return "vision";
    case Modality::Audio: return "audio";
  }
  return "?";
}

}  // namespace

std::vector<AblationArm> ablation_arms(const ModelConfig& base,
                                       AblationAxis axis) {
  std::vector<AblationArm> arms;
  switch (axis) {
    case AblationAxis::Variants:
      for (Variant v : {Variant::MCMulT, Variant::Dense, Variant::LocalDense,
                        Variant::Global, Variant::MulT}) {
        ModelConfig cfg = base;
        cfg.variant = v;
        arms.push_back({variant_name(v), std::move(cfg)});
      }
      break;
    case AblationAxis::Branches: {
      for (Modality m : kModalities) {
        ModelConfig cfg = base;
        cfg.branches = {BranchId{m, m}};
        arms.push_back({lower_modality(m) + "_only", std::move(cfg)});
      }
      for (Modality t : kModalities) {
        ModelConfig cfg = base;
        cfg.branches = branches_into_target(t);
        std::string name = "to_";
        name += modality_letter(t);
        arms.push_back({name, std::move(cfg)});
      }
      ModelConfig cfg = base;
      cfg.branches = all_branches();
      arms.push_back({"full", std::move(cfg)});
      break;
    }
    case AblationAxis::BlockLayerGrid:
      for (int b = 1; b <= 5; ++b) {
        ModelConfig cfg = base;
        cfg.blocks = b;
        arms.push_back({"b" + std::to_string(b), std::move(cfg)});
      }
      for (int l = 1; l <= 4; ++l) {
        ModelConfig cfg = base;
        cfg.layers_per_block = l;
        arms.push_back({"l" + std::to_string(l), std::move(cfg)});
      }
      break;
    case AblationAxis::Depth:
      for (int depth : {5, 7, 10, 12}) {
        ModelConfig cfg = base;
        cfg.variant = Variant::MulT;
        cfg.blocks = depth;
        cfg.layers_per_block = 0;
        arms.push_back({"mult_" + std::to_string(depth), std::move(cfg)});
      }
      break;
  }
  return arms;
}

std::vector<AblationResult> ablation_run(
    const ModelConfig& base, const TrainConfig& trainer, AblationAxis axis,
    const std::vector<std::uint64_t>& seeds, const DatasetSplit& data,
    int jobs) {
  if (seeds.empty()) throw ContractError("ablation needs at least one seed");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  const auto arms = ablation_arms(base, axis);

  struct Task {
    std::size_t arm;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    for (std::uint64_t s : seeds) tasks.push_back({a, s});
  }
  std::vector<AblationResult> results(tasks.size());

  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      AblationResult& row = results[i];
      row.arm = arms[task.arm].name;
      row.seed = task.seed;
      const auto started = std::chrono::steady_clock::now();
      try {
        Model model(arms[task.arm].model, task.seed);
        row.param_count = model.params().scalar_count();
        train(model, data.train, data.valid, trainer);
        row.metrics = evaluate(model, data.test);
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                        started)
              .count();
    }
  };

  const int n_threads = std::min<std::size_t>(jobs, tasks.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

void write_ablation_csv(const std::filesystem::path& file,
                        const std::vector<AblationResult>& results) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "arm,seed,acc7,acc2,f1,mae,corr,params,wall_seconds,status\n";
  for (const AblationResult& r : results) {
    out << r.arm << ',' << r.seed << ',';
    if (r.failed) {
      out << "nan,nan,nan,nan,nan," << r.param_count << ','
          << format_double(r.wall_seconds) << ",failed:" << r.error << '\n';
    } else {
      out << format_double(r.metrics.acc7) << ','
          << format_double(r.metrics.acc2) << ','
          << format_double(r.metrics.f1) << ',' << format_double(r.metrics.mae)
          << ',' << format_double(r.metrics.corr) << ',' << r.param_count
          << ',' << format_double(r.wall_seconds) << ",ok\n";
    }
  }
  if (!out) throw IoError("write failed for " + file.string());
}

}  // namespace mcmult

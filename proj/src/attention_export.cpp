#include "mcmult/attention_export.hpp"

#include "mcmult/io.hpp"

namespace mcmult {

AttentionExportResult export_attention(Model& model,
                                       const MultimodalSample& sample,
                                       const AttentionExportRequest& req,
                                       const std::filesystem::path& out_dir,
                                       const std::string& stem) {
  const ConnectivityGraph& plan = model.plan();
  if (req.block < 1 || req.block > plan.num_blocks()) {
    throw ContractError("block index " + std::to_string(req.block) +
                        " out of range 1.." +
                        std::to_string(plan.num_blocks()));
  }
  if (req.head < 0 || req.head >= model.config().heads) {
    throw ContractError("head index out of range");
  }
  const int slot = plan.block_head_slot(req.block);
  const std::size_t n_sources = plan.layers[slot].sources.size();
  if (req.scale < 0 || static_cast<std::size_t>(req.scale) >= n_sources) {
    throw ContractError("scale index " + std::to_string(req.scale) +
                        " out of range; layer reads " +
                        std::to_string(n_sources) + " scales");
  }

  ForwardTrace trace;
  Tape tape;
  model.forward(tape, to_model_input(sample), /*training=*/false, &trace);
  const auto it = trace.layers.find(req.branch);
  if (it == trace.layers.end()) {
    throw ContractError("branch " + branch_name(req.branch) +
                        " is not part of this model");
  }
  const LayerTrace& lt = it->second.at(slot);

  AttentionExportResult res;
  res.weights = lt.attention.at(req.scale).at(req.head);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  res.csv = out_dir / (stem + ".csv");
  res.meta = out_dir / (stem + ".meta");
  write_csv_matrix(res.csv, res.weights);
  write_kv(res.meta,
           {{"branch", branch_name(req.branch)},
            {"block", std::to_string(req.block)},
            {"layer_slot", std::to_string(slot)},
            {"head", std::to_string(req.head)},
            {"scale", std::to_string(req.scale)},
            {"t_target", std::to_string(res.weights.rows())},
            {"t_source", std::to_string(res.weights.cols())}});
  return res;
}

}  // namespace mcmult

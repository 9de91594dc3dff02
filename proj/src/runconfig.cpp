#include "mcmult/runconfig.hpp"

#include <sstream>

#include "mcmult/io.hpp"

namespace mcmult {

namespace {

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' needs an integer, got '" + value +
                      "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' needs a nonnegative integer, got '" +
                      value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    return parse_double(value);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' needs a number, got '" + value +
                      "'");
  }
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string branches_to_string(const std::vector<BranchId>& branches) {
  std::string out;
  for (const auto& b : branches) {
    if (!out.empty()) out += ',';
    out += branch_name(b);
  }
  return out;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  // model
  if (key == "dim") model.dim = parse_int(key, value);
  else if (key == "heads") model.heads = parse_int(key, value);
  else if (key == "blocks") model.blocks = parse_int(key, value);
  else if (key == "layers") model.layers_per_block = parse_int(key, value);
  else if (key == "variant") model.variant = variant_from_name(value);
  else if (key == "conv_kernel_l") model.conv_kernel[0] = parse_int(key, value);
  else if (key == "conv_kernel_v") model.conv_kernel[1] = parse_int(key, value);
  else if (key == "conv_kernel_a") model.conv_kernel[2] = parse_int(key, value);
  else if (key == "attn_dropout") model.attn_dropout = parse_real(key, value);
  else if (key == "fc_dropout") model.fc_dropout = parse_real(key, value);
  else if (key == "branches") {
    std::vector<BranchId> parsed;
    for (const std::string& tok : split_list(value)) {
      parsed.push_back(branch_from_name(tok));
    }
    if (parsed.empty()) throw ConfigError("key 'branches' needs a list");
    model.branches = std::move(parsed);
  } else if (key == "num_classes") {
    model.num_classes = parse_int(key, value);
    synth.num_classes = model.num_classes;
  } else if (key == "prediction_layers") {
    model.prediction_layers = parse_int(key, value);
  }
  // training
  else if (key == "epochs") trainer.epochs = parse_int(key, value);
  else if (key == "batch_size") trainer.batch_size = parse_int(key, value);
  else if (key == "learning_rate") trainer.learning_rate = parse_real(key, value);
  else if (key == "clip_norm") trainer.clip_norm = parse_real(key, value);
  else if (key == "loss") {
    trainer.loss = loss_from_name(value);
    model.regression_head = trainer.loss == LossKind::L1Regression;
  } else if (key == "patience") trainer.patience = parse_int(key, value);
  else if (key == "seed") {
    seed = parse_u64(key, value);
    trainer.seed = seed;
    synth.seed = seed;
  }
  // synthetic data
  else if (key == "samples") synth.count = parse_int(key, value);
  else if (key == "snr") synth.snr = parse_real(key, value);
  else if (key == "dim_l") { synth.dim[0] = parse_int(key, value); model.input_dim[0] = synth.dim[0]; }
  else if (key == "dim_v") { synth.dim[1] = parse_int(key, value); model.input_dim[1] = synth.dim[1]; }
  else if (key == "dim_a") { synth.dim[2] = parse_int(key, value); model.input_dim[2] = synth.dim[2]; }
  else if (key == "len_min_l") synth.len_min[0] = parse_int(key, value);
  else if (key == "len_max_l") synth.len_max[0] = parse_int(key, value);
  else if (key == "len_min_v") synth.len_min[1] = parse_int(key, value);
  else if (key == "len_max_v") synth.len_max[1] = parse_int(key, value);
  else if (key == "len_min_a") synth.len_min[2] = parse_int(key, value);
  else if (key == "len_max_a") synth.len_max[2] = parse_int(key, value);
  else if (key == "split_train") ratios.train = parse_real(key, value);
  else if (key == "split_valid") ratios.valid = parse_real(key, value);
  else if (key == "split_test") ratios.test = parse_real(key, value);
  // paths
  else if (key == "data_dir") data_dir = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "params_file") params_file = value;
  // ablation
  else if (key == "axis") axis = axis_from_name(value);
  else if (key == "jobs") jobs = parse_int(key, value);
  else if (key == "seeds") {
    ablate_seeds.clear();
    for (const std::string& tok : split_list(value)) {
      ablate_seeds.push_back(parse_u64(key, tok));
    }
  }
  // attention export
  else if (key == "branch") export_branch = branch_from_name(value);
  else if (key == "block_index") block_index = parse_int(key, value);
  else if (key == "head_index") head_index = parse_int(key, value);
  else if (key == "scale_index") scale_index = parse_int(key, value);
  else if (key == "sample_index") sample_index = parse_int(key, value);
  else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::resolved() const {
  std::vector<std::pair<std::string, std::string>> kv;
  const auto put = [&kv](const std::string& k, const std::string& v) {
    kv.emplace_back(k, v);
  };
  put("dim", std::to_string(model.dim));
  put("heads", std::to_string(model.heads));
  put("blocks", std::to_string(model.blocks));
  put("layers", std::to_string(model.layers_per_block));
  put("variant", variant_name(model.variant));
  put("conv_kernel_l", std::to_string(model.conv_kernel[0]));
  put("conv_kernel_v", std::to_string(model.conv_kernel[1]));
  put("conv_kernel_a", std::to_string(model.conv_kernel[2]));
  put("attn_dropout", format_double(model.attn_dropout));
  put("fc_dropout", format_double(model.fc_dropout));
  put("branches", branches_to_string(model.branches));
  put("num_classes", std::to_string(model.num_classes));
  put("prediction_layers", std::to_string(model.prediction_layers));
  put("loss", loss_name(trainer.loss));
  put("epochs", std::to_string(trainer.epochs));
  put("batch_size", std::to_string(trainer.batch_size));
  put("learning_rate", format_double(trainer.learning_rate));
  put("clip_norm", format_double(trainer.clip_norm));
  put("patience", std::to_string(trainer.patience));
  put("seed", std::to_string(seed));
  put("samples", std::to_string(synth.count));
  put("snr", format_double(synth.snr));
  put("dim_l", std::to_string(synth.dim[0]));
  put("dim_v", std::to_string(synth.dim[1]));
  put("dim_a", std::to_string(synth.dim[2]));
  put("len_min_l", std::to_string(synth.len_min[0]));
  put("len_max_l", std::to_string(synth.len_max[0]));
  put("len_min_v", std::to_string(synth.len_min[1]));
  put("len_max_v", std::to_string(synth.len_max[1]));
  put("len_min_a", std::to_string(synth.len_min[2]));
  put("len_max_a", std::to_string(synth.len_max[2]));
  put("split_train", format_double(ratios.train));
  put("split_valid", format_double(ratios.valid));
  put("split_test", format_double(ratios.test));
  put("data_dir", data_dir.string());
  put("out_dir", out_dir.string());
  if (params_file) put("params_file", params_file->string());
  put("axis", axis_name(axis));
  put("jobs", std::to_string(jobs));
  if (!ablate_seeds.empty()) {
    std::string s;
    for (std::uint64_t v : ablate_seeds) {
      if (!s.empty()) s += ',';
      s += std::to_string(v);
    }
    put("seeds", s);
  }
  put("branch", branch_name(export_branch));
  put("block_index", std::to_string(block_index));
  put("head_index", std::to_string(head_index));
  put("scale_index", std::to_string(scale_index));
  put("sample_index", std::to_string(sample_index));
  return kv;
}

void RunConfig::validate() const {
  model.validate();
  trainer.validate();
  synth.validate();
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if ((trainer.loss == LossKind::L1Regression) != model.regression_head) {
    throw ConfigError("loss kind and head kind disagree");
  }
}

RunConfig RunConfig::load(
    const std::optional<std::filesystem::path>& file,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig rc;
  if (file) {
    if (!std::filesystem::exists(*file)) {
      throw ConfigError("config file not found: " + file->string());
    }
    for (const auto& [k, v] : read_kv(*file)) rc.apply(k, v);
  }
  for (const auto& [k, v] : overrides) rc.apply(k, v);
  rc.validate();
  return rc;
}

}  // namespace mcmult

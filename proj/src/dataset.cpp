#include "mcmult/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mcmult/io.hpp"
#include "mcmult/metrics.hpp"

namespace mcmult {

namespace {

// Marginal probability that a given modality carries a wrong-class template.
// At most one modality per sample is corrupted, so the three-way majority
// vote always recovers the latent class while any single stream tops out at
// 1 - kCorruptProb.
constexpr double kCorruptProb = 0.3;
constexpr int kMotifWidth = 4;

int motif_width_for(const SyntheticSpec& spec, int modality) {
  return std::min(kMotifWidth, spec.len_min[modality]);
}

}  // namespace

double label_score(const Label& label, int num_classes) {
  return label.is_score ? label.score : class_to_score(label.cls, num_classes);
}

void SyntheticSpec::validate() const {
  if (count < 1) throw ConfigError("sample count must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (snr < 0.0) throw ConfigError("snr must be nonnegative");
  for (int m = 0; m < 3; ++m) {
    if (dim[m] < 1) throw ConfigError("modality dims must be >= 1");
    if (len_min[m] < 1 || len_max[m] < len_min[m]) {
      throw ConfigError("bad length range for modality " +
                        std::string(1, modality_letter(kModalities[m])));
    }
  }
}

std::vector<MultimodalSample> generate_synthetic(
    const SyntheticSpec& spec, std::vector<PlantedMotif>* planted,
    MotifBank* bank) {
  spec.validate();
  Rng rng(spec.seed);

  MotifBank local_bank;
  for (int m = 0; m < 3; ++m) {
    const int w = motif_width_for(spec, m);
    for (int c = 0; c < spec.num_classes; ++c) {
      Matrix motif(w, spec.dim[m]);
      for (Index i = 0; i < motif.rows(); ++i) {
        for (Index j = 0; j < motif.cols(); ++j) {
          motif(i, j) = normal01(rng);
        }
      }
      local_bank.motifs[m].push_back(std::move(motif));
    }
  }

  std::vector<MultimodalSample> samples;
  samples.reserve(spec.count);
  if (planted != nullptr) {
    planted->clear();
    planted->reserve(spec.count);
  }
  for (int s = 0; s < spec.count; ++s) {
    const int cls = static_cast<int>(uniform_int(rng, 0, spec.num_classes - 1));
    // u < 0.9 picks the corrupted modality; u >= 0.9 leaves all clean.
    const double u = uniform01(rng);
    int corrupted = -1;
    if (u < 3.0 * kCorruptProb) {
      corrupted = static_cast<int>(u / kCorruptProb);
    }
    MultimodalSample sample;
    PlantedMotif info;
    info.latent_class = cls;
    sample.label = Label{false, cls, 0.0};
    for (int m = 0; m < 3; ++m) {
      const int t_len =
          static_cast<int>(uniform_int(rng, spec.len_min[m], spec.len_max[m]));
      Matrix data(t_len, spec.dim[m]);
      for (Index i = 0; i < data.rows(); ++i) {
        for (Index j = 0; j < data.cols(); ++j) {
          data(i, j) = normal01(rng);
        }
      }
      int shown = cls;
      if (m == corrupted) {
        shown = static_cast<int>(uniform_int(rng, 0, spec.num_classes - 2));
        if (shown >= cls) ++shown;
      }
      const int w = motif_width_for(spec, m);
      const int start = static_cast<int>(uniform_int(rng, 0, t_len - w));
      data.middleRows(start, w) += spec.snr * local_bank.motifs[m][shown];
      sample.streams[m] = ModalitySequence{kModalities[m], std::move(data)};
      info.motif_id[m] = shown;
      info.start[m] = start;
      info.width[m] = w;
    }
    samples.push_back(std::move(sample));
    if (planted != nullptr) planted->push_back(info);
  }
  if (bank != nullptr) *bank = std::move(local_bank);
  return samples;
}

// ---- persistence ------------------------------------------------------------

namespace fs = std::filesystem;

void save_dataset(const std::vector<MultimodalSample>& samples,
                  const fs::path& dir) {
  if (samples.empty()) throw ContractError("refusing to save an empty dataset");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());

  const bool is_score = samples.front().label.is_score;
  int num_classes = 2;
  if (!is_score) {
    for (const auto& s : samples) {
      num_classes = std::max(num_classes, s.label.cls + 1);
    }
  }
  std::vector<std::pair<std::string, std::string>> manifest;
  manifest.emplace_back("samples", std::to_string(samples.size()));
  manifest.emplace_back("classes", std::to_string(num_classes));
  manifest.emplace_back("label_kind", is_score ? "score" : "class");
  manifest.emplace_back("dim_l",
                        std::to_string(samples.front().streams[0].dim()));
  manifest.emplace_back("dim_v",
                        std::to_string(samples.front().streams[1].dim()));
  manifest.emplace_back("dim_a",
                        std::to_string(samples.front().streams[2].dim()));
  write_kv(dir / "manifest", manifest);

  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw IoError("cannot write " + (dir / "labels.csv").string());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.label.is_score != is_score) {
      throw ContractError("mixed label kinds in one dataset");
    }
    labels << i << ','
           << (is_score ? format_double(s.label.score)
                        : std::to_string(s.label.cls))
           << '\n';
    for (int m = 0; m < 3; ++m) {
      const std::string name = std::to_string(i) + "." +
                               modality_letter(kModalities[m]) + ".csv";
      write_csv_matrix(dir / name, s.streams[m].data);
    }
  }
}

std::vector<MultimodalSample> load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest";
  if (!fs::exists(manifest_path)) {
    throw IoError("missing manifest in " + dir.string());
  }
  std::size_t count = 0;
  int num_classes = 0;
  bool is_score = false;
  std::array<Index, 3> dims = {0, 0, 0};
  for (const auto& [k, v] : read_kv(manifest_path)) {
    if (k == "samples") count = std::stoul(v);
    else if (k == "classes") num_classes = std::stoi(v);
    else if (k == "label_kind") is_score = (v == "score");
    else if (k == "dim_l") dims[0] = std::stol(v);
    else if (k == "dim_v") dims[1] = std::stol(v);
    else if (k == "dim_a") dims[2] = std::stol(v);
    else throw IoError("unknown manifest key '" + k + "'");
  }
  if (count == 0 || num_classes < 2) {
    throw IoError("manifest is incomplete in " + dir.string());
  }

  std::ifstream labels(dir / "labels.csv");
  if (!labels) throw IoError("missing labels.csv in " + dir.string());
  std::vector<Label> parsed(count);
  std::vector<bool> seen(count, false);
  std::string line;
  std::size_t label_rows = 0;
  while (std::getline(labels, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw IoError("bad labels.csv row: '" + line + "'");
    }
    const std::size_t idx = std::stoul(line.substr(0, comma));
    if (idx >= count) {
      throw IoError("label index " + std::to_string(idx) +
                    " exceeds manifest sample count");
    }
    Label lab;
    lab.is_score = is_score;
    if (is_score) {
      lab.score = parse_double(line.substr(comma + 1));
      if (!std::isfinite(lab.score) || lab.score < -3.0 || lab.score > 3.0) {
        throw IoError("score label out of [-3,3] for sample " +
                      std::to_string(idx));
      }
    } else {
      lab.cls = std::stoi(line.substr(comma + 1));
      if (lab.cls < 0 || lab.cls >= num_classes) {
        throw IoError("class label out of range for sample " +
                      std::to_string(idx));
      }
    }
    parsed[idx] = lab;
    seen[idx] = true;
    ++label_rows;
  }
  if (label_rows != count) {
    throw IoError("labels.csv has " + std::to_string(label_rows) +
                  " rows, manifest says " + std::to_string(count));
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!seen[i]) throw IoError("missing label for sample " + std::to_string(i));
  }

  std::vector<MultimodalSample> samples(count);
  for (std::size_t i = 0; i < count; ++i) {
    samples[i].label = parsed[i];
    for (int m = 0; m < 3; ++m) {
      const fs::path file = dir / (std::to_string(i) + "." +
                                   modality_letter(kModalities[m]) + ".csv");
      if (!fs::exists(file)) {
        throw IoError("missing sample file " + file.string());
      }
      Matrix data = read_csv_matrix(file);
      if (data.cols() != dims[m]) {
        throw IoError("sample " + std::to_string(i) + " modality " +
                      modality_letter(kModalities[m]) + " has dim " +
                      std::to_string(data.cols()) + ", manifest says " +
                      std::to_string(dims[m]));
      }
      samples[i].streams[m] = ModalitySequence{kModalities[m], std::move(data)};
    }
  }
  return samples;
}

// ---- batching / splitting -----------------------------------------------------

ModelInput to_model_input(const MultimodalSample& sample) {
  ModelInput in;
  for (int m = 0; m < 3; ++m) in.data[m] = sample.streams[m].data;
  return in;
}

std::vector<Batch> batch_and_pad(const std::vector<MultimodalSample>& samples,
                                 int batch_size, std::uint64_t seed) {
  if (samples.empty()) throw ContractError("cannot batch an empty sample list");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1],
              order[static_cast<std::size_t>(uniform_int(rng, 0, i - 1))]);
  }
  std::vector<Batch> batches;
  for (std::size_t at = 0; at < order.size(); at += batch_size) {
    const std::size_t end = std::min(order.size(), at + batch_size);
    Batch batch;
    std::array<Index, 3> t_max = {0, 0, 0};
    for (std::size_t i = at; i < end; ++i) {
      for (int m = 0; m < 3; ++m) {
        t_max[m] = std::max(t_max[m], samples[order[i]].streams[m].length());
      }
    }
    for (std::size_t i = at; i < end; ++i) {
      const MultimodalSample& s = samples[order[i]];
      Batch::Item item;
      item.label = s.label;
      for (int m = 0; m < 3; ++m) {
        const Matrix& src = s.streams[m].data;
        Matrix padded = Matrix::Zero(t_max[m], src.cols());
        padded.topRows(src.rows()) = src;
        BoolVec mask = BoolVec::Constant(t_max[m], false);
        mask.head(src.rows()) = true;
        item.input.data[m] = std::move(padded);
        item.input.mask[m] = std::move(mask);
      }
      batch.items.push_back(std::move(item));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

DatasetSplit split(const std::vector<MultimodalSample>& samples,
                   const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train <= 0.0 || ratios.valid <= 0.0 || ratios.test <= 0.0) {
    throw ConfigError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1],
              order[static_cast<std::size_t>(uniform_int(rng, 0, i - 1))]);
  }
  const std::size_t n = samples.size();
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(ratios.train * static_cast<double>(n)));
  std::size_t n_valid = static_cast<std::size_t>(
      std::llround(ratios.valid * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_valid = std::min(n_valid, n - n_train);
  DatasetSplit out;
  for (std::size_t i = 0; i < n; ++i) {
    const MultimodalSample& s = samples[order[i]];
    if (i < n_train) out.train.push_back(s);
    else if (i < n_train + n_valid) out.valid.push_back(s);
    else out.test.push_back(s);
  }
  return out;
}

}  // namespace mcmult

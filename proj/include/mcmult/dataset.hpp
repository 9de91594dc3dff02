#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "mcmult/config.hpp"
#include "mcmult/model.hpp"

namespace mcmult {

struct ModalitySequence {
  Modality kind = Modality::Text;
  Matrix data;  // T x d_m
  Index length() const { return data.rows(); }
  Index dim() const { return data.cols(); }
};

struct Label {
  bool is_score = false;
  int cls = 0;        // valid when !is_score
  double score = 0.0; // valid when is_score, in [-3,3]
};

struct MultimodalSample {
  std::array<ModalitySequence, 3> streams;  // indexed by modality
  Label label;
};

double label_score(const Label& label, int num_classes);

struct SyntheticSpec {
  int count = 2000;
  std::array<int, 3> dim = {8, 6, 5};
  std::array<int, 3> len_min = {8, 10, 9};
  std::array<int, 3> len_max = {14, 16, 15};
  double snr = 4.0;
  int num_classes = 2;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Where and what the generator planted in one sample.
struct PlantedMotif {
  int latent_class = 0;
  std::array<int, 3> motif_id{};  // class whose template each stream carries
  std::array<int, 3> start{};
  std::array<int, 3> width{};
};

/// The per-(modality, class) templates a dataset was built from.
struct MotifBank {
  std::array<std::vector<Matrix>, 3> motifs;  // [modality][class], w x d_m
};

/// Draws samples with a latent class and one class template planted per
/// modality at an independent random offset inside unit-variance noise.
/// In at most one modality per sample (probability 0.3 each) the planted
/// template belongs to a different class, so any one stream identifies the
/// label with probability 0.7 at best, while the majority over all three
/// always recovers it.
std::vector<MultimodalSample> generate_synthetic(
    const SyntheticSpec& spec, std::vector<PlantedMotif>* planted = nullptr,
    MotifBank* bank = nullptr);

void save_dataset(const std::vector<MultimodalSample>& samples,
                  const std::filesystem::path& dir);
std::vector<MultimodalSample> load_dataset(const std::filesystem::path& dir);

/// One padded batch; every item is padded to the batch max length per
/// modality, padded rows hold zeros and are masked out.
struct Batch {
  struct Item {
    ModelInput input;
    Label label;
  };
  std::vector<Item> items;
};

std::vector<Batch> batch_and_pad(const std::vector<MultimodalSample>& samples,
                                 int batch_size, std::uint64_t seed);

/// Unpadded model input with all-real masks.
ModelInput to_model_input(const MultimodalSample& sample);

struct SplitRatios {
  double train = 0.6;
  double valid = 0.2;
  double test = 0.2;
};

struct DatasetSplit {
  std::vector<MultimodalSample> train;
  std::vector<MultimodalSample> valid;
  std::vector<MultimodalSample> test;
};

DatasetSplit split(const std::vector<MultimodalSample>& samples,
                   const SplitRatios& ratios, std::uint64_t seed);

}  // namespace mcmult

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "mate/config.hpp"
#include "mate/dataio.hpp"
#include "mate/model.hpp"
#include "mate/objective.hpp"

namespace mate {

namespace fs = std::filesystem;

struct TrainReport {
  std::vector<objective::LossBreakdown> log;  // one entry per executed step
  fs::path checkpoint;
  fs::path metrics_csv;
  double seconds = 0.0;
  int64_t first_step = 0;   // global step index of log[0]
  int64_t final_step = 0;   // steps completed overall
  int64_t total_steps = 0;  // steps in the full schedule
};

// Half-period cosine from lr_max at step 0 to lr_min at step total_steps - 1.
double cosine_lr(int64_t step, int64_t total_steps, double lr_max, double lr_min);

int64_t steps_per_epoch(std::size_t dataset_size, int batch_size);

// Windows visited in epoch `epoch`; depends only on (seed, epoch, n).
std::vector<int64_t> epoch_permutation(std::uint64_t seed, int64_t epoch, std::size_t n);

// Dataset converted to tensors once.
struct TensorDataset {
  std::vector<torch::Tensor> modalities;  // float [N, T, C]
  torch::Tensor labels;                   // int64 [N]
  int num_classes = 0;

  static TensorDataset from(const dataio::MultiModalDataset& data);
  int64_t size() const { return labels.size(0); }
  ModelShape shape() const;
};

struct Checkpoint {
  ExperimentConfig config;
  ModelShape shape;
  MateModel model{nullptr};
  int64_t step = 0;
};

// Builds a fresh model seeded from config.train.seed.
MateModel build_model(const ExperimentConfig& config, const ModelShape& shape);

// Reads a checkpoint written by train/resume. Raises CheckpointError.
Checkpoint load_checkpoint(const fs::path& path);

// Optimizes the model on `data`, writing run_dir/{config.toml, metrics.csv,
// checkpoint.pt}. Raises NumericError on a non-finite loss.
TrainReport train(const ExperimentConfig& config, const dataio::MultiModalDataset& data, const fs::path& run_dir);

// Continues from a checkpoint with optional "key=value" overrides. Model
// dimensions must agree with the checkpoint.
TrainReport resume(const fs::path& checkpoint, const std::vector<std::string>& overrides,
                   const dataio::MultiModalDataset& data, const fs::path& run_dir);

// Posterior means over a whole dataset in eval mode, on CPU.
LatentMeans encode_dataset(MateModel& model, const dataio::MultiModalDataset& data, int batch_size = 256);
// Predicted classes from posterior means.
std::vector<int> predict_dataset(MateModel& model, const dataio::MultiModalDataset& data, int batch_size = 256);

}  // namespace mate

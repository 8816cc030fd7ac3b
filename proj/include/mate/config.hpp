#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mate/synthgen.hpp"
#include "mate/toml.hpp"

namespace mate {

struct ModelConfig {
  int n_c = 4;
  int n_s = 4;
  int cnn_channels = 150;
  int kernel_size = 5;
  int gru_hidden = 300;
  // Hidden widths of the per-modality decoder MLP; empty means a single dense layer.
  std::vector<int> decoder_hidden = {128};
  int prior_hidden = 128;
  int prior_layers = 3;
  int classifier_hidden = 128;
  std::string fusion = "first";  // "first" or "mean"
  double initial_prior_std = 1.0;
};

// Weights of the total loss plus ablation switches.
struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  bool drop_private_kl = false;      // MATE-p
  bool drop_shared_kl = false;       // MATE-s
  bool drop_reconstruction = false;  // MATE-r
  bool drop_alignment = false;       // MATE-c
  // Replaces the private flow priors with an isotropic Gaussian prior and a
  // cross-correlation penalty between shared and specific latents.
  bool orthogonal_baseline = false;
  double orthogonality_weight = 1.0;
  double temperature = 0.0;  // optional divisor on cosine similarity; 0 disables
  bool task_loss = true;     // include L_y during representation learning
};

struct TrainConfig {
  std::string data_path;
  std::string optimizer = "adamw";
  double lr_max = 1e-4;
  double lr_min = 1e-6;
  double weight_decay = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 64;
  int epochs = 100;
  int window_length = 0;  // 0: take T from the dataset
  std::uint64_t seed = 0;
  int mc_samples = 1;
  double grad_clip = 5.0;
  int max_steps = 0;  // stop this invocation after this many steps; 0 = no limit
  int log_every = 50;
  // beta ramps linearly from 0 over this many epochs; 0 = constant beta
  double kl_warmup_epochs = 0.0;
};

struct EvalConfig {
  std::string test_data_path;
  double test_fraction = 0.2;  // used when no separate test set is given
  int knn_k = 5;
  std::string correlation = "pearson";
  std::vector<double> ratios = {1.0, 0.1, 0.05, 0.01};
  double r2_lambda = 1e-3;
  int r2_max_train = 2000;
  double tsne_perplexity = 30.0;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  synthgen::GenerationSpec generation;
  ModelConfig model;
  LossWeights loss;
  TrainConfig train;
  EvalConfig eval;
};

toml::FlatTable to_table(const ExperimentConfig& config);
// Strict: unknown keys and type mismatches raise ConfigError naming the key.
void apply_table(ExperimentConfig& config, const toml::FlatTable& table);
// "key=value" overrides, e.g. "train.lr_max=1e-3".
void apply_override(ExperimentConfig& config, const std::string& assignment);
void validate(const ExperimentConfig& config);

std::string to_toml(const ExperimentConfig& config);
ExperimentConfig from_toml(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Ablation names: mate-p, mate-s, mate-r, mate-c, orthogonal.
void apply_ablation(LossWeights& weights, const std::string& name);

}  // namespace mate

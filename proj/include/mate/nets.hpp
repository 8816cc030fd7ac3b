#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

namespace mate::nets {

// Diagonal Gaussian parameters; both tensors share one shape.
struct PosteriorParams {
  torch::Tensor mean;
  torch::Tensor log_var;
};

struct EncoderOutput {
  PosteriorParams shared;    // [B, T, n_c]
  PosteriorParams specific;  // [B, T, n_s]
};

struct EncoderOptions {
  int obs_dim = 0;
  int window_length = 0;
  int n_c = 4;
  int n_s = 4;
  int cnn_channels = 150;
  int kernel_size = 5;
  int gru_hidden = 300;
};

// Two conv blocks over time (conv1d, batch-norm, ReLU), a unidirectional GRU
// returning every step, and linear shared/specific posterior heads.
class ModalityEncoderImpl : public torch::nn::Module {
 public:
  explicit ModalityEncoderImpl(const EncoderOptions& options);

  // x: [B, T, C]. Throws DimensionError when C or T disagree with the options.
  EncoderOutput forward(const torch::Tensor& x);

  // Per-step GRU states [B, T, gru_hidden] feeding both heads.
  torch::Tensor trunk(const torch::Tensor& x);

  const EncoderOptions& options() const { return options_; }
  torch::nn::Linear& shared_head() { return shared_head_; }
  torch::nn::Linear& specific_head() { return specific_head_; }

 private:
  EncoderOptions options_;
  torch::nn::Conv1d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm1d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::GRU gru_{nullptr};
  torch::nn::Linear shared_head_{nullptr}, specific_head_{nullptr};
};
TORCH_MODULE(ModalityEncoder);

// sample = mean + exp(0.5 * log_var) * noise
torch::Tensor reparameterize(const PosteriorParams& params, const torch::Tensor& noise);

enum class FusionStrategy { kFirst, kMean };
FusionStrategy parse_fusion(const std::string& name);

// Combines the per-modality shared samples into z^c.
torch::Tensor fuse_shared(const std::vector<torch::Tensor>& shared, FusionStrategy strategy = FusionStrategy::kFirst);

// concat(z_c, z_s) -> MLP (LeakyReLU hidden layers) -> [B, T, obs_dim].
class DecoderImpl : public torch::nn::Module {
 public:
  DecoderImpl(int n_c, int n_s, int obs_dim, const std::vector<int>& hidden);
  torch::Tensor forward(const torch::Tensor& z_c, const torch::Tensor& z_s);

  torch::nn::Sequential& layers() { return layers_; }

 private:
  int n_c_, n_s_;
  torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(Decoder);

// Mean over time of concat(z_c, z_s_1..M), then dense(GELU) and dense.
class ClassifierImpl : public torch::nn::Module {
 public:
  ClassifierImpl(int input_dim, int hidden, int num_classes);
  torch::Tensor forward(const torch::Tensor& z_c, const std::vector<torch::Tensor>& z_s);

  torch::nn::Linear& hidden_layer() { return hidden_; }
  torch::nn::Linear& output_layer() { return output_; }

 private:
  int input_dim_;
  torch::nn::Linear hidden_{nullptr}, output_{nullptr};
};
TORCH_MODULE(Classifier);

}  // namespace mate::nets

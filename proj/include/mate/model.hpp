#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "mate/config.hpp"
#include "mate/nets.hpp"
#include "mate/objective.hpp"
#include "mate/priors.hpp"

namespace mate {

// Shapes the model is built for; fixed by the training data.
struct ModelShape {
  std::vector<int> obs_dims;
  int window_length = 0;
  int num_classes = 0;
};

struct LatentMeans {
  torch::Tensor z_c;               // [B, T, n_c], fused posterior mean
  std::vector<torch::Tensor> z_s;  // [B, T, n_s] per modality
};

struct StepResult {
  objective::LossBreakdown breakdown;
  int64_t zero_norm_pairs = 0;
};

class MateModelImpl : public torch::nn::Module {
 public:
  MateModelImpl(const ModelConfig& model, const LossWeights& loss, const ModelShape& shape);

  // Loss breakdown of one batch. x: per-modality [B, T, C]; labels int64 [B].
  StepResult forward(const std::vector<torch::Tensor>& x, const torch::Tensor& labels, int mc_samples,
                     std::optional<at::Generator> generator = std::nullopt);

  // Posterior means without sampling; caller chooses train/eval mode.
  LatentMeans encode_means(const std::vector<torch::Tensor>& x);
  torch::Tensor classify_means(const LatentMeans& latents);

  // Multiplies beta for subsequent forward passes.
  void set_kl_scale(double scale) { kl_scale_ = scale; }

  const ModelConfig& config() const { return model_; }
  const ModelShape& shape() const { return shape_; }
  int num_modalities() const { return static_cast<int>(shape_.obs_dims.size()); }

  std::vector<nets::ModalityEncoder>& encoders() { return encoders_; }
  std::vector<nets::Decoder>& decoders() { return decoders_; }
  nets::Classifier& classifier() { return classifier_; }
  std::shared_ptr<priors::MlpResidual>& shared_prior() { return shared_prior_; }
  std::vector<std::shared_ptr<priors::MlpResidual>>& private_priors() { return private_priors_; }
  // Parameters of every prior network.
  std::vector<torch::Tensor> prior_parameters();

 private:
  nets::PosteriorParams fused_shared(const std::vector<nets::PosteriorParams>& per_modality) const;

  ModelConfig model_;
  LossWeights loss_;
  double kl_scale_ = 1.0;
  ModelShape shape_;
  nets::FusionStrategy fusion_;
  std::vector<nets::ModalityEncoder> encoders_;
  std::vector<nets::Decoder> decoders_;
  nets::Classifier classifier_{nullptr};
  std::shared_ptr<priors::MlpResidual> shared_prior_;
  std::vector<std::shared_ptr<priors::MlpResidual>> private_priors_;
};
TORCH_MODULE(MateModel);

}  // namespace mate

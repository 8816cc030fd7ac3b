#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "mate/config.hpp"
#include "mate/nets.hpp"

namespace mate::objective {

// Unit-variance Gaussian log-likelihood, summed over [T, C] per sample and
// averaged over the batch. Higher is better.
torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_hat);
// Sum over modalities.
torch::Tensor reconstruction_loss(const std::vector<torch::Tensor>& x, const std::vector<torch::Tensor>& x_hat);

// log q(z) of a factorized Gaussian, summed over every axis but the first.
// z may carry extra leading draws: z [S*B, ...] against params [B, ...].
torch::Tensor posterior_log_density(const nets::PosteriorParams& q, const torch::Tensor& z);

// Maps latent draws [P, ...] to per-draw log-densities [P].
using LogDensityFn = std::function<torch::Tensor(const torch::Tensor&)>;

struct KlEstimate {
  torch::Tensor value;          // scalar, mean over draws and batch
  double standard_error = 0.0;  // std of per-draw batch means / sqrt(S); 0 when S = 1
};

// E_q[log q(z) - log p(z)] from `samples` reparameterized draws. The prior is
// called once on the stacked draws [S*B, ...] (draw-major).
KlEstimate kl_divergence_mc(const nets::PosteriorParams& q, const LogDensityFn& prior_log_density, int samples,
                            std::optional<at::Generator> generator = std::nullopt);

// KL from draws already taken: per-sample log q minus log p, reshaped to [S, B].
KlEstimate kl_from_log_densities(const torch::Tensor& log_q, const torch::Tensor& log_p, int samples);

struct AlignmentResult {
  torch::Tensor loss;          // scalar in [0, 2] (before temperature)
  int64_t zero_norm_count = 0;  // sample pairs whose cosine was forced to 0
};

// Mean over modality pairs and samples of 1 - cos(z^{c_i}, z^{c_j}) on the
// flattened [T * n_c] vectors. A positive temperature divides the result.
AlignmentResult shared_alignment_loss(const std::vector<torch::Tensor>& shared, double temperature = 0.0);

// Mean cross-entropy; labels int64 [B]. Out-of-range labels raise DataError.
torch::Tensor task_loss(const torch::Tensor& logits, const torch::Tensor& labels);

// Mean squared Pearson correlation between the columns of z_c and z_s,
// pooled over batch and time.
torch::Tensor cross_correlation_penalty(const torch::Tensor& z_c, const torch::Tensor& z_s);

// Component losses; undefined tensors mark terms that were not computed.
struct LossTerms {
  torch::Tensor L_r;
  torch::Tensor L_c;
  std::vector<torch::Tensor> L_s;
  torch::Tensor L_align;
  torch::Tensor L_y;
  torch::Tensor L_orth;
};

struct LossBreakdown {
  double L_r = 0, L_c = 0;
  std::vector<double> L_s;
  double L_align = 0, L_y = 0, L_orth = 0;
  double total = 0;
  torch::Tensor total_tensor;  // differentiable total
};

// total = -alpha L_r + beta (L_c + sum L_s) + gamma L_align + L_y (+ w L_orth).
// Ablated terms contribute 0 and are left out of the graph.
LossBreakdown total_loss(const LossTerms& terms, const LossWeights& weights, int num_modalities);

std::string csv_header(int num_modalities, bool with_orthogonality);
std::string csv_row(int64_t step, const LossBreakdown& breakdown, bool with_orthogonality);

}  // namespace mate::objective

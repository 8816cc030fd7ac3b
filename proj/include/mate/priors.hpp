#pragma once

#include <cstdint>
#include <memory>

#include <torch/torch.h>

namespace mate::priors {

// Set of per-dimension inverse transition functions eps_i = r_i(z_{t,i}, context).
// r_i reads its own current coordinate and the context only, so the map
// (context, z_t) -> (context, eps_t) has a lower-triangular Jacobian whose
// current block is diagonal.
class ResidualNetwork : public torch::nn::Module {
 public:
  ResidualNetwork(int dims, int context_dim) : dims_(dims), context_dim_(context_dim) {}

  // z_t: [P, dims], context: [P, context_dim] -> eps: [P, dims]
  virtual torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& context) = 0;

  int dims() const { return dims_; }
  int context_dim() const { return context_dim_; }

 private:
  int dims_;
  int context_dim_;
};

// One LeakyReLU MLP per latent dimension with input (z_{t,i}, context),
// evaluated for all dimensions at once with batched matrix products.
class MlpResidual : public ResidualNetwork {
 public:
  MlpResidual(int dims, int context_dim, int hidden = 128, int layers = 3, double negative_slope = 0.2);
  torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& context) override;

 private:
  double slope_;
  torch::Tensor w_in_, b_in_, w_out_, b_out_;
  std::vector<torch::Tensor> w_hidden_, b_hidden_;
};

// eps_i = slope_i * z_{t,i} + context . coupling_i + bias_i
class AffineResidual : public ResidualNetwork {
 public:
  AffineResidual(torch::Tensor slope, torch::Tensor coupling, torch::Tensor bias);
  torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& context) override;

 private:
  torch::Tensor slope_, coupling_, bias_;
};

// Strictly increasing in z_{t,i} for every context:
// eps_i = e^{a_i} z + sum_k e^{v_ik} tanh(e^{w_ik} z + context . U_ik + c_ik) + context . C_i
class MonotoneResidual : public ResidualNetwork {
 public:
  MonotoneResidual(int dims, int context_dim, int units, std::uint64_t seed);
  torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& context) override;

 private:
  torch::Tensor a_, v_, w_, u_, c_, coupling_;
};

struct ResidualEvaluation {
  torch::Tensor eps;   // [P, dims]
  torch::Tensor diag;  // d eps_i / d z_{t,i}, [P, dims]
};

// Evaluates the residual and its Jacobian diagonal by reverse-mode
// differentiation of sum(eps) with respect to z_t (valid because the current
// block is diagonal). The graph is retained for training when grad mode is on.
ResidualEvaluation jacobian_diag(ResidualNetwork& residual, const torch::Tensor& z_t, const torch::Tensor& context);

// Per-sample log-density of a latent trajectory, [B] each.
struct PriorLogDensity {
  torch::Tensor total;
  torch::Tensor noise_term;    // sum_{t>=2, i} log N(eps_hat; 0, 1)
  torch::Tensor jac_term;      // sum_{t>=2, i} log(|d r_i / d z_{t,i}| + 1e-8)
  torch::Tensor initial_term;  // sum_i log N(z_{1,i}; 0, initial_std^2)
};

inline constexpr double kLogJacobianFloor = 1e-8;

// z: [B, T, n], context: [B, T-1, k] aligned with steps 2..T.
PriorLogDensity flow_log_density(ResidualNetwork& residual, const torch::Tensor& z, const torch::Tensor& context,
                                 double initial_std = 1.0);

// Context z^c_{t-1}. Throws UsageError when T < 2.
PriorLogDensity shared_prior_log_density(ResidualNetwork& residual, const torch::Tensor& z_c,
                                         double initial_std = 1.0);

// Context (z^{s_m}_{t-1}, z^c_t).
PriorLogDensity private_prior_log_density(ResidualNetwork& residual, const torch::Tensor& z_s,
                                          const torch::Tensor& z_c, double initial_std = 1.0);

// log N(x; 0, std^2) elementwise.
torch::Tensor gaussian_log_prob(const torch::Tensor& x, double std = 1.0);

}  // namespace mate::priors

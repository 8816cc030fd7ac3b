#include "mate/priors.hpp"

#include <cmath>
#include <numbers>

#include <ATen/CPUGeneratorImpl.h>

#include "mate/errors.hpp"

namespace mate::priors {

namespace {

torch::Tensor uniform_init(std::vector<int64_t> shape, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return torch::empty(shape).uniform_(-bound, bound);
}

void check_inputs(const ResidualNetwork& r, const torch::Tensor& z_t, const torch::Tensor& context) {
  if (z_t.dim() != 2 || z_t.size(1) != r.dims() || context.dim() != 2 || context.size(1) != r.context_dim() ||
      context.size(0) != z_t.size(0))
    throw DimensionError("residual network expects z_t [P, " + std::to_string(r.dims()) + "] and context [P, " +
                         std::to_string(r.context_dim()) + "]");
}

}  // namespace

MlpResidual::MlpResidual(int dims, int context_dim, int hidden, int layers, double negative_slope)
    : ResidualNetwork(dims, context_dim), slope_(negative_slope) {
  const int in = 1 + context_dim;
  w_in_ = register_parameter("w_in", uniform_init({dims, in, hidden}, in));
  b_in_ = register_parameter("b_in", uniform_init({dims, 1, hidden}, in));
  for (int l = 1; l < layers; ++l) {
    w_hidden_.push_back(register_parameter("w_h" + std::to_string(l), uniform_init({dims, hidden, hidden}, hidden)));
    b_hidden_.push_back(register_parameter("b_h" + std::to_string(l), uniform_init({dims, 1, hidden}, hidden)));
  }
  w_out_ = register_parameter("w_out", uniform_init({dims, hidden, 1}, hidden));
  b_out_ = register_parameter("b_out", uniform_init({dims, 1, 1}, hidden));
}

torch::Tensor MlpResidual::forward(const torch::Tensor& z_t, const torch::Tensor& context) {
  check_inputs(*this, z_t, context);
  const int64_t points = z_t.size(0);
  // [dims, P, 1 + k]: row i of block d is (z_{t,d}, context_i).
  auto input = torch::cat({z_t.t().unsqueeze(-1), context.unsqueeze(0).expand({dims(), points, context_dim()})}, -1);
  auto h = torch::leaky_relu(torch::baddbmm(b_in_, input, w_in_), slope_);
  for (std::size_t l = 0; l < w_hidden_.size(); ++l)
    h = torch::leaky_relu(torch::baddbmm(b_hidden_[l], h, w_hidden_[l]), slope_);
  return torch::baddbmm(b_out_, h, w_out_).squeeze(-1).t();
}

AffineResidual::AffineResidual(torch::Tensor slope, torch::Tensor coupling, torch::Tensor bias)
    : ResidualNetwork(static_cast<int>(slope.size(0)), static_cast<int>(coupling.size(1))) {
  slope_ = register_parameter("slope", std::move(slope));
  coupling_ = register_parameter("coupling", std::move(coupling));
  bias_ = register_parameter("bias", std::move(bias));
}

torch::Tensor AffineResidual::forward(const torch::Tensor& z_t, const torch::Tensor& context) {
  check_inputs(*this, z_t, context);
  return z_t * slope_ + torch::matmul(context, coupling_.t()) + bias_;
}

MonotoneResidual::MonotoneResidual(int dims, int context_dim, int units, std::uint64_t seed)
    : ResidualNetwork(dims, context_dim) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto randn = [&](std::vector<int64_t> shape, double scale) {
    return torch::randn(shape, gen, torch::kFloat32) * scale;
  };
  a_ = register_parameter("a", randn({dims}, 0.3));
  v_ = register_parameter("v", randn({dims, units}, 0.5));
  w_ = register_parameter("w", randn({dims, units}, 0.5));
  u_ = register_parameter("u", randn({dims, units, std::max(context_dim, 1)}, 0.5).narrow(2, 0, context_dim).clone());
  c_ = register_parameter("c", randn({dims, units}, 0.5));
  coupling_ = register_parameter("coupling", randn({dims, std::max(context_dim, 1)}, 0.5).narrow(1, 0, context_dim).clone());
}

torch::Tensor MonotoneResidual::forward(const torch::Tensor& z_t, const torch::Tensor& context) {
  check_inputs(*this, z_t, context);
  // pre[p, i, k] = e^{w_ik} z_{p,i} + context_p . U_ik + c_ik
  auto pre = z_t.unsqueeze(-1) * torch::exp(w_) + torch::einsum("pj,ikj->pik", {context, u_}) + c_;
  auto bumps = (torch::exp(v_) * torch::tanh(pre)).sum(-1);
  return torch::exp(a_) * z_t + bumps + torch::matmul(context, coupling_.t());
}

ResidualEvaluation jacobian_diag(ResidualNetwork& residual, const torch::Tensor& z_t, const torch::Tensor& context) {
  const bool keep_graph = torch::GradMode::is_enabled();
  torch::AutoGradMode enable(true);
  torch::Tensor input = z_t;
  if (!keep_graph || !z_t.requires_grad()) input = z_t.detach().requires_grad_(true);
  torch::Tensor eps = residual.forward(input, context);
  auto grads = torch::autograd::grad({eps.sum()}, {input}, /*grad_outputs=*/{}, /*retain_graph=*/true,
                                     /*create_graph=*/keep_graph, /*allow_unused=*/true);
  torch::Tensor diag = grads[0].defined() ? grads[0] : torch::zeros_like(input);
  if (!keep_graph) {
    eps = eps.detach();
    diag = diag.detach();
  }
  return {eps, diag};
}

torch::Tensor gaussian_log_prob(const torch::Tensor& x, double std) {
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(std);
  return -0.5 * (x / std).pow(2) + log_norm;
}

PriorLogDensity flow_log_density(ResidualNetwork& residual, const torch::Tensor& z, const torch::Tensor& context,
                                 double initial_std) {
  if (z.dim() != 3) throw DimensionError("prior expects z of shape [B, T, n]");
  const int64_t batch = z.size(0), steps = z.size(1), n = z.size(2);
  if (steps < 2) throw UsageError("flow prior needs T >= 2, got T = " + std::to_string(steps));
  if (context.dim() != 3 || context.size(0) != batch || context.size(1) != steps - 1)
    throw DimensionError("prior context must be [B, T-1, k]");

  const auto z_t = z.narrow(1, 1, steps - 1).reshape({batch * (steps - 1), n});
  const auto ctx = context.reshape({batch * (steps - 1), context.size(2)});
  const ResidualEvaluation ev = jacobian_diag(residual, z_t, ctx);

  PriorLogDensity out;
  out.noise_term = gaussian_log_prob(ev.eps).reshape({batch, -1}).sum(1);
  out.jac_term = torch::log(ev.diag.abs() + kLogJacobianFloor).reshape({batch, -1}).sum(1);
  out.initial_term = gaussian_log_prob(z.select(1, 0), initial_std).sum(1);
  out.total = out.initial_term + out.noise_term + out.jac_term;
  return out;
}

PriorLogDensity shared_prior_log_density(ResidualNetwork& residual, const torch::Tensor& z_c, double initial_std) {
  if (z_c.dim() != 3 || z_c.size(1) < 2)
    throw UsageError("shared prior needs z_c of shape [B, T, n_c] with T >= 2");
  return flow_log_density(residual, z_c, z_c.narrow(1, 0, z_c.size(1) - 1), initial_std);
}

PriorLogDensity private_prior_log_density(ResidualNetwork& residual, const torch::Tensor& z_s,
                                          const torch::Tensor& z_c, double initial_std) {
  if (z_s.dim() != 3 || z_s.size(1) < 2) throw UsageError("private prior needs z_s of shape [B, T, n_s] with T >= 2");
  if (z_c.dim() != 3 || z_c.size(0) != z_s.size(0) || z_c.size(1) != z_s.size(1))
    throw DimensionError("private prior needs z_s and z_c with matching B and T");
  const int64_t steps = z_s.size(1);
  const auto context = torch::cat({z_s.narrow(1, 0, steps - 1), z_c.narrow(1, 1, steps - 1)}, -1);
  return flow_log_density(residual, z_s, context, initial_std);
}

}  // namespace mate::priors

#include "mate/objective.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "mate/errors.hpp"

namespace mate::objective {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double scalar(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

}  // namespace

torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_hat) {
  if (!x.sizes().equals(x_hat.sizes())) throw DimensionError("reconstruction_loss: shape mismatch");
  const auto per_element = -0.5 * (x - x_hat).pow(2) - kHalfLog2Pi;
  return per_element.reshape({x.size(0), -1}).sum(1).mean();
}

torch::Tensor reconstruction_loss(const std::vector<torch::Tensor>& x, const std::vector<torch::Tensor>& x_hat) {
  if (x.size() != x_hat.size() || x.empty()) throw DimensionError("reconstruction_loss: modality count mismatch");
  auto total = reconstruction_loss(x[0], x_hat[0]);
  for (std::size_t m = 1; m < x.size(); ++m) total = total + reconstruction_loss(x[m], x_hat[m]);
  return total;
}

torch::Tensor posterior_log_density(const nets::PosteriorParams& q, const torch::Tensor& z) {
  const int64_t batch = q.mean.size(0);
  if (z.size(0) % batch != 0) throw DimensionError("posterior_log_density: draws not a multiple of the batch");
  const int64_t draws = z.size(0) / batch;
  std::vector<int64_t> rep(q.mean.dim(), 1);
  rep[0] = draws;
  const auto mean = q.mean.repeat(rep);
  const auto log_var = q.log_var.repeat(rep);
  const auto lp = -0.5 * (z - mean).pow(2) * torch::exp(-log_var) - 0.5 * log_var - kHalfLog2Pi;
  return lp.reshape({z.size(0), -1}).sum(1);
}

KlEstimate kl_from_log_densities(const torch::Tensor& log_q, const torch::Tensor& log_p, int samples) {
  const auto per_draw = (log_q - log_p).reshape({samples, -1}).mean(1);
  KlEstimate out;
  out.value = per_draw.mean();
  if (samples > 1) out.standard_error = per_draw.detach().std().item<double>() / std::sqrt(double(samples));
  return out;
}

KlEstimate kl_divergence_mc(const nets::PosteriorParams& q, const LogDensityFn& prior_log_density, int samples,
                            std::optional<at::Generator> generator) {
  if (samples < 1) throw UsageError("kl_divergence_mc: samples must be >= 1, got " + std::to_string(samples));
  std::vector<int64_t> shape{samples};
  for (auto s : q.mean.sizes()) shape.push_back(s);
  const auto noise = torch::randn(shape, generator, q.mean.options());
  const auto z = (q.mean.unsqueeze(0) + torch::exp(0.5 * q.log_var).unsqueeze(0) * noise).flatten(0, 1);
  return kl_from_log_densities(posterior_log_density(q, z), prior_log_density(z), samples);
}

AlignmentResult shared_alignment_loss(const std::vector<torch::Tensor>& shared, double temperature) {
  if (shared.size() < 2) throw UsageError("shared_alignment_loss needs at least 2 modalities");
  constexpr double kZeroNorm = 1e-12;
  AlignmentResult out;
  torch::Tensor sum;
  int pairs = 0;
  for (std::size_t i = 0; i < shared.size(); ++i) {
    for (std::size_t j = i + 1; j < shared.size(); ++j) {
      const auto a = shared[i].reshape({shared[i].size(0), -1});
      const auto b = shared[j].reshape({shared[j].size(0), -1});
      const auto na = a.norm(2, 1), nb = b.norm(2, 1);
      const auto degenerate = (na < kZeroNorm).logical_or(nb < kZeroNorm);
      out.zero_norm_count += degenerate.sum().item<int64_t>();
      const auto denom = torch::where(degenerate, torch::ones_like(na), na * nb);
      const auto cos = torch::where(degenerate, torch::zeros_like(na), (a * b).sum(1) / denom);
      const auto term = (1.0 - cos.clamp(-1.0, 1.0)).mean();
      sum = sum.defined() ? sum + term : term;
      ++pairs;
    }
  }
  out.loss = sum / pairs;
  if (temperature > 0) out.loss = out.loss / temperature;
  return out;
}

torch::Tensor task_loss(const torch::Tensor& logits, const torch::Tensor& labels) {
  const int64_t classes = logits.size(-1);
  if (labels.numel() > 0) {
    const int64_t lo = labels.min().item<int64_t>(), hi = labels.max().item<int64_t>();
    if (lo < 0 || hi >= classes)
      throw DataError("label " + std::to_string(lo < 0 ? lo : hi) + " outside [0, " + std::to_string(classes) + ")");
  }
  return torch::nn::functional::cross_entropy(logits, labels);
}

torch::Tensor cross_correlation_penalty(const torch::Tensor& z_c, const torch::Tensor& z_s) {
  auto standardize = [](const torch::Tensor& z) {
    const auto flat = z.reshape({-1, z.size(-1)});
    const auto centered = flat - flat.mean(0, true);
    return centered / (centered.pow(2).mean(0, true).sqrt() + 1e-6);
  };
  const auto a = standardize(z_c), b = standardize(z_s);
  const auto corr = torch::matmul(a.t(), b) / a.size(0);
  return corr.pow(2).mean();
}

LossBreakdown total_loss(const LossTerms& terms, const LossWeights& weights, int num_modalities) {
  LossBreakdown out;
  out.L_s.assign(num_modalities, 0.0);
  torch::Tensor total;
  auto add = [&](const torch::Tensor& t, double w) {
    if (!t.defined()) return;
    const auto weighted = w * t;
    total = total.defined() ? total + weighted : weighted;
  };
  if (!weights.drop_reconstruction && terms.L_r.defined()) {
    add(terms.L_r, -weights.alpha);
    out.L_r = scalar(terms.L_r);
  }
  if (!weights.drop_shared_kl && terms.L_c.defined()) {
    add(terms.L_c, weights.beta);
    out.L_c = scalar(terms.L_c);
  }
  if (!weights.drop_private_kl) {
    for (std::size_t m = 0; m < terms.L_s.size() && m < out.L_s.size(); ++m) {
      add(terms.L_s[m], weights.beta);
      out.L_s[m] = scalar(terms.L_s[m]);
    }
  }
  if (!weights.drop_alignment && terms.L_align.defined()) {
    add(terms.L_align, weights.gamma);
    out.L_align = scalar(terms.L_align);
  }
  if (terms.L_y.defined()) {
    add(terms.L_y, 1.0);
    out.L_y = scalar(terms.L_y);
  }
  if (weights.orthogonal_baseline && terms.L_orth.defined()) {
    add(terms.L_orth, weights.orthogonality_weight);
    out.L_orth = scalar(terms.L_orth);
  }
  out.total_tensor = total.defined() ? total : torch::zeros({});
  out.total = scalar(out.total_tensor);
  return out;
}

std::string csv_header(int num_modalities, bool with_orthogonality) {
  std::string h = "step,L_r,L_c";
  for (int m = 1; m <= num_modalities; ++m) h += ",L_s" + std::to_string(m);
  h += ",L_align,L_y";
  if (with_orthogonality) h += ",L_orth";
  return h + ",total";
}

std::string csv_row(int64_t step, const LossBreakdown& b, bool with_orthogonality) {
  std::string r = std::to_string(step) + "," + fmt(b.L_r) + "," + fmt(b.L_c);
  for (double s : b.L_s) r += "," + fmt(s);
  r += "," + fmt(b.L_align) + "," + fmt(b.L_y);
  if (with_orthogonality) r += "," + fmt(b.L_orth);
  return r + "," + fmt(b.total);
}

}  // namespace mate::objective

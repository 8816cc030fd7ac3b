#include "mate/model.hpp"

#include "mate/errors.hpp"

namespace mate {

MateModelImpl::MateModelImpl(const ModelConfig& model, const LossWeights& loss, const ModelShape& shape)
    : model_(model), loss_(loss), shape_(shape), fusion_(nets::parse_fusion(model.fusion)) {
  if (shape.obs_dims.empty()) throw UsageError("model needs at least one modality");
  const int M = num_modalities();
  for (int m = 0; m < M; ++m) {
    nets::EncoderOptions opts;
    opts.obs_dim = shape.obs_dims[m];
    opts.window_length = shape.window_length;
    opts.n_c = model.n_c;
    opts.n_s = model.n_s;
    opts.cnn_channels = model.cnn_channels;
    opts.kernel_size = model.kernel_size;
    opts.gru_hidden = model.gru_hidden;
    encoders_.push_back(register_module("encoder" + std::to_string(m), nets::ModalityEncoder(opts)));
    decoders_.push_back(register_module("decoder" + std::to_string(m),
                                        nets::Decoder(model.n_c, model.n_s, shape.obs_dims[m], model.decoder_hidden)));
  }
  classifier_ = register_module(
      "classifier", nets::Classifier(model.n_c + M * model.n_s, model.classifier_hidden, std::max(shape.num_classes, 1)));
  shared_prior_ = register_module(
      "shared_prior", std::make_shared<priors::MlpResidual>(model.n_c, model.n_c, model.prior_hidden, model.prior_layers));
  if (!loss.orthogonal_baseline) {
    for (int m = 0; m < M; ++m)
      private_priors_.push_back(register_module(
          "private_prior" + std::to_string(m),
          std::make_shared<priors::MlpResidual>(model.n_s, model.n_s + model.n_c, model.prior_hidden, model.prior_layers)));
  }
}

std::vector<torch::Tensor> MateModelImpl::prior_parameters() {
  auto params = shared_prior_->parameters();
  for (auto& p : private_priors_)
    for (auto& t : p->parameters()) params.push_back(t);
  return params;
}

nets::PosteriorParams MateModelImpl::fused_shared(const std::vector<nets::PosteriorParams>& per_modality) const {
  if (fusion_ == nets::FusionStrategy::kFirst) return per_modality.front();
  // Average of independent Gaussian draws: mean of means, variance sum / M^2.
  std::vector<torch::Tensor> means, vars;
  for (const auto& p : per_modality) {
    means.push_back(p.mean);
    vars.push_back(torch::exp(p.log_var));
  }
  const double M = static_cast<double>(per_modality.size());
  return {torch::stack(means).mean(0), torch::log(torch::stack(vars).sum(0) / (M * M))};
}

StepResult MateModelImpl::forward(const std::vector<torch::Tensor>& x, const torch::Tensor& labels, int mc_samples,
                                  std::optional<at::Generator> generator) {
  const int M = num_modalities();
  if (static_cast<int>(x.size()) != M)
    throw DimensionError("model expects " + std::to_string(M) + " modalities, got " + std::to_string(x.size()));
  if (mc_samples < 1) throw UsageError("mc_samples must be >= 1");
  const int S = mc_samples;

  std::vector<nets::PosteriorParams> q_shared, q_specific;
  for (int m = 0; m < M; ++m) {
    auto out = encoders_[m]->forward(x[m]);
    q_shared.push_back(out.shared);
    q_specific.push_back(out.specific);
  }

  // S draws per posterior, stacked draw-major: [S*B, T, n].
  auto draw = [&](const nets::PosteriorParams& q) {
    std::vector<int64_t> shape{S};
    for (auto s : q.mean.sizes()) shape.push_back(s);
    const auto noise = torch::randn(shape, generator, q.mean.options());
    return (q.mean.unsqueeze(0) + torch::exp(0.5 * q.log_var).unsqueeze(0) * noise).flatten(0, 1);
  };

  std::vector<torch::Tensor> z_shared_m;
  for (int m = 0; m < M; ++m) z_shared_m.push_back(nets::reparameterize(q_shared[m], torch::randn(q_shared[m].mean.sizes(), generator, q_shared[m].mean.options())));
  const auto q_c = fused_shared(q_shared);
  const int64_t B = x[0].size(0);

  torch::Tensor z_c_draws;
  if (fusion_ == nets::FusionStrategy::kFirst && S == 1) {
    z_c_draws = z_shared_m.front();
  } else if (fusion_ == nets::FusionStrategy::kMean && S == 1) {
    z_c_draws = nets::fuse_shared(z_shared_m, fusion_);
  } else {
    z_c_draws = draw(q_c);
  }
  const auto z_c = z_c_draws.narrow(0, 0, B);

  std::vector<torch::Tensor> z_s_draws, z_s;
  for (int m = 0; m < M; ++m) {
    z_s_draws.push_back(draw(q_specific[m]));
    z_s.push_back(z_s_draws.back().narrow(0, 0, B));
  }

  objective::LossTerms terms;
  if (!loss_.drop_reconstruction) {
    std::vector<torch::Tensor> x_hat;
    for (int m = 0; m < M; ++m) x_hat.push_back(decoders_[m]->forward(z_c, z_s[m]));
    terms.L_r = objective::reconstruction_loss(x, x_hat);
  }
  if (!loss_.drop_shared_kl) {
    const auto log_p = priors::shared_prior_log_density(*shared_prior_, z_c_draws, model_.initial_prior_std).total;
    terms.L_c = objective::kl_from_log_densities(objective::posterior_log_density(q_c, z_c_draws), log_p, S).value;
  }
  if (!loss_.drop_private_kl) {
    for (int m = 0; m < M; ++m) {
      torch::Tensor log_p;
      if (loss_.orthogonal_baseline) {
        log_p = priors::gaussian_log_prob(z_s_draws[m]).reshape({z_s_draws[m].size(0), -1}).sum(1);
      } else {
        log_p = priors::private_prior_log_density(*private_priors_[m], z_s_draws[m], z_c_draws,
                                                  model_.initial_prior_std)
                    .total;
      }
      terms.L_s.push_back(
          objective::kl_from_log_densities(objective::posterior_log_density(q_specific[m], z_s_draws[m]), log_p, S)
              .value);
    }
  }
  StepResult result;
  if (!loss_.drop_alignment && M >= 2) {
    auto align = objective::shared_alignment_loss(z_shared_m, loss_.temperature);
    terms.L_align = align.loss;
    result.zero_norm_pairs = align.zero_norm_count;
  }
  if (loss_.task_loss && shape_.num_classes > 0) terms.L_y = objective::task_loss(classifier_->forward(z_c, z_s), labels);
  if (loss_.orthogonal_baseline) {
    torch::Tensor orth;
    for (int m = 0; m < M; ++m) {
      const auto p = objective::cross_correlation_penalty(z_c, z_s[m]);
      orth = orth.defined() ? orth + p : p;
    }
    terms.L_orth = orth;
  }
  auto weights = loss_;
  weights.beta *= kl_scale_;
  result.breakdown = objective::total_loss(terms, weights, M);
  return result;
}

LatentMeans MateModelImpl::encode_means(const std::vector<torch::Tensor>& x) {
  const int M = num_modalities();
  if (static_cast<int>(x.size()) != M)
    throw DimensionError("model expects " + std::to_string(M) + " modalities, got " + std::to_string(x.size()));
  std::vector<nets::PosteriorParams> q_shared;
  LatentMeans out;
  for (int m = 0; m < M; ++m) {
    auto enc = encoders_[m]->forward(x[m]);
    q_shared.push_back(enc.shared);
    out.z_s.push_back(enc.specific.mean);
  }
  out.z_c = fused_shared(q_shared).mean;
  return out;
}

torch::Tensor MateModelImpl::classify_means(const LatentMeans& latents) {
  return classifier_->forward(latents.z_c, latents.z_s);
}

}  // namespace mate

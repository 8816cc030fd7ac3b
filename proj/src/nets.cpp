#include "mate/nets.hpp"

#include "mate/errors.hpp"

namespace mate::nets {

namespace {

std::string shape_of(const torch::Tensor& t) {
  std::string s = "[";
  for (int64_t d = 0; d < t.dim(); ++d) s += (d ? "," : "") + std::to_string(t.size(d));
  return s + "]";
}

}  // namespace

ModalityEncoderImpl::ModalityEncoderImpl(const EncoderOptions& options) : options_(options) {
  namespace nn = torch::nn;
  const int pad = options.kernel_size / 2;
  conv1_ = register_module(
      "conv1", nn::Conv1d(nn::Conv1dOptions(options.obs_dim, options.cnn_channels, options.kernel_size).padding(pad)));
  bn1_ = register_module("bn1", nn::BatchNorm1d(options.cnn_channels));
  conv2_ = register_module("conv2", nn::Conv1d(nn::Conv1dOptions(options.cnn_channels, options.cnn_channels,
                                                                 options.kernel_size)
                                                   .padding(pad)));
  bn2_ = register_module("bn2", nn::BatchNorm1d(options.cnn_channels));
  gru_ = register_module("gru", nn::GRU(nn::GRUOptions(options.cnn_channels, options.gru_hidden).batch_first(true)));
  shared_head_ = register_module("shared_head", nn::Linear(options.gru_hidden, 2 * options.n_c));
  specific_head_ = register_module("specific_head", nn::Linear(options.gru_hidden, 2 * options.n_s));
}

torch::Tensor ModalityEncoderImpl::trunk(const torch::Tensor& x) {
  if (x.dim() != 3 || x.size(2) != options_.obs_dim ||
      (options_.window_length > 0 && x.size(1) != options_.window_length))
    throw DimensionError("encoder expects [B, " + std::to_string(options_.window_length) + ", " +
                         std::to_string(options_.obs_dim) + "], got " + shape_of(x));
  // [B, T, C] -> [B, C, T] for the temporal convolutions.
  auto h = x.transpose(1, 2);
  h = torch::relu(bn1_(conv1_(h)));
  h = torch::relu(bn2_(conv2_(h)));
  h = h.transpose(1, 2).contiguous();
  return std::get<0>(gru_(h));
}

EncoderOutput ModalityEncoderImpl::forward(const torch::Tensor& x) {
  const auto h = trunk(x);
  const auto shared = shared_head_(h).chunk(2, -1);
  const auto specific = specific_head_(h).chunk(2, -1);
  return {{shared[0], shared[1]}, {specific[0], specific[1]}};
}

torch::Tensor reparameterize(const PosteriorParams& params, const torch::Tensor& noise) {
  if (!noise.sizes().equals(params.mean.sizes()))
    throw DimensionError("reparameterize: noise shape " + shape_of(noise) + " differs from " + shape_of(params.mean));
  return params.mean + torch::exp(0.5 * params.log_var) * noise;
}

FusionStrategy parse_fusion(const std::string& name) {
  if (name == "first") return FusionStrategy::kFirst;
  if (name == "mean") return FusionStrategy::kMean;
  throw ConfigError("unknown fusion strategy '" + name + "' (expected first, mean)");
}

torch::Tensor fuse_shared(const std::vector<torch::Tensor>& shared, FusionStrategy strategy) {
  if (shared.empty()) throw UsageError("fuse_shared needs at least one modality");
  if (strategy == FusionStrategy::kFirst) return shared.front();
  return torch::stack(shared).mean(0);
}

DecoderImpl::DecoderImpl(int n_c, int n_s, int obs_dim, const std::vector<int>& hidden) : n_c_(n_c), n_s_(n_s) {
  namespace nn = torch::nn;
  nn::Sequential seq;
  int in = n_c + n_s;
  for (int width : hidden) {
    seq->push_back(nn::Linear(in, width));
    seq->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = width;
  }
  seq->push_back(nn::Linear(in, obs_dim));
  layers_ = register_module("layers", seq);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& z_c, const torch::Tensor& z_s) {
  if (z_c.size(-1) != n_c_ || z_s.size(-1) != n_s_ || z_c.sizes().slice(0, z_c.dim() - 1) != z_s.sizes().slice(0, z_s.dim() - 1))
    throw DimensionError("decoder expects z_c [..., " + std::to_string(n_c_) + "] and z_s [..., " +
                         std::to_string(n_s_) + "], got " + shape_of(z_c) + " and " + shape_of(z_s));
  return layers_->forward(torch::cat({z_c, z_s}, -1));
}

ClassifierImpl::ClassifierImpl(int input_dim, int hidden, int num_classes) : input_dim_(input_dim) {
  hidden_ = register_module("hidden", torch::nn::Linear(input_dim, hidden));
  output_ = register_module("output", torch::nn::Linear(hidden, num_classes));
}

torch::Tensor ClassifierImpl::forward(const torch::Tensor& z_c, const std::vector<torch::Tensor>& z_s) {
  std::vector<torch::Tensor> parts{z_c};
  parts.insert(parts.end(), z_s.begin(), z_s.end());
  const auto features = torch::cat(parts, -1);
  if (features.size(-1) != input_dim_)
    throw DimensionError("classifier expects " + std::to_string(input_dim_) + " latent features, got " +
                         std::to_string(features.size(-1)));
  const auto pooled = features.mean(1);
  return output_(torch::gelu(hidden_(pooled)));
}

}  // namespace mate::nets

#include "doctest_torch.hpp"

#include <torch/torch.h>

#include "mate/errors.hpp"
#include "mate/nets.hpp"

using namespace mate;
using namespace mate::nets;

namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

EncoderOptions small_encoder(int obs_dim = 9, int window = 128) {
  EncoderOptions o;
  o.obs_dim = obs_dim;
  o.window_length = window;
  o.n_c = 4;
  o.n_s = 3;
  o.cnn_channels = 8;
  o.gru_hidden = 12;
  return o;
}

// Central-difference check of d sum(f()) / d p at a few entries of p.
double worst_gradient_error(torch::Tensor p, const std::function<torch::Tensor()>& f, int entries = 4) {
  p.mutable_grad() = torch::Tensor();
  f().sum().backward();
  const auto grad = p.grad().reshape({-1}).clone();
  auto flat = p.detach().view({-1});
  torch::NoGradGuard guard;
  double worst = 0.0;
  const double h = 1e-6;
  for (int e = 0; e < entries; ++e) {
    const int64_t idx = (e * 7919) % flat.numel();
    const double saved = flat[idx].item<double>();
    flat[idx] = saved + h;
    const double up = f().sum().item<double>();
    flat[idx] = saved - h;
    const double down = f().sum().item<double>();
    flat[idx] = saved;
    const double fd = (up - down) / (2 * h), ad = grad[idx].item<double>();
    worst = std::max(worst, std::abs(fd - ad) / std::max(1e-6, std::abs(fd)));
  }
  return worst;
}

}  // namespace

TEST_CASE("encoder output shapes") {
  torch::manual_seed(0);
  ModalityEncoder enc(small_encoder());
  const auto out = enc->forward(torch::randn({2, 128, 9}));
  CHECK(out.shared.mean.sizes() == torch::IntArrayRef({2, 128, 4}));
  CHECK(out.shared.log_var.sizes() == torch::IntArrayRef({2, 128, 4}));
  CHECK(out.specific.mean.sizes() == torch::IntArrayRef({2, 128, 3}));
  CHECK(out.specific.log_var.sizes() == torch::IntArrayRef({2, 128, 3}));
}

TEST_CASE("encoder is deterministic and finite in evaluation mode") {
  torch::manual_seed(1);
  ModalityEncoder enc(small_encoder());
  enc->eval();
  const auto zeros = torch::zeros({2, 128, 9});
  const auto a = enc->forward(zeros), b = enc->forward(zeros);
  CHECK(torch::isfinite(a.shared.mean).all().item<bool>());
  CHECK(torch::isfinite(a.specific.log_var).all().item<bool>());
  CHECK(torch::equal(a.shared.mean, b.shared.mean));
  CHECK(torch::equal(a.specific.log_var, b.specific.log_var));
}

TEST_CASE("encoder is equivariant to batch permutation") {
  torch::manual_seed(2);
  ModalityEncoder enc(small_encoder());
  enc->eval();
  const auto x = torch::randn({5, 128, 9});
  const auto perm = torch::tensor({3, 0, 4, 1, 2}, torch::kLong);
  const auto a = enc->forward(x), b = enc->forward(x.index_select(0, perm));
  CHECK(torch::allclose(a.shared.mean.index_select(0, perm), b.shared.mean, 1e-5, 1e-6));
  CHECK(torch::allclose(a.specific.log_var.index_select(0, perm), b.specific.log_var, 1e-5, 1e-6));
}

TEST_CASE("encoder rejects mismatched inputs") {
  ModalityEncoder enc(small_encoder());
  CHECK_THROWS_AS(enc->forward(torch::randn({2, 128, 8})), DimensionError);
  CHECK_THROWS_AS(enc->forward(torch::randn({2, 64, 9})), DimensionError);
  CHECK_THROWS_AS(enc->forward(torch::randn({128, 9})), DimensionError);
}

TEST_CASE("shared and specific heads read a common trunk") {
  torch::manual_seed(3);
  ModalityEncoder enc(small_encoder(6, 16));
  enc->eval();
  const auto x = torch::randn({3, 16, 6});
  const auto before = enc->forward(x);
  {
    torch::NoGradGuard guard;
    enc->specific_head()->weight.add_(1.0);
  }
  const auto after = enc->forward(x);
  CHECK(torch::equal(before.shared.mean, after.shared.mean));
  CHECK_FALSE(torch::equal(before.specific.mean, after.specific.mean));
  // heads are linear maps of the trunk
  const auto h = enc->trunk(x);
  CHECK(torch::allclose(enc->shared_head()->forward(h).narrow(-1, 0, 4), after.shared.mean, 1e-5, 1e-6));
}

TEST_CASE("reparameterization") {
  const auto mean = torch::tensor({{0.5, -1.0}}, kF64);
  const auto noise = torch::tensor({{2.0, -3.0}}, kF64);
  CHECK(torch::allclose(reparameterize({mean, torch::full({1, 2}, -30.0, kF64)}, noise), mean, 0.0, 1e-6));
  CHECK(torch::allclose(reparameterize({torch::zeros({1, 2}, kF64), torch::zeros({1, 2}, kF64)}, noise), noise));
  CHECK(torch::allclose(reparameterize({mean, torch::full({1, 2}, std::log(4.0), kF64)}, noise),
                        mean + 2.0 * noise));

  torch::manual_seed(4);
  const int n = 100000;
  const auto m = torch::full({n}, 1.5, kF64), lv = torch::full({n}, std::log(0.25), kF64);
  const auto draws = reparameterize({m, lv}, torch::randn({n}, kF64));
  CHECK(std::abs(draws.mean().item<double>() - 1.5) < 3.0 * 0.5 / std::sqrt(n));
  CHECK(draws.var().item<double>() == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("fusion strategies") {
  const auto a = torch::randn({2, 5, 3}), b = torch::randn({2, 5, 3});
  CHECK(torch::equal(fuse_shared({a, a}, FusionStrategy::kMean), a));
  CHECK(torch::equal(fuse_shared({a, b}, FusionStrategy::kFirst), a));
  CHECK(torch::allclose(fuse_shared({a, b}, FusionStrategy::kMean), 0.5 * (a + b)));
  CHECK(torch::equal(fuse_shared({b}), b));
  CHECK_THROWS_AS(fuse_shared({}), UsageError);
  CHECK(parse_fusion("mean") == FusionStrategy::kMean);
  CHECK_THROWS_AS(parse_fusion("max"), ConfigError);
}

TEST_CASE("decoder output shape and linear oracle") {
  torch::manual_seed(5);
  Decoder dec(4, 4, 16, std::vector<int>{32});
  CHECK(dec->forward(torch::randn({2, 64, 4}), torch::randn({2, 64, 4})).sizes() == torch::IntArrayRef({2, 64, 16}));
  CHECK_THROWS_AS(dec->forward(torch::randn({2, 64, 3}), torch::randn({2, 64, 4})), DimensionError);

  Decoder lin(2, 3, 4, std::vector<int>{});
  lin->to(torch::kFloat64);
  const auto params = lin->parameters();
  REQUIRE(params.size() == 2);
  const auto z_c = torch::randn({3, 7, 2}, kF64), z_s = torch::randn({3, 7, 3}, kF64);
  const auto expected = torch::matmul(torch::cat({z_c, z_s}, -1), params[0].t()) + params[1];
  CHECK(torch::allclose(lin->forward(z_c, z_s), expected, 0.0, 1e-12));
}

TEST_CASE("classifier logits") {
  torch::manual_seed(6);
  Classifier one(5, 8, 1);
  CHECK(one->forward(torch::randn({4, 10, 2}), {torch::randn({4, 10, 3})}).sizes() == torch::IntArrayRef({4, 1}));

  Classifier clf(5, 8, 6);
  clf->to(torch::kFloat64);
  const auto z_c = torch::randn({1, 10, 2}, kF64), z_s = torch::randn({1, 10, 3}, kF64);
  const auto single = clf->forward(z_c, {z_s});
  const auto doubled = clf->forward(z_c.repeat({2, 1, 1}), {z_s.repeat({2, 1, 1})});
  CHECK(torch::allclose(doubled[0], doubled[1]));
  CHECK(torch::allclose(doubled[0], single[0]));

  const auto pooled = torch::cat({z_c, z_s}, -1).mean(1);
  const auto hidden = torch::gelu(torch::matmul(pooled, clf->hidden_layer()->weight.t()) + clf->hidden_layer()->bias);
  const auto logits = torch::matmul(hidden, clf->output_layer()->weight.t()) + clf->output_layer()->bias;
  CHECK(torch::allclose(single, logits, 0.0, 1e-12));
  CHECK_THROWS_AS(clf->forward(z_c, {torch::randn({1, 10, 4}, kF64)}), DimensionError);
}

TEST_CASE("autograd gradients agree with finite differences") {
  torch::manual_seed(7);
  ModalityEncoder enc(small_encoder(5, 12));
  enc->to(torch::kFloat64);
  enc->eval();
  const auto x = torch::randn({2, 12, 5}, kF64);
  auto f_enc = [&] {
    const auto o = enc->forward(x);
    return (o.shared.mean * o.shared.mean).sum() + o.specific.log_var.sum();
  };
  for (auto& p : enc->parameters()) CHECK(worst_gradient_error(p, f_enc) < 1e-4);

  Decoder dec(2, 3, 4, std::vector<int>{6});
  dec->to(torch::kFloat64);
  const auto z_c = torch::randn({2, 5, 2}, kF64), z_s = torch::randn({2, 5, 3}, kF64);
  auto f_dec = [&] { return dec->forward(z_c, z_s).pow(2); };
  for (auto& p : dec->parameters()) CHECK(worst_gradient_error(p, f_dec) < 1e-4);

  Classifier clf(5, 6, 3);
  clf->to(torch::kFloat64);
  auto f_clf = [&] { return torch::log_softmax(clf->forward(z_c, {z_s}), 1).select(1, 0); };
  for (auto& p : clf->parameters()) CHECK(worst_gradient_error(p, f_clf) < 1e-4);
}

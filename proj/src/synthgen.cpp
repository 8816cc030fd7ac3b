#include "mate/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mate/errors.hpp"

namespace mate::synthgen {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Independent engine per purpose so that changing one stream (say, N) never
// reshuffles the weights drawn from another.
std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x4d41u};
  return std::mt19937_64(seq);
}

enum Stream : std::uint64_t {
  kTransitionStream = 1,
  kNoiseStream = 2,
  kMixingStream = 3,
  kLabelStream = 4,
};

MatrixXd gaussian_matrix(std::mt19937_64& rng, int rows, int cols, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

MatrixXd random_orthogonal(std::mt19937_64& rng, int d) {
  Eigen::HouseholderQR<MatrixXd> qr(gaussian_matrix(rng, d, d, 1.0));
  MatrixXd q = qr.householderQ();
  // Fix the sign ambiguity of QR so that the draw is Haar-distributed.
  const MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < d; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  return q;
}

// Square matrix with singular values drawn from [1, 2].
MatrixXd well_conditioned(std::mt19937_64& rng, int d) {
  std::uniform_real_distribution<double> unif(1.0, 2.0);
  VectorXd s(d);
  for (int i = 0; i < d; ++i) s(i) = unif(rng);
  return random_orthogonal(rng, d) * s.asDiagonal() * random_orthogonal(rng, d).transpose();
}

double spectral_norm(const MatrixXd& m) {
  Eigen::JacobiSVD<MatrixXd> svd(m);
  return svd.singularValues()(0);
}

double leaky(double v, double slope) { return v >= 0 ? v : slope * v; }
double leaky_inverse(double v, double slope) { return v >= 0 ? v : v / slope; }

constexpr double kTransitionSlope = 0.2;
constexpr double kContraction = 0.9;

Transition make_transition(const GenerationSpec& spec, std::mt19937_64& rng, int in, int out,
                           bool specific) {
  Transition tr;
  tr.kind = spec.transition;
  if (spec.transition == TransitionKind::kLinear) {
    if (spec.transition_init == TransitionInit::kIdentity) {
      tr.w1 = MatrixXd::Zero(out, in);
      for (int i = 0; i < out; ++i) {
        tr.w1(i, i) = 1.0;
        if (specific)
          for (int j = out; j < in; ++j)
            if (j - out == i) tr.w1(i, j) = 1.0;
      }
    } else {
      tr.w1 = gaussian_matrix(rng, out, in, 1.0 / std::sqrt(in));
      tr.w1 *= kContraction / spectral_norm(tr.w1);
    }
    tr.b1 = VectorXd::Zero(out);
    return tr;
  }
  const int hidden = spec.transition_hidden;
  tr.w1 = gaussian_matrix(rng, hidden, in, 1.0 / std::sqrt(in));
  tr.b1 = gaussian_matrix(rng, hidden, 1, 0.1).col(0);
  tr.w2 = gaussian_matrix(rng, out, hidden, 1.0 / std::sqrt(hidden));
  tr.w2 *= kContraction / (spectral_norm(tr.w1) * spectral_norm(tr.w2));
  return tr;
}

void draw_noise(const GenerationSpec& spec, std::mt19937_64& rng, Array3d& eps) {
  if (spec.noise == NoiseKind::kGaussian) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : eps.values) v = normal(rng);
  } else {
    const double half_width = std::sqrt(3.0);  // unit variance
    std::uniform_real_distribution<double> unif(-half_width, half_width);
    for (double& v : eps.values) v = unif(rng);
  }
}

MixingFunction make_mixing(const GenerationSpec& spec, std::mt19937_64& rng, int obs_dim) {
  const int d = spec.n_c + spec.n_s;
  MixingFunction mix;
  mix.leaky_slope = 0.2;
  mix.embed = MatrixXd::Zero(obs_dim, d);
  switch (spec.mixing) {
    case MixingKind::kIdentity:
      mix.embed.topRows(d) = MatrixXd::Identity(d, d);
      break;
    case MixingKind::kLinear:
      mix.embed.topRows(d) = well_conditioned(rng, d);
      if (obs_dim > d) mix.embed.bottomRows(obs_dim - d) = gaussian_matrix(rng, obs_dim - d, d, 1.0 / std::sqrt(d));
      break;
    case MixingKind::kMlp:
      for (int l = 0; l < spec.mixing_layers; ++l) mix.layers.push_back(well_conditioned(rng, d));
      mix.embed.topRows(d) = well_conditioned(rng, d);
      if (obs_dim > d) mix.embed.bottomRows(obs_dim - d) = gaussian_matrix(rng, obs_dim - d, d, 1.0 / std::sqrt(d));
      break;
  }
  mix.embed.topRows(d) *= spec.mixing_scale;
  return mix;
}

// Least-squares residual MSE of y on [x, 1].
double regression_mse(const MatrixXd& x, const MatrixXd& y) {
  MatrixXd design(x.rows(), x.cols() + 1);
  design << x, VectorXd::Ones(x.rows());
  const MatrixXd coef = design.colPivHouseholderQr().solve(y);
  return (y - design * coef).squaredNorm() / static_cast<double>(y.size());
}

struct RegressionData {
  MatrixXd prev_s;
  MatrixXd cur_c;
  MatrixXd cur_s;
};

RegressionData regression_data(const LatentTrajectory& truth, int modality) {
  const Array3d& zs = truth.z_s.at(static_cast<std::size_t>(modality));
  const Array3d& zc = truth.z_c;
  const auto rows = static_cast<Eigen::Index>(zs.n * (zs.t - 1));
  RegressionData d{MatrixXd(rows, zs.c), MatrixXd(rows, zc.c), MatrixXd(rows, zs.c)};
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < zs.n; ++i)
    for (std::size_t t = 1; t < zs.t; ++t, ++r) {
      for (std::size_t k = 0; k < zs.c; ++k) {
        d.prev_s(r, k) = zs(i, t - 1, k);
        d.cur_s(r, k) = zs(i, t, k);
      }
      for (std::size_t k = 0; k < zc.c; ++k) d.cur_c(r, k) = zc(i, t, k);
    }
  return d;
}

double margin_of(const RegressionData& d) {
  MatrixXd both(d.prev_s.rows(), d.prev_s.cols() + d.cur_c.cols());
  both << d.prev_s, d.cur_c;
  return regression_mse(d.prev_s, d.cur_s) - regression_mse(both, d.cur_s);
}

}  // namespace

void validate(const GenerationSpec& spec) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid generation spec: " + what);
  };
  require(spec.num_modalities >= 2, "num_modalities must be >= 2");
  require(spec.n_c >= 1, "n_c must be positive");
  require(spec.n_s >= 1, "n_s must be positive");
  require(spec.T >= 1, "T must be positive");
  require(spec.N >= 1, "N must be positive");
  require(spec.lag == 1, "only lag 1 transitions are supported");
  require(spec.dependency_strength >= 0 && std::isfinite(spec.dependency_strength),
          "dependency_strength must be finite and >= 0");
  require(spec.noise_scale > 0 && std::isfinite(spec.noise_scale), "noise_scale must be positive");
  require(spec.transition_hidden >= 1, "transition_hidden must be positive");
  require(spec.mixing_layers >= 0, "mixing_layers must be >= 0");
  require(spec.mixing_scale > 0, "mixing_scale must be positive");
  require(spec.num_classes >= 1, "num_classes must be positive");
  require(static_cast<int>(spec.obs_dims.size()) == spec.num_modalities,
          "obs_dims must have one entry per modality");
  for (std::size_t m = 0; m < spec.obs_dims.size(); ++m)
    require(spec.obs_dims[m] >= spec.n_c + spec.n_s,
            "obs_dims[" + std::to_string(m) + "] = " + std::to_string(spec.obs_dims[m]) +
                " is smaller than n_c + n_s = " + std::to_string(spec.n_c + spec.n_s));
}

std::string to_string(TransitionKind kind) {
  return kind == TransitionKind::kLinear ? "linear" : "nonlinear-mlp";
}
std::string to_string(NoiseKind kind) { return kind == NoiseKind::kGaussian ? "gaussian" : "uniform"; }
std::string to_string(MixingKind kind) {
  switch (kind) {
    case MixingKind::kMlp: return "mlp";
    case MixingKind::kLinear: return "linear";
    case MixingKind::kIdentity: return "identity";
  }
  return "mlp";
}
std::string to_string(TransitionInit kind) {
  return kind == TransitionInit::kRandom ? "random" : "identity";
}

TransitionKind parse_transition_kind(const std::string& s) {
  if (s == "linear") return TransitionKind::kLinear;
  if (s == "nonlinear-mlp") return TransitionKind::kNonlinearMlp;
  throw ConfigError("unknown transition kind '" + s + "' (expected linear, nonlinear-mlp)");
}
NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "gaussian") return NoiseKind::kGaussian;
  if (s == "uniform") return NoiseKind::kUniform;
  throw ConfigError("unknown noise kind '" + s + "' (expected gaussian, uniform)");
}
MixingKind parse_mixing_kind(const std::string& s) {
  if (s == "mlp") return MixingKind::kMlp;
  if (s == "linear") return MixingKind::kLinear;
  if (s == "identity") return MixingKind::kIdentity;
  throw ConfigError("unknown mixing kind '" + s + "' (expected mlp, linear, identity)");
}
TransitionInit parse_transition_init(const std::string& s) {
  if (s == "random") return TransitionInit::kRandom;
  if (s == "identity") return TransitionInit::kIdentity;
  throw ConfigError("unknown transition init '" + s + "' (expected random, identity)");
}

Eigen::VectorXd Transition::mean(const Eigen::VectorXd& input) const {
  if (kind == TransitionKind::kLinear) return w1 * input + b1;
  VectorXd h = w1 * input + b1;
  for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = leaky(h(i), kTransitionSlope);
  return w2 * h;
}

Eigen::VectorXd MixingFunction::apply(const Eigen::VectorXd& latent) const {
  VectorXd h = latent;
  for (const MatrixXd& w : layers) {
    h = w * h;
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = leaky(h(i), leaky_slope);
  }
  return embed * h;
}

Eigen::VectorXd MixingFunction::invert(const Eigen::VectorXd& obs) const {
  const int d = latent_dim();
  VectorXd h = embed.topRows(d).partialPivLu().solve(obs.head(d));
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = leaky_inverse(h(i), leaky_slope);
    h = it->partialPivLu().solve(h);
  }
  return h;
}

Eigen::MatrixXd MixingFunction::numeric_jacobian(const Eigen::VectorXd& latent, double h) const {
  MatrixXd jac(obs_dim(), latent_dim());
  for (int j = 0; j < latent_dim(); ++j) {
    VectorXd up = latent, down = latent;
    up(j) += h;
    down(j) -= h;
    jac.col(j) = (apply(up) - apply(down)) / (2.0 * h);
  }
  return jac;
}

namespace {

struct Transitions {
  Transition shared;
  std::vector<Transition> specific;
};

Transitions make_transitions(const GenerationSpec& spec) {
  auto rng = make_engine(spec.seed, kTransitionStream);
  Transitions out;
  out.shared = make_transition(spec, rng, spec.n_c, spec.n_c, false);
  for (int m = 0; m < spec.num_modalities; ++m)
    out.specific.push_back(make_transition(spec, rng, spec.n_s + spec.n_c, spec.n_s, true));
  return out;
}

LatentTrajectory roll_out(const GenerationSpec& spec, const Transitions& tr) {
  const auto n = static_cast<std::size_t>(spec.N);
  const auto len = static_cast<std::size_t>(spec.T);
  const auto nc = static_cast<std::size_t>(spec.n_c);
  const auto ns = static_cast<std::size_t>(spec.n_s);
  const auto modalities = static_cast<std::size_t>(spec.num_modalities);

  LatentTrajectory traj;
  traj.z_c = Array3d(n, len, nc);
  traj.eps_c = Array3d(n, len, nc);
  auto rng = make_engine(spec.seed, kNoiseStream);
  draw_noise(spec, rng, traj.eps_c);
  for (std::size_t m = 0; m < modalities; ++m) {
    traj.z_s.emplace_back(n, len, ns);
    traj.eps_s.emplace_back(n, len, ns);
    draw_noise(spec, rng, traj.eps_s.back());
  }

  VectorXd prev_c(nc), input_s(ns + nc);
  for (std::size_t i = 0; i < n; ++i) {
    // z_1 is the first noise draw itself.
    for (std::size_t k = 0; k < nc; ++k) traj.z_c(i, 0, k) = traj.eps_c(i, 0, k);
    for (std::size_t m = 0; m < modalities; ++m)
      for (std::size_t k = 0; k < ns; ++k) traj.z_s[m](i, 0, k) = traj.eps_s[m](i, 0, k);

    for (std::size_t t = 1; t < len; ++t) {
      for (std::size_t k = 0; k < nc; ++k) prev_c(static_cast<Eigen::Index>(k)) = traj.z_c(i, t - 1, k);
      const VectorXd mean_c = tr.shared.mean(prev_c);
      for (std::size_t k = 0; k < nc; ++k)
        traj.z_c(i, t, k) = mean_c(static_cast<Eigen::Index>(k)) + spec.noise_scale * traj.eps_c(i, t, k);

      for (std::size_t m = 0; m < modalities; ++m) {
        for (std::size_t k = 0; k < ns; ++k) input_s(static_cast<Eigen::Index>(k)) = traj.z_s[m](i, t - 1, k);
        for (std::size_t k = 0; k < nc; ++k)
          input_s(static_cast<Eigen::Index>(ns + k)) = spec.dependency_strength * traj.z_c(i, t, k);
        const VectorXd mean_s = tr.specific[m].mean(input_s);
        for (std::size_t k = 0; k < ns; ++k)
          traj.z_s[m](i, t, k) =
              mean_s(static_cast<Eigen::Index>(k)) + spec.noise_scale * traj.eps_s[m](i, t, k);
      }
    }
  }
  return traj;
}

}  // namespace

LatentTrajectory sample_latent_process(const GenerationSpec& spec) {
  validate(spec);
  return roll_out(spec, make_transitions(spec));
}

GeneratedDataset generate_dataset(const GenerationSpec& spec) {
  validate(spec);
  GeneratedDataset out;
  Transitions tr = make_transitions(spec);
  out.truth = roll_out(spec, tr);
  out.shared_transition = std::move(tr.shared);
  out.specific_transitions = std::move(tr.specific);

  auto mix_rng = make_engine(spec.seed, kMixingStream);
  const auto n = static_cast<std::size_t>(spec.N);
  const auto len = static_cast<std::size_t>(spec.T);
  const auto nc = static_cast<std::size_t>(spec.n_c);
  const auto ns = static_cast<std::size_t>(spec.n_s);
  VectorXd latent(static_cast<Eigen::Index>(nc + ns));
  for (int m = 0; m < spec.num_modalities; ++m) {
    const auto obs_dim = spec.obs_dims[static_cast<std::size_t>(m)];
    out.mixing.push_back(make_mixing(spec, mix_rng, obs_dim));
    const MixingFunction& g = out.mixing.back();
    const Array3d& zs = out.truth.z_s[static_cast<std::size_t>(m)];
    Array3d x(n, len, static_cast<std::size_t>(obs_dim));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t k = 0; k < nc; ++k) latent(static_cast<Eigen::Index>(k)) = out.truth.z_c(i, t, k);
        for (std::size_t k = 0; k < ns; ++k) latent(static_cast<Eigen::Index>(nc + k)) = zs(i, t, k);
        const VectorXd obs = g.apply(latent);
        std::copy(obs.data(), obs.data() + obs.size(), x.cell(i, t).begin());
      }
    out.observations.push_back(std::move(x));
  }

  // Labels: argmax of a fixed random linear readout of the time-averaged z^c.
  auto label_rng = make_engine(spec.seed, kLabelStream);
  const MatrixXd readout = gaussian_matrix(label_rng, spec.num_classes, spec.n_c, 1.0);
  out.num_classes = spec.num_classes;
  out.labels.resize(n);
  VectorXd pooled(static_cast<Eigen::Index>(nc));
  for (std::size_t i = 0; i < n; ++i) {
    pooled.setZero();
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t k = 0; k < nc; ++k) pooled(static_cast<Eigen::Index>(k)) += out.truth.z_c(i, t, k);
    pooled /= static_cast<double>(len);
    Eigen::Index best = 0;
    (readout * pooled).maxCoeff(&best);
    out.labels[i] = static_cast<int>(best);
  }
  return out;
}

double dependency_margin(const LatentTrajectory& truth, int modality) {
  return margin_of(regression_data(truth, modality));
}

PermutationTest dependency_permutation_test(const LatentTrajectory& truth, int modality,
                                            int permutations, std::uint64_t seed) {
  if (permutations < 2) throw UsageError("permutation test needs at least 2 permutations");
  RegressionData d = regression_data(truth, modality);
  PermutationTest out;
  out.margin = margin_of(d);

  const std::size_t windows = truth.z_c.n;
  const auto steps = static_cast<Eigen::Index>(truth.z_c.t - 1);
  const MatrixXd original_c = d.cur_c;
  std::vector<std::size_t> perm(windows);
  auto rng = make_engine(seed, 17);
  std::vector<double> null(static_cast<std::size_t>(permutations));
  for (double& value : null) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < windows; ++i)
      d.cur_c.middleRows(static_cast<Eigen::Index>(i) * steps, steps) =
          original_c.middleRows(static_cast<Eigen::Index>(perm[i]) * steps, steps);
    value = margin_of(d);
  }
  const double mean = std::accumulate(null.begin(), null.end(), 0.0) / static_cast<double>(null.size());
  double var = 0.0;
  for (double v : null) var += (v - mean) * (v - mean);
  out.null_mean = mean;
  out.null_sd = std::sqrt(var / static_cast<double>(null.size() - 1));
  return out;
}

AssumptionReport verify_assumptions(const GeneratedDataset& data, int jacobian_points,
                                     std::uint64_t seed) {
  AssumptionReport report;
  report.jacobian_points = jacobian_points;
  const LatentTrajectory& truth = data.truth;
  const std::size_t nc = truth.z_c.c;
  auto rng = make_engine(seed, 23);
  std::uniform_int_distribution<std::size_t> pick_window(0, truth.z_c.n - 1);
  std::uniform_int_distribution<std::size_t> pick_step(0, truth.z_c.t - 1);

  for (std::size_t m = 0; m < data.mixing.size(); ++m) {
    const MixingFunction& g = data.mixing[m];
    const Array3d& zs = truth.z_s[m];
    double min_sv = std::numeric_limits<double>::infinity();
    VectorXd latent(g.latent_dim());
    for (int p = 0; p < jacobian_points; ++p) {
      const std::size_t i = pick_window(rng), t = pick_step(rng);
      for (std::size_t k = 0; k < nc; ++k) latent(static_cast<Eigen::Index>(k)) = truth.z_c(i, t, k);
      for (std::size_t k = 0; k < zs.c; ++k) latent(static_cast<Eigen::Index>(nc + k)) = zs(i, t, k);
      Eigen::JacobiSVD<MatrixXd> svd(g.numeric_jacobian(latent));
      min_sv = std::min(min_sv, svd.singularValues().minCoeff());
    }
    report.min_singular_value.push_back(min_sv);
    report.dependency_margin.push_back(dependency_margin(truth, static_cast<int>(m)));
  }

  // Correlation of every noise dimension against every other, flattened over (N, T).
  std::vector<const Array3d*> blocks{&truth.eps_c};
  for (const Array3d& e : truth.eps_s) blocks.push_back(&e);
  Eigen::Index dims = 0;
  for (const Array3d* b : blocks) dims += static_cast<Eigen::Index>(b->c);
  const auto samples = static_cast<Eigen::Index>(truth.eps_c.n * truth.eps_c.t);
  MatrixXd flat(samples, dims);
  Eigen::Index col = 0;
  for (const Array3d* b : blocks)
    for (std::size_t k = 0; k < b->c; ++k, ++col)
      for (Eigen::Index r = 0; r < samples; ++r)
        flat(r, col) = b->values[static_cast<std::size_t>(r) * b->c + k];
  const MatrixXd centered = flat.rowwise() - flat.colwise().mean();
  const MatrixXd cov = centered.transpose() * centered;
  const VectorXd sd = cov.diagonal().cwiseSqrt();
  report.noise_correlation = cov.array() / (sd * sd.transpose()).array();
  for (Eigen::Index i = 0; i < dims; ++i)
    for (Eigen::Index j = 0; j < dims; ++j)
      if (i != j)
        report.max_noise_correlation =
            std::max(report.max_noise_correlation, std::abs(report.noise_correlation(i, j)));
  report.noise_correlation_bound = 4.0 / std::sqrt(static_cast<double>(samples));
  return report;
}

}  // namespace mate::synthgen

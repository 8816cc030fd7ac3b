#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mate/array.hpp"

namespace mate::synthgen {

enum class TransitionKind { kLinear, kNonlinearMlp };
enum class NoiseKind { kGaussian, kUniform };
enum class MixingKind { kMlp, kLinear, kIdentity };
// kIdentity only applies to linear transitions and is intended for tests.
enum class TransitionInit { kRandom, kIdentity };

struct GenerationSpec {
  int num_modalities = 2;
  int n_c = 4;
  int n_s = 4;
  int T = 64;
  int N = 1000;
  std::vector<int> obs_dims = {16, 16};
  int lag = 1;
  TransitionKind transition = TransitionKind::kNonlinearMlp;
  TransitionInit transition_init = TransitionInit::kRandom;
  int transition_hidden = 16;
  double dependency_strength = 1.0;
  double noise_scale = 1.0;
  NoiseKind noise = NoiseKind::kGaussian;
  MixingKind mixing = MixingKind::kMlp;
  int mixing_layers = 2;
  // Multiplies the square leading block of the mixing.
  double mixing_scale = 1.0;
  int num_classes = 4;
  std::uint64_t seed = 0;
};

// Throws ConfigError when the spec violates its invariants.
void validate(const GenerationSpec& spec);

std::string to_string(TransitionKind kind);
std::string to_string(NoiseKind kind);
std::string to_string(MixingKind kind);
std::string to_string(TransitionInit kind);
TransitionKind parse_transition_kind(const std::string& s);
NoiseKind parse_noise_kind(const std::string& s);
MixingKind parse_mixing_kind(const std::string& s);
TransitionInit parse_transition_init(const std::string& s);

struct LatentTrajectory {
  Array3d z_c;                 // [N, T, n_c]
  std::vector<Array3d> z_s;    // per modality [N, T, n_s]
  Array3d eps_c;               // [N, T, n_c]
  std::vector<Array3d> eps_s;  // per modality [N, T, n_s]
};

// z_t = f(x) + noise_scale * eps_t, where x is z_{t-1} for the shared process
// and concat(z^s_{t-1}, dependency_strength * z^c_t) for a specific process.
struct Transition {
  TransitionKind kind = TransitionKind::kLinear;
  Eigen::MatrixXd w1;  // linear: [out, in]; mlp: [hidden, in]
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // mlp only: [out, hidden]

  Eigen::VectorXd mean(const Eigen::VectorXd& input) const;
};

// Invertible map from R^{n_c+n_s} to R^{obs_dim}:
//   h_0 = latent, h_{l+1} = leaky_relu(W_l h_l), x = E h_L,
// where every W_l is square with singular values in [1, 2] and the leading
// square block of E is invertible.
struct MixingFunction {
  std::vector<Eigen::MatrixXd> layers;
  Eigen::MatrixXd embed;  // [obs_dim, latent_dim]
  double leaky_slope = 0.2;

  int latent_dim() const { return static_cast<int>(embed.cols()); }
  int obs_dim() const { return static_cast<int>(embed.rows()); }
  Eigen::VectorXd apply(const Eigen::VectorXd& latent) const;
  // Inverse on the image of apply(); reads only the leading latent_dim channels.
  Eigen::VectorXd invert(const Eigen::VectorXd& obs) const;
  // Central finite-difference Jacobian, [obs_dim, latent_dim].
  Eigen::MatrixXd numeric_jacobian(const Eigen::VectorXd& latent, double h = 1e-5) const;
};

struct GeneratedDataset {
  std::vector<Array3d> observations;  // per modality [N, T, obs_dims[m]]
  std::vector<int> labels;
  int num_classes = 0;
  LatentTrajectory truth;
  std::vector<MixingFunction> mixing;
  Transition shared_transition;
  std::vector<Transition> specific_transitions;
};

LatentTrajectory sample_latent_process(const GenerationSpec& spec);
GeneratedDataset generate_dataset(const GenerationSpec& spec);

struct AssumptionReport {
  std::vector<double> min_singular_value;  // per modality
  std::vector<double> dependency_margin;   // per modality
  Eigen::MatrixXd noise_correlation;       // over [eps_c, eps_s_1, ...] dims
  double max_noise_correlation = 0.0;      // max off-diagonal |corr|
  double noise_correlation_bound = 0.0;    // 4 / sqrt(N T)
  int jacobian_points = 0;
};

AssumptionReport verify_assumptions(const GeneratedDataset& data, int jacobian_points = 100,
                                     std::uint64_t seed = 0);

// Mean squared residual improvement from adding z^c_t to a least-squares
// regression of z^s_t on z^s_{t-1} (averaged over specific dimensions).
double dependency_margin(const LatentTrajectory& truth, int modality);

struct PermutationTest {
  double margin = 0.0;
  double null_mean = 0.0;
  double null_sd = 0.0;
};

// Null distribution of dependency_margin obtained by shuffling z^c across windows.
PermutationTest dependency_permutation_test(const LatentTrajectory& truth, int modality,
                                            int permutations, std::uint64_t seed);

}  // namespace mate::synthgen

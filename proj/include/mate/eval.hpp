#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mate::eval {

enum class CorrelationMethod { kPearson, kSpearman };

CorrelationMethod parse_correlation_method(const std::string& s);
std::string to_string(CorrelationMethod method);

// Maximum-weight one-to-one assignment on a rows x cols weight matrix
// (rows <= cols). Returns, for each row, the chosen column.
std::vector<int> max_weight_assignment(const Eigen::MatrixXd& weights);

// Correlation matrix between the columns of a and b: result(i, j) = corr(a_i, b_j).
// Constant columns correlate as 0.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                   CorrelationMethod method);

struct MccResult {
  double score = 0.0;
  // assignment[j] is the true coordinate matched to estimated column j.
  std::vector<int> assignment;
  Eigen::MatrixXd abs_correlation;  // [n_est, n_true]
};

MccResult mcc(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth,
              CorrelationMethod method = CorrelationMethod::kPearson);

struct KernelRidgeOptions {
  double lambda = 1e-3;  // ridge added to the kernel diagonal
  double train_fraction = 0.8;
  int max_train = 2000;
  int max_test = 2000;
  std::uint64_t seed = 0;
};

struct R2Report {
  double mean_r2 = 0.0;
  std::vector<double> per_coordinate;  // NaN for excluded coordinates
  std::vector<int> excluded;           // zero-variance targets
};

// Out-of-sample R^2 of regressing each true coordinate on the estimated block
// with a least-squares linear fit plus RBF kernel ridge on its residuals
// (median-heuristic bandwidth on standardized inputs).
R2Report subspace_r2(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth,
                     const KernelRidgeOptions& options = {});

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

// Macro-F1 averages over every class that appears in either argument.
ClassificationMetrics classification_metrics(const std::vector<int>& predicted,
                                             const std::vector<int>& truth);

std::vector<int> knn_predict(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                             const Eigen::MatrixXd& test_x, int k);
ClassificationMetrics knn_eval(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                               const Eigen::MatrixXd& test_x, const std::vector<int>& test_y, int k = 5);

inline const std::vector<double> kDefaultProbeRatios = {1.0, 0.1, 0.05, 0.01};

struct ProbeEntry {
  double ratio = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  int train_samples = 0;
};

struct ProbeReport {
  std::vector<ProbeEntry> entries;
  std::vector<std::string> warnings;
};

// Per class: floor(ratio * count) samples, raised to 1 when the class is present.
std::vector<std::size_t> stratified_subsample(const std::vector<int>& labels, double ratio,
                                              std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

struct LinearModel {
  Eigen::MatrixXd weights;  // [features, classes]
  Eigen::RowVectorXd bias;
  Eigen::RowVectorXd feature_mean;
  Eigen::RowVectorXd feature_scale;

  std::vector<int> predict(const Eigen::MatrixXd& x) const;
};

struct SoftmaxOptions {
  int max_iterations = 3000;
  double learning_rate = 0.05;
  double l2 = 1e-4;
  double tolerance = 1e-7;
};

// Multinomial logistic regression trained full-batch with Adam.
LinearModel train_softmax_classifier(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                                     const SoftmaxOptions& options = {});

ProbeReport linear_probe(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                         const Eigen::MatrixXd& test_x, const std::vector<int>& test_y, int num_classes,
                         const std::vector<double>& ratios = kDefaultProbeRatios, std::uint64_t seed = 0);

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  int max_points = 1500;
  std::uint64_t seed = 0;
};

struct TsneResult {
  Eigen::MatrixXd embedding;  // [points, 2]
  std::vector<int> labels;    // labels of the embedded points
};

// Exact-gradient t-SNE; inputs beyond max_points are subsampled deterministically.
TsneResult tsne(const Eigen::MatrixXd& points, const std::vector<int>& labels, const TsneOptions& options = {});

// Writes a class-colored scatter of a 2-D embedding as PNG.
void write_scatter_png(const Eigen::MatrixXd& embedding, const std::vector<int>& labels,
                       const std::filesystem::path& path, int size = 800);

TsneResult emit_tsne_plot(const Eigen::MatrixXd& shared_latents, const std::vector<int>& labels,
                          const std::filesystem::path& path, const TsneOptions& options = {});

}  // namespace mate::eval

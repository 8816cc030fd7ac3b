#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "mate/errors.hpp"
#include "mate/eval.hpp"

namespace mate::eval {

using Eigen::MatrixXd;
using Eigen::VectorXd;

CorrelationMethod parse_correlation_method(const std::string& s) {
  if (s == "pearson") return CorrelationMethod::kPearson;
  if (s == "spearman") return CorrelationMethod::kSpearman;
  throw ConfigError("unknown correlation method '" + s + "' (expected pearson, spearman)");
}

std::string to_string(CorrelationMethod method) {
  return method == CorrelationMethod::kPearson ? "pearson" : "spearman";
}

std::vector<int> max_weight_assignment(const MatrixXd& weights) {
  const int n = static_cast<int>(weights.rows());
  const int m = static_cast<int>(weights.cols());
  if (n > m) throw UsageError("assignment needs rows <= cols");
  if (n == 0) return {};
  // Shortest augmenting path (Kuhn-Munkres) on cost = max - weight, 1-based.
  const double top = weights.maxCoeff();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = (top - weights(i0 - 1, j - 1)) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (match[static_cast<std::size_t>(j)] != 0) row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return row_to_col;
}

namespace {

// Average ranks, so ties share the mean of their positions.
VectorXd ranks(const VectorXd& x) {
  const auto n = x.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a) < x(b); });
  VectorXd r(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && x(order[static_cast<std::size_t>(j + 1)]) == x(order[static_cast<std::size_t>(i)])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (Eigen::Index k = i; k <= j; ++k) r(order[static_cast<std::size_t>(k)]) = avg;
    i = j + 1;
  }
  return r;
}

MatrixXd rank_columns(const MatrixXd& m) {
  MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) out.col(j) = ranks(m.col(j));
  return out;
}

// Centered columns scaled to unit norm; constant columns become zero.
MatrixXd normalized_columns(const MatrixXd& m) {
  MatrixXd c = m.rowwise() - m.colwise().mean();
  for (Eigen::Index j = 0; j < c.cols(); ++j) {
    const double norm = c.col(j).norm();
    const double scale = std::max(1.0, c.col(j).cwiseAbs().maxCoeff());
    if (norm <= 1e-12 * scale * std::sqrt(static_cast<double>(c.rows())))
      c.col(j).setZero();
    else
      c.col(j) /= norm;
  }
  return c;
}

}  // namespace

MatrixXd correlation_matrix(const MatrixXd& a, const MatrixXd& b, CorrelationMethod method) {
  if (a.rows() != b.rows()) throw DimensionError("correlation inputs need equal sample counts");
  if (method == CorrelationMethod::kSpearman)
    return normalized_columns(rank_columns(a)).transpose() * normalized_columns(rank_columns(b));
  return normalized_columns(a).transpose() * normalized_columns(b);
}

MccResult mcc(const MatrixXd& estimated, const MatrixXd& truth, CorrelationMethod method) {
  if (estimated.rows() != truth.rows()) throw DimensionError("mcc needs equal sample counts");
  if (estimated.rows() < std::max(estimated.cols(), truth.cols()))
    throw UsageError("mcc needs at least as many samples as dimensions");
  MccResult out;
  out.abs_correlation = correlation_matrix(estimated, truth, method).cwiseAbs();
  const bool transpose = estimated.cols() > truth.cols();
  const MatrixXd w = transpose ? MatrixXd(out.abs_correlation.transpose()) : out.abs_correlation;
  const auto rows = max_weight_assignment(w);
  out.assignment.assign(static_cast<std::size_t>(estimated.cols()), -1);
  double total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int est = transpose ? rows[r] : static_cast<int>(r);
    const int tru = transpose ? static_cast<int>(r) : rows[r];
    out.assignment[static_cast<std::size_t>(est)] = tru;
    total += out.abs_correlation(est, tru);
  }
  out.score = rows.empty() ? 0.0 : total / static_cast<double>(rows.size());
  return out;
}

namespace {

MatrixXd squared_distances(const MatrixXd& a, const MatrixXd& b) {
  const VectorXd an = a.rowwise().squaredNorm();
  const VectorXd bn = b.rowwise().squaredNorm();
  MatrixXd d = (-2.0 * a * b.transpose()).colwise() + an;
  d.rowwise() += bn.transpose();
  return d.cwiseMax(0.0);
}

double median_distance(const MatrixXd& x) {
  const Eigen::Index n = std::min<Eigen::Index>(x.rows(), 1000);
  const MatrixXd d = squared_distances(x.topRows(n), x.topRows(n));
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) values.push_back(std::sqrt(d(i, j)));
  if (values.empty()) return 1.0;
  auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid > 1e-12 ? *mid : 1.0;
}

}  // namespace

R2Report subspace_r2(const MatrixXd& estimated, const MatrixXd& truth, const KernelRidgeOptions& options) {
  if (estimated.rows() != truth.rows()) throw DimensionError("subspace_r2 needs equal sample counts");
  const Eigen::Index samples = estimated.rows();
  if (samples < 100) throw UsageError("subspace_r2 needs at least 100 samples");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(samples));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto split = static_cast<Eigen::Index>(std::floor(options.train_fraction * static_cast<double>(samples)));
  const Eigen::Index n_train = std::min<Eigen::Index>(split, options.max_train);
  const Eigen::Index n_test = std::min<Eigen::Index>(samples - split, options.max_test);

  MatrixXd x_train(n_train, estimated.cols()), y_train(n_train, truth.cols());
  MatrixXd x_test(n_test, estimated.cols()), y_test(n_test, truth.cols());
  for (Eigen::Index i = 0; i < n_train; ++i) {
    x_train.row(i) = estimated.row(order[static_cast<std::size_t>(i)]);
    y_train.row(i) = truth.row(order[static_cast<std::size_t>(i)]);
  }
  for (Eigen::Index i = 0; i < n_test; ++i) {
    x_test.row(i) = estimated.row(order[static_cast<std::size_t>(split + i)]);
    y_test.row(i) = truth.row(order[static_cast<std::size_t>(split + i)]);
  }

  const Eigen::RowVectorXd mean = x_train.colwise().mean();
  Eigen::RowVectorXd scale = ((x_train.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < scale.size(); ++j)
    if (scale(j) < 1e-12) scale(j) = 1.0;
  x_train = (x_train.rowwise() - mean).array().rowwise() / scale.array();
  x_test = (x_test.rowwise() - mean).array().rowwise() / scale.array();

  MatrixXd design_train(n_train, x_train.cols() + 1), design_test(n_test, x_test.cols() + 1);
  design_train << x_train, VectorXd::Ones(n_train);
  design_test << x_test, VectorXd::Ones(n_test);
  const MatrixXd linear = design_train.colPivHouseholderQr().solve(y_train);
  const MatrixXd residual = y_train - design_train * linear;

  const double bandwidth = median_distance(x_train);
  const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
  MatrixXd gram = (-gamma * squared_distances(x_train, x_train)).array().exp();
  gram.diagonal().array() += options.lambda;
  const MatrixXd alpha = gram.llt().solve(residual);
  const MatrixXd cross = (-gamma * squared_distances(x_test, x_train)).array().exp();
  const MatrixXd prediction = design_test * linear + cross * alpha;

  R2Report report;
  double sum = 0.0;
  int used = 0;
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    const VectorXd y = y_test.col(j);
    const double sst = (y.array() - y.mean()).square().sum();
    const double all_var = (truth.col(j).array() - truth.col(j).mean()).square().mean();
    if (all_var < 1e-12 || sst <= 0.0) {
      report.excluded.push_back(static_cast<int>(j));
      report.per_coordinate.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double sse = (y - prediction.col(j)).squaredNorm();
    const double r2 = 1.0 - sse / sst;
    report.per_coordinate.push_back(r2);
    sum += r2;
    ++used;
  }
  report.mean_r2 = used > 0 ? sum / used : std::numeric_limits<double>::quiet_NaN();
  return report;
}

ClassificationMetrics classification_metrics(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.empty()) throw UsageError("classification_metrics needs at least one prediction");
  if (predicted.size() != truth.size()) throw UsageError("prediction and label counts differ");
  std::set<int> classes(truth.begin(), truth.end());
  classes.insert(predicted.begin(), predicted.end());
  std::map<int, long> tp, fp, fn;
  long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == truth[i]) {
      ++correct;
      ++tp[truth[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[truth[i]];
    }
  }
  double f1_sum = 0.0;
  for (int c : classes) {
    const double denom = 2.0 * static_cast<double>(tp[c]) + static_cast<double>(fp[c]) + static_cast<double>(fn[c]);
    f1_sum += denom > 0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  return {static_cast<double>(correct) / static_cast<double>(truth.size()),
          f1_sum / static_cast<double>(classes.size())};
}

std::vector<int> knn_predict(const MatrixXd& train_x, const std::vector<int>& train_y, const MatrixXd& test_x,
                             int k) {
  if (k < 1) throw UsageError("k must be positive");
  if (static_cast<std::size_t>(k) > train_y.size())
    throw UsageError("k = " + std::to_string(k) + " exceeds training size " + std::to_string(train_y.size()));
  if (train_x.rows() != static_cast<Eigen::Index>(train_y.size())) throw DimensionError("train features/labels differ");
  if (train_x.cols() != test_x.cols()) throw DimensionError("train/test feature widths differ");

  std::vector<int> out(static_cast<std::size_t>(test_x.rows()));
  std::vector<std::pair<double, int>> dist(train_y.size());
  const Eigen::Index block = 512;
  for (Eigen::Index start = 0; start < test_x.rows(); start += block) {
    const Eigen::Index rows = std::min(block, test_x.rows() - start);
    const MatrixXd d2 = squared_distances(test_x.middleRows(start, rows), train_x);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < train_y.size(); ++j)
        dist[j] = {std::sqrt(d2(r, static_cast<Eigen::Index>(j))), static_cast<int>(j)};
      std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
      std::map<int, std::pair<int, double>> votes;  // class -> (count, summed distance)
      for (int i = 0; i < k; ++i) {
        auto& v = votes[train_y[static_cast<std::size_t>(dist[static_cast<std::size_t>(i)].second)]];
        ++v.first;
        v.second += dist[static_cast<std::size_t>(i)].first;
      }
      auto best = votes.begin();
      for (auto it = votes.begin(); it != votes.end(); ++it)
        if (it->second.first > best->second.first ||
            (it->second.first == best->second.first && it->second.second < best->second.second))
          best = it;
      out[static_cast<std::size_t>(start + r)] = best->first;
    }
  }
  return out;
}

ClassificationMetrics knn_eval(const MatrixXd& train_x, const std::vector<int>& train_y, const MatrixXd& test_x,
                               const std::vector<int>& test_y, int k) {
  return classification_metrics(knn_predict(train_x, train_y, test_x, k), test_y);
}

std::vector<std::size_t> stratified_subsample(const std::vector<int>& labels, double ratio, std::uint64_t seed,
                                              std::vector<std::string>* warnings) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw UsageError("label ratio must be in (0, 1]");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (auto& [cls, idx] : by_class) {
    auto take = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(idx.size()) + 1e-9));
    if (take == 0) {
      take = 1;
      if (warnings)
        warnings->push_back("ratio " + std::to_string(ratio) + ": class " + std::to_string(cls) + " has " +
                            std::to_string(idx.size()) + " samples; keeping 1");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> LinearModel::predict(const MatrixXd& x) const {
  const MatrixXd z = (x.rowwise() - feature_mean).array().rowwise() / feature_scale.array();
  const MatrixXd logits = (z * weights).rowwise() + bias;
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

LinearModel train_softmax_classifier(const MatrixXd& x, const std::vector<int>& y, int num_classes,
                                     const SoftmaxOptions& options) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()) || y.empty()) throw DimensionError("features/labels mismatch");
  LinearModel model;
  model.feature_mean = x.colwise().mean();
  model.feature_scale = ((x.rowwise() - model.feature_mean).array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < model.feature_scale.size(); ++j)
    if (model.feature_scale(j) < 1e-12) model.feature_scale(j) = 1.0;
  const MatrixXd z = (x.rowwise() - model.feature_mean).array().rowwise() / model.feature_scale.array();

  const Eigen::Index n = z.rows(), d = z.cols(), k = num_classes;
  MatrixXd onehot = MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = y[static_cast<std::size_t>(i)];
    if (label < 0 || label >= num_classes) throw DataError("label " + std::to_string(label) + " out of range");
    onehot(i, label) = 1.0;
  }
  model.weights = MatrixXd::Zero(d, k);
  model.bias = Eigen::RowVectorXd::Zero(k);

  // Adam state
  MatrixXd mw = MatrixXd::Zero(d, k), vw = MatrixXd::Zero(d, k);
  Eigen::RowVectorXd mb = Eigen::RowVectorXd::Zero(k), vb = Eigen::RowVectorXd::Zero(k);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int it = 1; it <= options.max_iterations; ++it) {
    MatrixXd logits = (z * model.weights).rowwise() + model.bias;
    logits = logits.colwise() - logits.rowwise().maxCoeff();
    MatrixXd prob = logits.array().exp();
    prob = prob.array().colwise() / prob.rowwise().sum().array();
    const MatrixXd delta = (prob - onehot) / static_cast<double>(n);
    const MatrixXd gw = z.transpose() * delta + options.l2 * model.weights;
    const Eigen::RowVectorXd gb = delta.colwise().sum();
    if (std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff()) < options.tolerance) break;
    mw = b1 * mw + (1 - b1) * gw;
    vw = b2 * vw + (1 - b2) * gw.cwiseProduct(gw);
    mb = b1 * mb + (1 - b1) * gb;
    vb = b2 * vb + (1 - b2) * gb.cwiseProduct(gb);
    const double c1 = 1 - std::pow(b1, it), c2 = 1 - std::pow(b2, it);
    model.weights.array() -= options.learning_rate * (mw.array() / c1) / ((vw.array() / c2).sqrt() + eps);
    model.bias.array() -= options.learning_rate * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
  }
  return model;
}

ProbeReport linear_probe(const MatrixXd& train_x, const std::vector<int>& train_y, const MatrixXd& test_x,
                         const std::vector<int>& test_y, int num_classes, const std::vector<double>& ratios,
                         std::uint64_t seed) {
  if (ratios.empty()) throw UsageError("linear_probe needs at least one ratio");
  ProbeReport report;
  const std::set<int> present(train_y.begin(), train_y.end());
  for (int c = 0; c < num_classes; ++c)
    if (!present.count(c))
      report.warnings.push_back("class " + std::to_string(c) +
                                " has no training samples; dropped from training, kept in evaluation");
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    const auto idx = stratified_subsample(train_y, ratios[r], seed + r, &report.warnings);
    MatrixXd x(static_cast<Eigen::Index>(idx.size()), train_x.cols());
    std::vector<int> y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = train_x.row(static_cast<Eigen::Index>(idx[i]));
      y[i] = train_y[idx[i]];
    }
    const LinearModel model = train_softmax_classifier(x, y, num_classes);
    const auto metrics = classification_metrics(model.predict(test_x), test_y);
    report.entries.push_back({ratios[r], metrics.accuracy, metrics.macro_f1, static_cast<int>(idx.size())});
  }
  return report;
}

}  // namespace mate::eval

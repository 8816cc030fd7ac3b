#include "mate/report.hpp"

#include <cmath>
#include <sstream>

#include "mate/errors.hpp"

namespace mate::report {

namespace {

std::vector<std::string> split_list(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

Split split_dataset(const dataio::MultiModalDataset& data, const EvalConfig& eval) {
  if (!eval.test_data_path.empty()) return {data, dataio::load_dataset(eval.test_data_path)};
  const std::size_t n = data.size();
  auto n_train = static_cast<std::size_t>(std::floor((1.0 - eval.test_fraction) * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n > 1 ? n - 1 : 1);
  if (n < 2) throw DataError("need at least 2 windows to hold out a test split");
  return {data.slice(0, n_train), data.slice(n_train, n)};
}

Eigen::MatrixXd flatten_time(const torch::Tensor& latents) {
  const auto t = latents.detach().to(torch::kFloat64).contiguous().reshape({-1, latents.size(-1)});
  Eigen::MatrixXd out(t.size(0), t.size(1));
  const double* p = t.data_ptr<double>();
  for (int64_t r = 0; r < t.size(0); ++r)
    for (int64_t c = 0; c < t.size(1); ++c) out(r, c) = p[r * t.size(1) + c];
  return out;
}

Eigen::MatrixXd flatten_time(const Array3f& latents) {
  Eigen::MatrixXd out(latents.n * latents.t, latents.c);
  for (std::size_t i = 0; i < latents.values.size(); ++i)
    out(static_cast<Eigen::Index>(i / latents.c), static_cast<Eigen::Index>(i % latents.c)) = latents.values[i];
  return out;
}

Eigen::MatrixXd pooled_features(const LatentMeans& latents) {
  std::vector<torch::Tensor> parts{latents.z_c};
  parts.insert(parts.end(), latents.z_s.begin(), latents.z_s.end());
  return flatten_time(torch::cat(parts, -1).mean(1, /*keepdim=*/true));
}

std::set<std::string> parse_metrics(const std::string& list) {
  std::set<std::string> out;
  for (const auto& m : split_list(list)) {
    if (!kAllMetrics.count(m)) throw UsageError("unknown metric '" + m + "' (valid: mcc, r2, cls, knn)");
    out.insert(m);
  }
  if (out.empty()) throw UsageError("no metrics selected");
  return out;
}

std::vector<double> parse_ratios(const std::string& list) {
  std::vector<double> out;
  for (const auto& r : split_list(list)) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(r, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != r.size() || !(v > 0 && v <= 1)) throw UsageError("ratio '" + r + "' must be a number in (0, 1]");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("no ratios given");
  return out;
}

IdentifiabilityScores identifiability(const LatentMeans& latents, const dataio::MultiModalDataset& data,
                                      const EvalConfig& eval, bool with_r2) {
  const auto it = data.latents.find("latent_c");
  if (it == data.latents.end()) throw DataError("dataset '" + data.name + "' has no latent_c ground truth");
  const auto method = eval::parse_correlation_method(eval.correlation);
  IdentifiabilityScores s;
  const auto est_c = flatten_time(latents.z_c);
  const auto true_c = flatten_time(it->second);
  const auto shared = eval::mcc(est_c, true_c, method);
  s.mcc_shared = shared.score;
  s.assignment = shared.assignment;
  for (std::size_t m = 0; m < latents.z_s.size(); ++m) {
    const auto jt = data.latents.find("latent_s_" + std::to_string(m + 1));
    if (jt == data.latents.end()) continue;
    s.mcc_specific.push_back(eval::mcc(flatten_time(latents.z_s[m]), flatten_time(jt->second), method).score);
  }
  if (with_r2) {
    eval::KernelRidgeOptions opts;
    opts.lambda = eval.r2_lambda;
    opts.max_train = eval.r2_max_train;
    opts.seed = eval.seed;
    s.r2_shared = eval::subspace_r2(est_c, true_c, opts).mean_r2;
  }
  return s;
}

nlohmann::json evaluate(MateModel& model, const ExperimentConfig& config, const Split& split,
                        const std::set<std::string>& metrics) {
  nlohmann::json out;
  const auto test_latents = encode_dataset(model, split.test);
  if (metrics.count("mcc") || metrics.count("r2")) {
    const auto scores = identifiability(test_latents, split.test, config.eval, metrics.count("r2") > 0);
    if (metrics.count("mcc")) {
      out["correlation"] = config.eval.correlation;
      out["mcc_shared"] = scores.mcc_shared;
      out["mcc_assignment"] = scores.assignment;
      nlohmann::json specific = nlohmann::json::object();
      for (std::size_t m = 0; m < scores.mcc_specific.size(); ++m)
        specific[split.test.modality_names[m]] = scores.mcc_specific[m];
      out["mcc_specific"] = specific;
    }
    if (metrics.count("r2")) out["r2_shared"] = scores.r2_shared;
  }
  if (metrics.count("cls")) {
    torch::NoGradGuard no_grad;
    const auto logits = model->classify_means(test_latents).argmax(-1).to(torch::kInt64).contiguous();
    const std::vector<int> pred(logits.data_ptr<int64_t>(), logits.data_ptr<int64_t>() + logits.numel());
    const auto cm = eval::classification_metrics(pred, split.test.labels);
    out["accuracy"] = cm.accuracy;
    out["macro_f1"] = cm.macro_f1;
  }
  if (metrics.count("knn")) {
    const auto train_features = pooled_features(encode_dataset(model, split.train));
    const auto cm = eval::knn_eval(train_features, split.train.labels, pooled_features(test_latents),
                                   split.test.labels, config.eval.knn_k);
    out["knn"] = {{"k", config.eval.knn_k}, {"accuracy", cm.accuracy}, {"macro_f1", cm.macro_f1}};
  }
  out["test_windows"] = split.test.size();
  return out;
}

nlohmann::json probe_json(const eval::ProbeReport& report) {
  nlohmann::json ratios = nlohmann::json::array(), acc = nlohmann::json::array(), f1 = nlohmann::json::array(),
                 counts = nlohmann::json::array();
  for (const auto& e : report.entries) {
    ratios.push_back(e.ratio);
    acc.push_back(e.accuracy);
    f1.push_back(e.macro_f1);
    counts.push_back(e.train_samples);
  }
  return {{"ratios", ratios}, {"accuracy", acc}, {"macro_f1", f1}, {"train_samples", counts},
          {"warnings", report.warnings}};
}

eval::ProbeReport probe(MateModel& model, const ExperimentConfig& config, const Split& split,
                        const std::vector<double>& ratios) {
  const auto train_features = pooled_features(encode_dataset(model, split.train));
  const auto test_features = pooled_features(encode_dataset(model, split.test));
  const int classes = std::max(split.train.num_classes, split.test.num_classes);
  return eval::linear_probe(train_features, split.train.labels, test_features, split.test.labels, classes, ratios,
                            config.eval.seed);
}

}  // namespace mate::report

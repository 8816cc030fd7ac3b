#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mate/config.hpp"
#include "mate/dataio.hpp"
#include "mate/eval.hpp"
#include "mate/trainer.hpp"

namespace mate::report {

struct Split {
  dataio::MultiModalDataset train;
  dataio::MultiModalDataset test;
};

// Separate test manifest when eval.test_data_path is set, otherwise the
// trailing eval.test_fraction of the windows.
Split split_dataset(const dataio::MultiModalDataset& data, const EvalConfig& eval);

// [N, T, n] tensor -> [N*T, n] matrix.
Eigen::MatrixXd flatten_time(const torch::Tensor& latents);
Eigen::MatrixXd flatten_time(const Array3f& latents);
// Mean over T of concat(z_c, z_s_1..M) -> [N, n_c + M n_s].
Eigen::MatrixXd pooled_features(const LatentMeans& latents);

inline const std::set<std::string> kAllMetrics = {"mcc", "r2", "cls", "knn"};
std::set<std::string> parse_metrics(const std::string& list);
std::vector<double> parse_ratios(const std::string& list);

struct IdentifiabilityScores {
  double mcc_shared = 0.0;
  std::vector<int> assignment;
  std::vector<double> mcc_specific;
  double r2_shared = 0.0;
};

// Needs latent_c (and latent_s_<m>) ground truth in `data`.
IdentifiabilityScores identifiability(const LatentMeans& latents, const dataio::MultiModalDataset& data,
                                      const EvalConfig& eval, bool with_r2 = true);

// JSON report with keys mcc_shared, mcc_specific.<m>, r2_shared, accuracy,
// macro_f1, knn.{accuracy,macro_f1}, depending on `metrics`.
nlohmann::json evaluate(MateModel& model, const ExperimentConfig& config, const Split& split,
                        const std::set<std::string>& metrics);

nlohmann::json probe_json(const eval::ProbeReport& report);
eval::ProbeReport probe(MateModel& model, const ExperimentConfig& config, const Split& split,
                        const std::vector<double>& ratios);

}  // namespace mate::report

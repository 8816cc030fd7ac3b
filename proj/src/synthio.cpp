#include "mate/synthio.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mate/errors.hpp"

namespace mate {

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Array3f to_float(const Array3d& array) { return array.cast<float>(); }

dataio::DatasetManifest write_generated_dataset(const synthgen::GeneratedDataset& data,
                                                const std::filesystem::path& dir, double test_fraction) {
  if (test_fraction < 0 || test_fraction >= 1) throw ConfigError("test_fraction must lie in [0, 1)");
  std::filesystem::create_directories(dir);
  dataio::DatasetManifest m;
  m.name = "synthetic";
  m.labels_file = "labels.txt";
  m.num_classes = data.num_classes;
  m.window_length = static_cast<int>(data.observations.front().t);
  m.directory = dir;

  const std::size_t n = data.labels.size();
  const auto n_train = static_cast<std::size_t>(std::floor((1.0 - test_fraction) * static_cast<double>(n)));
  for (std::size_t k = 0; k < data.observations.size(); ++k) {
    const std::string name = "modality" + std::to_string(k + 1);
    const Array3f obs = to_float(data.observations[k]);
    dataio::write_mmts(obs, dir / (name + ".mmts"));
    m.modalities.push_back({name, name + ".mmts"});
    Array3f head(std::max<std::size_t>(n_train, 1), obs.t, obs.c);
    std::copy_n(obs.values.begin(), head.values.size(), head.values.begin());
    m.normalization[name] = dataio::compute_channel_stats(head);
  }
  dataio::write_labels(data.labels, dir / m.labels_file);

  dataio::write_mmts(to_float(data.truth.z_c), dir / "latent_c.mmts");
  m.latents["latent_c"] = "latent_c.mmts";
  for (std::size_t k = 0; k < data.truth.z_s.size(); ++k) {
    const std::string key = "latent_s_" + std::to_string(k + 1);
    dataio::write_mmts(to_float(data.truth.z_s[k]), dir / (key + ".mmts"));
    m.latents[key] = key + ".mmts";
  }

  nlohmann::json mixing = nlohmann::json::array();
  for (const auto& g : data.mixing) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& w : g.layers) layers.push_back(matrix_json(w));
    mixing.push_back({{"layers", layers}, {"embed", matrix_json(g.embed)}, {"leaky_slope", g.leaky_slope}});
  }
  std::ofstream out(dir / "mixing.json");
  if (!out) throw IoError("cannot write " + (dir / "mixing.json").string());
  out << nlohmann::json{{"mixing", mixing}}.dump(1) << '\n';

  dataio::write_manifest(m, dir / "manifest.json");
  return m;
}

}  // namespace mate

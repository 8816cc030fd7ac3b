#include "mate/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <future>
#include <iostream>
#include <numbers>
#include <random>

#include <ATen/CPUGeneratorImpl.h>
#include <nlohmann/json.hpp>

#include "mate/errors.hpp"

namespace mate {

namespace {

constexpr std::uint64_t kNoiseStream = 0x9E3779B97F4A7C15ULL;

std::string shape_json(const ModelShape& shape) {
  return nlohmann::json{{"obs_dims", shape.obs_dims},
                        {"window_length", shape.window_length},
                        {"num_classes", shape.num_classes}}
      .dump();
}

ModelShape shape_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelShape shape;
  shape.obs_dims = j.at("obs_dims").get<std::vector<int>>();
  shape.window_length = j.at("window_length").get<int>();
  shape.num_classes = j.at("num_classes").get<int>();
  return shape;
}

bool same_model(const ModelConfig& a, const ModelConfig& b) {
  return a.n_c == b.n_c && a.n_s == b.n_s && a.cnn_channels == b.cnn_channels && a.kernel_size == b.kernel_size &&
         a.gru_hidden == b.gru_hidden && a.decoder_hidden == b.decoder_hidden && a.prior_hidden == b.prior_hidden &&
         a.prior_layers == b.prior_layers && a.classifier_hidden == b.classifier_hidden;
}

torch::optim::AdamW make_optimizer(MateModel& model, const TrainConfig& t) {
  return torch::optim::AdamW(model->parameters(), torch::optim::AdamWOptions(t.lr_max)
                                                      .betas({t.adam_beta1, t.adam_beta2})
                                                      .eps(t.adam_eps)
                                                      .weight_decay(t.weight_decay));
}

void set_lr(torch::optim::AdamW& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
}

void save_checkpoint(const fs::path& path, const ExperimentConfig& config, const ModelShape& shape, MateModel& model,
                     torch::optim::AdamW& opt, int64_t step, at::Generator& noise) {
  torch::serialize::OutputArchive archive, model_archive, opt_archive;
  model->save(model_archive);
  opt.save(opt_archive);
  archive.write("model", model_archive);
  archive.write("optimizer", opt_archive);
  archive.write("config", c10::IValue(to_toml(config)));
  archive.write("shape", c10::IValue(shape_json(shape)));
  archive.write("step", c10::IValue(step));
  archive.write("noise_state", noise.get_state());
  const fs::path tmp = path.string() + ".tmp";
  try {
    archive.save_to(tmp.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  fs::rename(tmp, path);
}

struct LoadedState {
  Checkpoint checkpoint;
  torch::serialize::InputArchive optimizer;
  torch::Tensor noise_state;
};

LoadedState read_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  LoadedState s;
  try {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    c10::IValue config, shape, step;
    archive.read("config", config);
    archive.read("shape", shape);
    archive.read("step", step);
    s.checkpoint.config = from_toml(config.toStringRef());
    s.checkpoint.shape = shape_from_json(shape.toStringRef());
    s.checkpoint.step = step.toInt();
    s.checkpoint.model = build_model(s.checkpoint.config, s.checkpoint.shape);
    torch::serialize::InputArchive model_archive;
    archive.read("model", model_archive);
    s.checkpoint.model->load(model_archive);
    archive.read("optimizer", s.optimizer);
    archive.read("noise_state", s.noise_state);
  } catch (const c10::Error& e) {
    throw CheckpointError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt shape record in " + path.string() + ": " + e.what());
  }
  return s;
}

struct Batch {
  std::vector<torch::Tensor> x;
  torch::Tensor labels;
  std::vector<int64_t> indices;
};

Batch gather(const TensorDataset& data, std::vector<int64_t> indices) {
  Batch b;
  const auto idx = torch::tensor(indices, torch::kInt64);
  for (const auto& m : data.modalities) b.x.push_back(m.index_select(0, idx));
  b.labels = data.labels.index_select(0, idx);
  b.indices = std::move(indices);
  return b;
}

int num_workers() {
  const char* env = std::getenv("MATE_NUM_WORKERS");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 0) throw ConfigError(std::string("MATE_NUM_WORKERS must be a non-negative integer, got '") + env + "'");
  return static_cast<int>(v);
}

std::string describe(const objective::LossBreakdown& b) {
  std::string s = "L_r=" + std::to_string(b.L_r) + " L_c=" + std::to_string(b.L_c);
  for (std::size_t m = 0; m < b.L_s.size(); ++m) s += " L_s" + std::to_string(m + 1) + "=" + std::to_string(b.L_s[m]);
  s += " L_align=" + std::to_string(b.L_align) + " L_y=" + std::to_string(b.L_y);
  return s + " total=" + std::to_string(b.total);
}

[[noreturn]] void abort_non_finite(const fs::path& run_dir, int64_t step, int64_t epoch, int64_t batch,
                                   const objective::LossBreakdown& b, const std::vector<int64_t>& indices,
                                   const std::string& what) {
  std::string msg = "non-finite " + what + " at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(batch) + "): " + describe(b);
  std::ofstream dump(run_dir / "nan_dump.txt");
  dump << msg << "\nwindows:";
  for (auto i : indices) dump << ' ' << i;
  dump << '\n';
  throw NumericError(msg);
}

bool finite(const objective::LossBreakdown& b) {
  if (!std::isfinite(b.total) || !std::isfinite(b.L_r) || !std::isfinite(b.L_c) || !std::isfinite(b.L_align) ||
      !std::isfinite(b.L_y) || !std::isfinite(b.L_orth))
    return false;
  for (double v : b.L_s)
    if (!std::isfinite(v)) return false;
  return true;
}

void write_config_echo(const ExperimentConfig& config, const fs::path& run_dir) {
  std::ofstream out(run_dir / "config.toml");
  if (!out) throw IoError("cannot write " + (run_dir / "config.toml").string());
  out << to_toml(config);
}

TrainReport run_loop(const ExperimentConfig& config, const TensorDataset& data, MateModel& model,
                     torch::optim::AdamW& opt, at::Generator& noise, int64_t start_step, const fs::path& run_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& t = config.train;
  const bool orth = config.loss.orthogonal_baseline;
  const int M = static_cast<int>(data.modalities.size());

  TrainReport report;
  report.checkpoint = run_dir / "checkpoint.pt";
  report.metrics_csv = run_dir / "metrics.csv";
  const int64_t spe = steps_per_epoch(data.size(), t.batch_size);
  report.total_steps = static_cast<int64_t>(t.epochs) * spe;
  int64_t end = report.total_steps;
  if (t.max_steps > 0) end = std::min(end, start_step + t.max_steps);
  report.first_step = start_step;

  const bool fresh_csv = !fs::exists(report.metrics_csv);
  std::ofstream csv(report.metrics_csv, std::ios::app);
  if (!csv) throw IoError("cannot open " + report.metrics_csv.string());
  if (fresh_csv) csv << objective::csv_header(M, orth) << '\n';

  const int64_t bs = std::min<int64_t>(t.batch_size, data.size());
  int64_t cached_epoch = -1;
  std::vector<int64_t> perm;
  auto indices_for = [&](int64_t step) {
    const int64_t epoch = step / spe;
    if (epoch != cached_epoch) {
      perm = epoch_permutation(t.seed, epoch, data.size());
      cached_epoch = epoch;
    }
    const int64_t b = step % spe;
    return std::vector<int64_t>(perm.begin() + b * bs, perm.begin() + (b + 1) * bs);
  };

  const int workers = num_workers();
  std::deque<std::future<Batch>> pending;
  int64_t next_fetch = start_step;
  auto fetch = [&]() {
    auto idx = indices_for(next_fetch++);
    pending.push_back(std::async(std::launch::async, [&data, idx = std::move(idx)]() mutable {
      return gather(data, std::move(idx));
    }));
  };

  model->train();
  for (int64_t step = start_step; step < end; ++step) {
    Batch batch;
    if (workers > 0) {
      while (next_fetch < end && static_cast<int>(pending.size()) < workers) fetch();
      batch = pending.front().get();
      pending.pop_front();
    } else {
      batch = gather(data, indices_for(step));
    }
    const double lr = cosine_lr(step, report.total_steps, t.lr_max, t.lr_min);
    const double warmup = t.kl_warmup_epochs * static_cast<double>(spe);
    model->set_kl_scale(warmup > 0 ? std::min(1.0, static_cast<double>(step + 1) / warmup) : 1.0);
    set_lr(opt, lr);
    opt.zero_grad();
    auto result = model->forward(batch.x, batch.labels, t.mc_samples, noise);
    auto& b = result.breakdown;
    if (!finite(b)) abort_non_finite(run_dir, step, step / spe, step % spe, b, batch.indices, "loss");
    if (b.total_tensor.requires_grad()) {
      b.total_tensor.backward();
      if (t.grad_clip > 0) {
        const double norm = torch::nn::utils::clip_grad_norm_(model->parameters(), t.grad_clip);
        if (!std::isfinite(norm)) abort_non_finite(run_dir, step, step / spe, step % spe, b, batch.indices, "gradient");
      }
      opt.step();
    }
    b.total_tensor = torch::Tensor();
    csv << objective::csv_row(step, b, orth) << '\n';
    if (t.log_every > 0 && (step % t.log_every == 0 || step + 1 == end))
      std::cerr << "step " << step + 1 << "/" << report.total_steps << " epoch " << step / spe + 1 << " lr " << lr
                << " total " << b.total << "\n";
    report.log.push_back(std::move(b));
    if ((step + 1) % spe == 0 && step + 1 < end) {
      csv.flush();
      save_checkpoint(report.checkpoint, config, data.shape(), model, opt, step + 1, noise);
    }
  }
  report.final_step = std::max(start_step, end);
  csv.flush();
  save_checkpoint(report.checkpoint, config, data.shape(), model, opt, report.final_step, noise);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void check_window(const ExperimentConfig& config, const TensorDataset& data) {
  const int T = static_cast<int>(data.modalities.front().size(1));
  if (config.train.window_length > 0 && config.train.window_length != T)
    throw DataError("train.window_length = " + std::to_string(config.train.window_length) +
                    " but the dataset has windows of length " + std::to_string(T));
}

}  // namespace

double cosine_lr(int64_t step, int64_t total_steps, double lr_max, double lr_min) {
  if (total_steps <= 1) return lr_max;
  const double progress = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps - 1), 0.0, 1.0);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

int64_t steps_per_epoch(std::size_t dataset_size, int batch_size) {
  if (dataset_size == 0) return 0;
  return std::max<int64_t>(1, static_cast<int64_t>(dataset_size) / batch_size);
}

std::vector<int64_t> epoch_permutation(std::uint64_t seed, int64_t epoch, std::size_t n) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 0x5u};
  std::mt19937_64 rng(seq);
  std::vector<int64_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int64_t>(i);
  // Fisher-Yates with an explicit draw so the order is library independent.
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  return perm;
}

TensorDataset TensorDataset::from(const dataio::MultiModalDataset& data) {
  if (data.modalities.empty() || data.size() == 0) throw DataError("dataset is empty");
  TensorDataset out;
  for (const auto& a : data.modalities) {
    out.modalities.push_back(torch::from_blob(const_cast<float*>(a.values.data()),
                                              {static_cast<int64_t>(a.n), static_cast<int64_t>(a.t),
                                               static_cast<int64_t>(a.c)},
                                              torch::kFloat32)
                                 .clone());
  }
  std::vector<int64_t> labels(data.labels.begin(), data.labels.end());
  out.labels = torch::tensor(labels, torch::kInt64);
  out.num_classes = data.num_classes;
  return out;
}

ModelShape TensorDataset::shape() const {
  ModelShape s;
  for (const auto& m : modalities) s.obs_dims.push_back(static_cast<int>(m.size(2)));
  s.window_length = static_cast<int>(modalities.front().size(1));
  s.num_classes = num_classes;
  return s;
}

MateModel build_model(const ExperimentConfig& config, const ModelShape& shape) {
  torch::manual_seed(config.train.seed);
  return MateModel(config.model, config.loss, shape);
}

Checkpoint load_checkpoint(const fs::path& path) { return read_checkpoint(path).checkpoint; }

TrainReport train(const ExperimentConfig& config, const dataio::MultiModalDataset& data, const fs::path& run_dir) {
  validate(config);
  const auto tensors = TensorDataset::from(data);
  check_window(config, tensors);
  fs::create_directories(run_dir);
  fs::remove(run_dir / "metrics.csv");
  write_config_echo(config, run_dir);

  auto model = build_model(config, tensors.shape());
  auto opt = make_optimizer(model, config.train);
  at::Generator noise = at::make_generator<at::CPUGeneratorImpl>(config.train.seed ^ kNoiseStream);
  return run_loop(config, tensors, model, opt, noise, 0, run_dir);
}

TrainReport resume(const fs::path& checkpoint, const std::vector<std::string>& overrides,
                   const dataio::MultiModalDataset& data, const fs::path& run_dir) {
  auto state = read_checkpoint(checkpoint);
  auto config = state.checkpoint.config;
  for (const auto& o : overrides) apply_override(config, o);
  validate(config);
  if (!same_model(config.model, state.checkpoint.config.model) ||
      config.loss.orthogonal_baseline != state.checkpoint.config.loss.orthogonal_baseline)
    throw CheckpointError("overrides change model dimensions stored in " + checkpoint.string());

  const auto tensors = TensorDataset::from(data);
  check_window(config, tensors);
  const auto shape = tensors.shape();
  const auto& saved = state.checkpoint.shape;
  if (shape.obs_dims != saved.obs_dims || shape.window_length != saved.window_length ||
      shape.num_classes != saved.num_classes)
    throw CheckpointError("dataset shape " + shape_json(shape) + " does not match checkpoint " + shape_json(saved));

  // Loss switches may change between runs; rebuild around the loaded weights.
  MateModel model = state.checkpoint.model;
  if (config.loss.drop_private_kl != state.checkpoint.config.loss.drop_private_kl ||
      config.loss.drop_shared_kl != state.checkpoint.config.loss.drop_shared_kl ||
      config.loss.drop_reconstruction != state.checkpoint.config.loss.drop_reconstruction ||
      config.loss.drop_alignment != state.checkpoint.config.loss.drop_alignment ||
      config.loss.task_loss != state.checkpoint.config.loss.task_loss || config.loss.alpha != state.checkpoint.config.loss.alpha ||
      config.loss.beta != state.checkpoint.config.loss.beta || config.loss.gamma != state.checkpoint.config.loss.gamma ||
      config.loss.temperature != state.checkpoint.config.loss.temperature ||
      config.loss.orthogonality_weight != state.checkpoint.config.loss.orthogonality_weight) {
    auto rebuilt = build_model(config, shape);
    torch::serialize::OutputArchive out;
    model->save(out);
    std::stringstream buffer;
    out.save_to(buffer);
    torch::serialize::InputArchive in;
    in.load_from(buffer);
    rebuilt->load(in);
    model = rebuilt;
  }

  auto opt = make_optimizer(model, config.train);
  try {
    opt.load(state.optimizer);
  } catch (const c10::Error& e) {
    throw CheckpointError("optimizer state in " + checkpoint.string() + " is incompatible: " + e.what_without_backtrace());
  }
  at::Generator noise = at::make_generator<at::CPUGeneratorImpl>(config.train.seed ^ kNoiseStream);
  noise.set_state(state.noise_state);

  fs::create_directories(run_dir);
  if (fs::absolute(checkpoint).lexically_normal() != fs::absolute(run_dir / "checkpoint.pt").lexically_normal() &&
      fs::exists(run_dir / "checkpoint.pt"))
    throw UsageError("run directory " + run_dir.string() + " already holds a checkpoint");
  write_config_echo(config, run_dir);
  return run_loop(config, tensors, model, opt, noise, state.checkpoint.step, run_dir);
}

LatentMeans encode_dataset(MateModel& model, const dataio::MultiModalDataset& data, int batch_size) {
  const auto tensors = TensorDataset::from(data);
  torch::NoGradGuard no_grad;
  model->eval();
  std::vector<torch::Tensor> zc;
  std::vector<std::vector<torch::Tensor>> zs(tensors.modalities.size());
  for (int64_t start = 0; start < tensors.size(); start += batch_size) {
    const int64_t len = std::min<int64_t>(batch_size, tensors.size() - start);
    std::vector<torch::Tensor> x;
    for (const auto& m : tensors.modalities) x.push_back(m.narrow(0, start, len));
    auto means = model->encode_means(x);
    zc.push_back(means.z_c);
    for (std::size_t m = 0; m < zs.size(); ++m) zs[m].push_back(means.z_s[m]);
  }
  LatentMeans out;
  out.z_c = torch::cat(zc);
  for (auto& parts : zs) out.z_s.push_back(torch::cat(parts));
  return out;
}

std::vector<int> predict_dataset(MateModel& model, const dataio::MultiModalDataset& data, int batch_size) {
  const auto latents = encode_dataset(model, data, batch_size);
  torch::NoGradGuard no_grad;
  const auto pred = model->classify_means(latents).argmax(-1).to(torch::kInt64).contiguous();
  return std::vector<int>(pred.data_ptr<int64_t>(), pred.data_ptr<int64_t>() + pred.numel());
}

}  // namespace mate

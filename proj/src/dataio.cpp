#include "mate/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mate/errors.hpp"

namespace mate::dataio {

using nlohmann::json;

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::span<const unsigned char> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw UsageError(std::string("MMTS ") + what + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

struct MmtsShape {
  std::uint32_t n = 0, t = 0, c = 0;
};

MmtsShape read_mmts_shape(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> header(kMmtsHeaderBytes);
  in.read(reinterpret_cast<char*>(header.data()), static_cast<std::streamsize>(header.size()));
  if (in.gcount() != static_cast<std::streamsize>(kMmtsHeaderBytes))
    throw FormatError(path.string() + ": truncated MMTS header");
  if (!std::equal(header.begin(), header.begin() + 4, "MMTS"))
    throw FormatError(path.string() + ": bad magic");
  return {get_u32(header, 8), get_u32(header, 12), get_u32(header, 16)};
}

json stats_to_json(const ChannelStats& s) { return json{{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

std::vector<unsigned char> encode_mmts(const Array3f& array) {
  if (array.values.size() != array.n * array.t * array.c)
    throw DimensionError("MMTS array payload does not match its shape");
  std::vector<unsigned char> out{'M', 'M', 'T', 'S', kMmtsVersion, kMmtsFloat32, 0, 0};
  out.reserve(kMmtsHeaderBytes + 4 * array.values.size());
  put_u32(out, checked_u32(array.n, "N"));
  put_u32(out, checked_u32(array.t, "T"));
  put_u32(out, checked_u32(array.c, "C"));
  for (float v : array.values) {
    if (!std::isfinite(v)) throw DataError("MMTS payload must be finite");
    put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Array3f decode_mmts(std::span<const unsigned char> bytes) {
  if (bytes.size() < kMmtsHeaderBytes)
    throw FormatError("truncated header: expected " + std::to_string(kMmtsHeaderBytes) +
                      " bytes, got " + std::to_string(bytes.size()));
  if (!std::equal(bytes.begin(), bytes.begin() + 4, "MMTS"))
    throw FormatError("bad magic: expected \"MMTS\"");
  if (bytes[4] != kMmtsVersion)
    throw FormatError("unsupported version " + std::to_string(bytes[4]) + " (expected 1)");
  if (bytes[5] != kMmtsFloat32)
    throw FormatError("unsupported dtype " + std::to_string(bytes[5]) + " (expected 1 = float32)");
  if (bytes[6] != 0 || bytes[7] != 0) throw FormatError("reserved bytes must be zero");
  Array3f out(get_u32(bytes, 8), get_u32(bytes, 12), get_u32(bytes, 16));
  const std::size_t expected = kMmtsHeaderBytes + 4 * out.values.size();
  if (bytes.size() != expected)
    throw FormatError("payload size mismatch: expected " + std::to_string(expected - kMmtsHeaderBytes) +
                      " bytes, got " + std::to_string(bytes.size() - kMmtsHeaderBytes));
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = std::bit_cast<float>(get_u32(bytes, kMmtsHeaderBytes + 4 * i));
  return out;
}

void write_mmts(const Array3f& array, const fs::path& path) {
  const auto bytes = encode_mmts(array);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Array3f read_mmts(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_mmts(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Array3f window_raw_series(std::span<const float> series, std::size_t channels, std::size_t T,
                          std::size_t stride) {
  if (channels == 0 || T == 0 || stride == 0) throw UsageError("channels, T and stride must be positive");
  if (series.size() % channels != 0) throw DimensionError("series length is not a multiple of channels");
  const std::size_t length = series.size() / channels;
  if (T > length)
    throw UsageError("window length " + std::to_string(T) + " exceeds series length " + std::to_string(length));
  const std::size_t windows = (length - T) / stride + 1;
  Array3f out(windows, T, channels);
  for (std::size_t w = 0; w < windows; ++w)
    std::copy_n(series.begin() + static_cast<std::ptrdiff_t>(w * stride * channels), T * channels,
                out.values.begin() + static_cast<std::ptrdiff_t>(w * T * channels));
  return out;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json doc;
  doc["name"] = m.name;
  doc["modalities"] = json::array();
  for (const auto& e : m.modalities) doc["modalities"].push_back({{"name", e.name}, {"file", e.file}});
  doc["labels_file"] = m.labels_file;
  doc["num_classes"] = m.num_classes;
  doc["window_length"] = m.window_length;
  if (!m.latents.empty()) doc["latents"] = m.latents;
  if (!m.normalization.empty()) {
    json norm = json::object();
    for (const auto& [name, stats] : m.normalization) norm[name] = stats_to_json(stats);
    doc["normalization"] = norm;
  }
  return doc.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text, const fs::path& directory) {
  DatasetManifest m;
  m.directory = directory;
  try {
    const json doc = json::parse(text);
    m.name = doc.at("name").get<std::string>();
    for (const auto& e : doc.at("modalities"))
      m.modalities.push_back({e.at("name").get<std::string>(), e.at("file").get<std::string>()});
    m.labels_file = doc.at("labels_file").get<std::string>();
    m.num_classes = doc.at("num_classes").get<int>();
    m.window_length = doc.at("window_length").get<int>();
    if (doc.contains("latents")) m.latents = doc["latents"].get<std::map<std::string, std::string>>();
    if (doc.contains("normalization"))
      for (const auto& [name, s] : doc["normalization"].items())
        m.normalization[name] = {s.at("mean").get<std::vector<double>>(), s.at("std").get<std::vector<double>>()};
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid manifest: ") + e.what());
  }
  if (m.modalities.empty()) throw FormatError("invalid manifest: no modalities");
  if (m.num_classes < 1) throw FormatError("invalid manifest: num_classes must be positive");
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  write_file(path, manifest_to_json(manifest));
}

DatasetManifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("manifest not found: " + path.string());
  const auto bytes = read_file(path);
  DatasetManifest m = manifest_from_json(std::string(bytes.begin(), bytes.end()), path.parent_path());

  std::vector<std::string> missing;
  auto check = [&](const std::string& file) {
    if (!fs::exists(m.directory / file)) missing.push_back((m.directory / file).string());
  };
  for (const auto& e : m.modalities) check(e.file);
  check(m.labels_file);
  for (const auto& [_, file] : m.latents) check(file);
  if (!missing.empty()) {
    std::string msg = "manifest references missing files:";
    for (const auto& f : missing) msg += " " + f;
    throw DataError(msg);
  }

  std::optional<MmtsShape> first;
  for (const auto& e : m.modalities) {
    const MmtsShape s = read_mmts_shape(m.directory / e.file);
    if (!first) {
      first = s;
    } else if (s.n != first->n || s.t != first->t) {
      throw DataError("modality '" + e.name + "' has N=" + std::to_string(s.n) + ", T=" + std::to_string(s.t) +
                      " but '" + m.modalities.front().name + "' has N=" + std::to_string(first->n) +
                      ", T=" + std::to_string(first->t));
    }
  }
  if (static_cast<int>(first->t) != m.window_length)
    throw DataError("manifest window_length " + std::to_string(m.window_length) + " does not match T=" +
                    std::to_string(first->t));
  const auto labels = read_labels(m.directory / m.labels_file);
  if (labels.size() != first->n)
    throw DataError("label file has " + std::to_string(labels.size()) + " lines, expected " + std::to_string(first->n));
  for (int y : labels)
    if (y < 0 || y >= m.num_classes)
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(m.num_classes) + ")");
  return m;
}

std::vector<int> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    char* end = nullptr;
    const long v = std::strtol(line.c_str(), &end, 10);
    if (end == line.c_str() || *end != '\0')
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not an integer label");
    labels.push_back(static_cast<int>(v));
  }
  return labels;
}

void write_labels(const std::vector<int>& labels, const fs::path& path) {
  std::string text;
  for (int y : labels) text += std::to_string(y) + "\n";
  write_file(path, text);
}

std::vector<int> MultiModalDataset::obs_dims() const {
  std::vector<int> dims;
  for (const auto& m : modalities) dims.push_back(static_cast<int>(m.c));
  return dims;
}

MultiModalDataset MultiModalDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw UsageError("dataset slice out of range");
  auto cut = [&](const Array3f& a) {
    Array3f out(end - begin, a.t, a.c);
    std::copy(a.values.begin() + static_cast<std::ptrdiff_t>(begin * a.t * a.c),
              a.values.begin() + static_cast<std::ptrdiff_t>(end * a.t * a.c), out.values.begin());
    return out;
  };
  MultiModalDataset out;
  out.name = name;
  out.modality_names = modality_names;
  out.num_classes = num_classes;
  for (const auto& m : modalities) out.modalities.push_back(cut(m));
  for (const auto& [key, a] : latents) out.latents[key] = cut(a);
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

MultiModalDataset load_dataset(const fs::path& manifest_path, bool normalize) {
  const DatasetManifest m = read_manifest(manifest_path);
  MultiModalDataset out;
  out.name = m.name;
  out.num_classes = m.num_classes;
  for (const auto& e : m.modalities) {
    Array3f a = read_mmts(m.directory / e.file);
    if (normalize) {
      const auto it = m.normalization.find(e.name);
      if (it != m.normalization.end()) apply_channel_stats(a, it->second);
    }
    out.modality_names.push_back(e.name);
    out.modalities.push_back(std::move(a));
  }
  out.labels = read_labels(m.directory / m.labels_file);
  for (const auto& [key, file] : m.latents) out.latents[key] = read_mmts(m.directory / file);
  return out;
}

ChannelStats compute_channel_stats(const Array3f& array) {
  ChannelStats s{std::vector<double>(array.c, 0.0), std::vector<double>(array.c, 0.0)};
  const double count = static_cast<double>(array.n * array.t);
  for (std::size_t i = 0; i < array.values.size(); ++i) s.mean[i % array.c] += array.values[i];
  for (double& v : s.mean) v /= count;
  for (std::size_t i = 0; i < array.values.size(); ++i) {
    const double d = array.values[i] - s.mean[i % array.c];
    s.std[i % array.c] += d * d;
  }
  for (double& v : s.std) {
    v = std::sqrt(v / count);
    if (v < 1e-12) v = 1.0;  // constant channel
  }
  return s;
}

void apply_channel_stats(Array3f& array, const ChannelStats& stats) {
  if (stats.mean.size() != array.c || stats.std.size() != array.c)
    throw DimensionError("normalization statistics have " + std::to_string(stats.mean.size()) +
                         " channels, array has " + std::to_string(array.c));
  for (std::size_t i = 0; i < array.values.size(); ++i) {
    const std::size_t k = i % array.c;
    array.values[i] = static_cast<float>((array.values[i] - stats.mean[k]) / stats.std[k]);
  }
}

namespace {

constexpr std::size_t kUciharWindow = 128;
constexpr int kUciharClasses = 6;

struct UciharModality {
  const char* name;
  const char* prefix;
};
constexpr UciharModality kUciharModalities[] = {
    {"body_acc", "body_acc"},
    {"total_acc", "total_acc"},
    {"body_gyro", "body_gyro"},
};

fs::path signal_path(const fs::path& root, const std::string& split, const std::string& prefix, char axis) {
  return root / split / "Inertial Signals" / (prefix + "_" + axis + "_" + split + ".txt");
}

std::vector<std::vector<float>> read_signal_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<float>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::vector<float> row;
    std::string tok;
    while (ss >> tok) row.push_back(static_cast<float>(std::strtod(tok.c_str(), nullptr)));
    if (row.empty()) continue;
    if (row.size() != kUciharWindow)
      throw IngestionError(path.string() + ": row " + std::to_string(rows.size() + 1) + " has " +
                           std::to_string(row.size()) + " values, expected 128");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

IngestResult ingest_ucihar(const fs::path& raw_root, const fs::path& out_dir) {
  const std::string splits[] = {"train", "test"};
  std::vector<std::string> missing;
  for (const auto& split : splits) {
    for (const auto& mod : kUciharModalities)
      for (char axis : {'x', 'y', 'z'}) {
        const fs::path p = signal_path(raw_root, split, mod.prefix, axis);
        if (!fs::exists(p)) missing.push_back(p.string());
      }
    const fs::path labels = raw_root / split / ("y_" + split + ".txt");
    if (!fs::exists(labels)) missing.push_back(labels.string());
  }
  if (!missing.empty()) {
    std::string msg = "UCI-HAR ingestion: missing files:";
    for (const auto& p : missing) msg += "\n  " + p;
    throw IngestionError(msg);
  }

  std::map<std::string, std::map<std::string, Array3f>> arrays;  // split -> modality -> data
  std::map<std::string, std::vector<int>> labels;
  for (const auto& split : splits) {
    std::vector<int> y = read_labels(raw_root / split / ("y_" + split + ".txt"));
    for (int& v : y) {
      if (v < 1 || v > kUciharClasses) throw IngestionError("UCI-HAR label " + std::to_string(v) + " outside 1..6");
      v -= 1;
    }
    for (const auto& mod : kUciharModalities) {
      Array3f a(y.size(), kUciharWindow, 3);
      int channel = 0;
      for (char axis : {'x', 'y', 'z'}) {
        const fs::path p = signal_path(raw_root, split, mod.prefix, axis);
        const auto rows = read_signal_rows(p);
        if (rows.size() != y.size())
          throw IngestionError(p.string() + " has " + std::to_string(rows.size()) + " windows but the label file has " +
                               std::to_string(y.size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
          for (std::size_t t = 0; t < kUciharWindow; ++t) a(i, t, static_cast<std::size_t>(channel)) = rows[i][t];
        ++channel;
      }
      arrays[split][mod.name] = std::move(a);
    }
    labels[split] = std::move(y);
  }

  std::map<std::string, ChannelStats> stats;
  for (const auto& mod : kUciharModalities) stats[mod.name] = compute_channel_stats(arrays["train"][mod.name]);

  IngestResult result;
  for (const auto& split : splits) {
    const fs::path dir = out_dir / split;
    fs::create_directories(dir);
    DatasetManifest m;
    m.name = "ucihar_" + split;
    m.labels_file = "labels.txt";
    m.num_classes = kUciharClasses;
    m.window_length = static_cast<int>(kUciharWindow);
    m.normalization = stats;
    m.directory = dir;
    for (const auto& mod : kUciharModalities) {
      const std::string file = std::string(mod.name) + ".mmts";
      write_mmts(arrays[split][mod.name], dir / file);
      m.modalities.push_back({mod.name, file});
    }
    write_labels(labels[split], dir / m.labels_file);
    write_manifest(m, dir / "manifest.json");
    if (split == "train") {
      result.train = m;
      result.train_manifest = dir / "manifest.json";
    } else {
      result.test = m;
      result.test_manifest = dir / "manifest.json";
    }
  }
  return result;
}

}  // namespace mate::dataio

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mate/array.hpp"

namespace mate::dataio {

namespace fs = std::filesystem;

// MMTS layout (all integers little-endian):
//   offset 0   4 bytes  magic "MMTS"
//   offset 4   1 byte   version = 0x01
//   offset 5   1 byte   dtype   = 0x01 (IEEE-754 binary32, little-endian)
//   offset 6   2 bytes  reserved, zero
//   offset 8   uint32   N
//   offset 12  uint32   T
//   offset 16  uint32   C
//   offset 20  N*T*C float32 values, row-major (window, time, channel)
inline constexpr std::size_t kMmtsHeaderBytes = 20;
inline constexpr unsigned char kMmtsVersion = 0x01;
inline constexpr unsigned char kMmtsFloat32 = 0x01;

std::vector<unsigned char> encode_mmts(const Array3f& array);
Array3f decode_mmts(std::span<const unsigned char> bytes);
void write_mmts(const Array3f& array, const fs::path& path);
Array3f read_mmts(const fs::path& path);

// Slices a continuous [length, channels] series into N = floor((length - T) / stride) + 1
// windows of T steps.
Array3f window_raw_series(std::span<const float> series, std::size_t channels, std::size_t T,
                          std::size_t stride);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
};

struct ModalityEntry {
  std::string name;
  std::string file;
};

struct DatasetManifest {
  std::string name;
  std::vector<ModalityEntry> modalities;
  std::string labels_file;
  int num_classes = 0;
  int window_length = 0;
  std::map<std::string, std::string> latents;           // e.g. latent_c -> latent_c.mmts
  std::map<std::string, ChannelStats> normalization;    // keyed by modality name
  fs::path directory;                                   // not serialized; relative paths resolve here
};

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text, const fs::path& directory);
void write_manifest(const DatasetManifest& manifest, const fs::path& path);
// Parses and validates: referenced files exist, every modality shares N and T,
// the label file has N lines with values in [0, num_classes).
DatasetManifest read_manifest(const fs::path& path);

std::vector<int> read_labels(const fs::path& path);
void write_labels(const std::vector<int>& labels, const fs::path& path);

struct MultiModalDataset {
  std::string name;
  std::vector<std::string> modality_names;
  std::vector<Array3f> modalities;
  std::vector<int> labels;
  int num_classes = 0;
  std::map<std::string, Array3f> latents;

  std::size_t size() const { return labels.size(); }
  std::size_t window_length() const { return modalities.empty() ? 0 : modalities.front().t; }
  std::vector<int> obs_dims() const;
  // Windows [begin, end) of every array.
  MultiModalDataset slice(std::size_t begin, std::size_t end) const;
};

// Loads every array referenced by a manifest. When the manifest carries
// normalization statistics and normalize is set, observations are z-scored.
MultiModalDataset load_dataset(const fs::path& manifest_path, bool normalize = true);

ChannelStats compute_channel_stats(const Array3f& array);
void apply_channel_stats(Array3f& array, const ChannelStats& stats);

struct IngestResult {
  DatasetManifest train;
  DatasetManifest test;
  fs::path train_manifest;
  fs::path test_manifest;
};

// Converts the public UCI-HAR layout (<root>/{train,test}/Inertial Signals/*.txt
// and y_{train,test}.txt) into three MMTS modalities per split.
IngestResult ingest_ucihar(const fs::path& raw_root, const fs::path& out_dir);

}  // namespace mate::dataio

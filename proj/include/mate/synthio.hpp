#pragma once

#include <filesystem>

#include "mate/dataio.hpp"
#include "mate/synthgen.hpp"

namespace mate {

// Writes observations (modality1..M), labels, ground-truth latents (latent_c,
// latent_s_1..M), mixing parameters and a manifest into dir. Normalization
// statistics are computed on the leading (1 - test_fraction) share of windows.
dataio::DatasetManifest write_generated_dataset(const synthgen::GeneratedDataset& data,
                                                const std::filesystem::path& dir, double test_fraction = 0.2);

Array3f to_float(const Array3d& array);

}  // namespace mate

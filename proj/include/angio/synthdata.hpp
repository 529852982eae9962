#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "angio/image.hpp"

namespace angio {

// Phantom generator configuration. Vessels are dark tubes with a Gaussian
// cross-section on a smooth bright background; ground truth is the set of
// pixels where the noiseless dip exceeds half its peak.
struct PhantomConfig {
    int size = 64;
    int n_trees = 1;
    int branch_depth = 3;
    double tube_width_min = 2.0;
    double tube_width_max = 6.0;
    double vessel_contrast = 0.4;
    double noise_sigma = 0.02;
    double background_gradient = 0.1;
    std::uint64_t seed = 0;
};

// Draws n_trees branching centerline polylines (recursive midpoint-perturbed
// segments), rasterizes them with Gaussian cross-section dips, adds noise and
// clamps to [0,1]. Retries with derived sub-seeds (up to 10 attempts) until
// the vessel pixel fraction lands in [0.01, 0.30]; beyond that the config is
// rejected.
std::pair<GrayImage, BinaryMask> generate_phantom(const PhantomConfig& cfg);

// Serializes the config as canonical "key=value" lines (hash input and
// manifest payload).
std::string phantom_config_canonical(const PhantomConfig& cfg);

// FNV-1a 64 over the canonical serialization, as 16 hex digits.
std::string phantom_config_hash(const PhantomConfig& cfg);

// Writes train/test image+mask pairs and a manifest.json that pins the seed
// and config hash, so a benchmark can be regenerated identically. Returns the
// list of written relative paths.
struct BenchmarkLayout {
    std::string root;
    std::string train_images;
    std::string train_masks;
    std::string test_images;
    std::string test_masks;
    std::string manifest;
};
BenchmarkLayout make_benchmark(const std::string& out_dir, std::uint64_t seed, int n_train,
                               int n_test, const PhantomConfig& base_cfg = PhantomConfig{});

}  // namespace angio

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "angio/image.hpp"

namespace angio {

// Per-pixel tube-likeness response; nonnegative.
struct VesselnessMap {
    int width = 0;
    int height = 0;
    std::vector<double> response;

    VesselnessMap() = default;
    VesselnessMap(int w, int h)
        : width(w), height(h), response(static_cast<std::size_t>(w) * h, 0.0) {}

    double& at(int x, int y) { return response[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return response[static_cast<std::size_t>(y) * width + x]; }
};

enum class Polarity { bright_vessels, dark_vessels };

struct FrangiConfig {
    std::vector<double> scales = {1.0, 2.0, 3.0, 4.0};
    double alpha = 92.0;                         // adaptive-threshold percentile
    Polarity polarity = Polarity::dark_vessels;  // angiographic vessels are dark
    int connectivity = 8;                        // region growing: 4 or 8
    int multi_seed = 1;                          // seeds for region growing
};

struct Pixel {
    int x = 0;
    int y = 0;
};

struct RegionGrowResult {
    BinaryMask mask;
    int skipped_seeds = 0;  // seeds that landed on zero bits
    bool no_growth = false; // every seed was skipped
};

// Response at one scale: smooth at sigma, Hessian, eigenvalues |l1| <= |l2|;
// response = |l1| where l2 < 0, else 0. Dark-vessels mode negates intensities
// first so dark tube centers produce l2 < 0.
VesselnessMap vesselness_at_scale(const GrayImage& img, double sigma, Polarity polarity);

// Pixel-wise maximum over cfg.scales.
VesselnessMap multiscale_vesselness(const GrayImage& img, const FrangiConfig& cfg);

// T = alpha-th percentile of all responses; bit = response >= T.
BinaryMask adaptive_threshold(const VesselnessMap& v, double alpha);

// k highest-response pixels, ties broken by smaller row-major index.
std::vector<Pixel> select_seeds(const VesselnessMap& v, int k);

// Union of the connected components of the threshold mask that contain a seed.
RegionGrowResult region_grow(const BinaryMask& threshold_mask, const std::vector<Pixel>& seeds,
                             int connectivity);

// The full three-stage extractor. A degenerate all-zero vesselness map yields
// an empty mask rather than the all-ones threshold result.
BinaryMask extract_anatomy(const GrayImage& img, const FrangiConfig& cfg);

// extract_anatomy plus the per-image numbers the extract CSV reports.
struct ExtractReport {
    BinaryMask mask;
    double threshold = 0.0;
    std::vector<Pixel> seeds;
    bool degenerate = false;  // all-zero vesselness map
};
ExtractReport extract_anatomy_report(const GrayImage& img, const FrangiConfig& cfg);

}  // namespace angio

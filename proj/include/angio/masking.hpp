#pragma once

#include <cstdint>
#include <vector>

#include "angio/image.hpp"
#include "angio/rng.hpp"

namespace angio {

// Non-overlapping patch tiling; the image must tile exactly.
struct PatchGrid {
    int patch_size = 0;
    int grid_h = 0;
    int grid_w = 0;
    int patch_count() const { return grid_h * grid_w; }
};

PatchGrid make_patch_grid(int width, int height, int patch_size);

// Per-patch vessel-pixel distribution: probs[i] = counts[i] / total, with a
// uniform 1/N fallback when the mask holds no vessel pixels at all.
struct AnatomyDistribution {
    std::vector<double> probs;
    std::vector<long long> vessel_counts;
    long long total_vessel_pixels = 0;
};

// Linear guidance ramp over training: beta0 at epoch 0, betaE at epoch E.
struct Schedule {
    double beta0 = 0.0;
    double betaE = 0.5;
    int max_epoch = 200;  // E
};

// One epoch's masking decision for one image: the masked set, partitioned
// into the guidance-sampled and uniformly-sampled subsets. All three lists
// are sorted ascending (canonical form).
struct MaskPlan {
    std::vector<int> masked;
    std::vector<int> guided;
    std::vector<int> random;
    double gamma = 0.0;
    int epoch = 0;
};

// Vessel pixels per patch, row-major patch order.
std::vector<long long> patch_vessel_counts(const BinaryMask& mask, int patch_size);

AnatomyDistribution anatomy_distribution(const std::vector<long long>& counts);

// beta_e = beta0 + (e/E)(betaE - beta0); e must lie in [0, E].
double beta_at(const Schedule& s, int e);

// Round-half-up; pins the gammaN / beta*gamma*N cardinalities.
long long round_half_up(double x);

// k_total = rhu(gamma*N) patches masked; k_guided = min(rhu(beta_e*gamma*N),
// k_total) drawn without replacement proportional to f.probs (sequential
// renormalizing draw); if fewer indices have positive probability the
// shortfall moves to the random pool; the rest are drawn uniformly without
// replacement from the unchosen indices.
MaskPlan sample_mask_plan(const AnatomyDistribution& f, double gamma, double beta_e, Rng& rng,
                          int epoch = 0);

// Fraction of masked patches that contain at least one vessel pixel.
double masked_vessel_proportion(const MaskPlan& plan, const std::vector<long long>& counts);

// Per-patch fraction of epochs in which the patch was masked.
std::vector<double> cumulative_mask_ratio(const std::vector<MaskPlan>& plans, int patch_count);

}  // namespace angio

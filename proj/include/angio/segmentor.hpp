#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "angio/image.hpp"
#include "angio/rng.hpp"

namespace angio {

// Minimal fully-convolutional segmentor: 3x3 conv (1->c) + rectifier,
// 3x3 conv (c->c) + rectifier, 1x1 conv (c->1) + logistic. Mirror padding
// keeps dimensions. Gradients are hand-rolled reverse-mode and verified
// against finite differences.
struct SegmentorModel {
    int c = 8;
    std::vector<double> w1;  // [c][3][3], kernel row-major (ky, kx)
    std::vector<double> b1;  // [c]
    std::vector<double> w2;  // [c_out][c_in][3][3]
    std::vector<double> b2;  // [c]
    std::vector<double> w3;  // [c] (1x1 conv)
    double b3 = 0.0;
    bool frozen = false;
};

long long segmentor_param_count(int c);

SegmentorModel init_segmentor(int c, Rng& rng);

// Probability map in (0,1), same dimensions as the input.
GrayImage seg_forward(const SegmentorModel& model, const GrayImage& img);

struct SegGrads {
    std::vector<double> w1, b1, w2, b2, w3;
    double b3 = 0.0;
    std::vector<double> input;  // d loss / d pixel
};

enum class ConsMetric { cross_entropy, l1, dice };

struct SegLossResult {
    double loss = 0.0;
    SegGrads grads;
};

// Mean pixel-wise binary cross-entropy of the forward probabilities against
// targets in [0,1], probabilities clamped to [eps, 1-eps] with eps = 1e-7;
// reverse-mode gradients for every parameter and for the input image.
SegLossResult seg_loss(const SegmentorModel& model, const GrayImage& img, const BinaryMask& target);

// General-target variant used by the consistency loss; metric selects
// cross-entropy (default), L1, or soft Dice. want_param_grads=false skips the
// parameter accumulation when only the input gradient is needed.
SegLossResult seg_loss_with_targets(const SegmentorModel& model, const GrayImage& img,
                                    const std::vector<double>& targets, ConsMetric metric,
                                    bool want_param_grads = true);

// Plain SGD on the cross-entropy loss, one update per sample, order shuffled
// each epoch by rng. Returns the per-epoch mean loss (evaluated at the
// pre-update parameters of each step). Frozen models are rejected.
std::vector<double> seg_train(SegmentorModel& model,
                              const std::vector<std::pair<GrayImage, BinaryMask>>& data,
                              int epochs, double lr, Rng& rng);

// Marks the model frozen: forward and input gradients stay available,
// parameter updates are rejected. Idempotent.
void freeze(SegmentorModel& model);

// Flat binary checkpoint: magic "ASEG0001", c as u32 LE, then parameters as
// f64 LE in declared order.
void save_segmentor(const SegmentorModel& model, const std::string& path);
SegmentorModel load_segmentor(const std::string& path);

}  // namespace angio

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "angio/image.hpp"
#include "angio/masking.hpp"
#include "angio/rng.hpp"
#include "angio/segmentor.hpp"

namespace angio {

// Toy masked-image model. Patches are embedded linearly, visible embeddings
// are averaged into a single context vector, and one shared reconstruction
// for all masked patches is decoded from [mask_token ; context] through a
// single-hidden-layer perceptron. Visible patches pass through unchanged.
struct MimModel {
    int patch_size = 8;
    int embed_dim = 32;
    int hidden_dim = 64;
    std::vector<double> we;          // [embed_dim][patch_size^2]
    std::vector<double> be;          // [embed_dim]
    std::vector<double> wc;          // [embed_dim][embed_dim], no bias
    std::vector<double> mask_token;  // [embed_dim]
    std::vector<double> wh;          // [hidden_dim][2*embed_dim]
    std::vector<double> bh;          // [hidden_dim]
    std::vector<double> wo;          // [patch_size^2][hidden_dim]
    std::vector<double> bo;          // [patch_size^2]
};

MimModel init_mim(int patch_size, int embed_dim, int hidden_dim, Rng& rng);

// Copies patch `patch_idx` of the grid out of the image, row-major.
std::vector<double> extract_patch(const GrayImage& img, const PatchGrid& grid, std::size_t patch_idx);

struct MimForward {
    std::vector<double> recon;      // patch_size^2, shared across masked patches
    GrayImage composite;            // original with masked patches replaced
    // caches for reverse mode
    std::vector<double> visible_patch_sum;  // patch_size^2, sum of visible patches
    std::vector<double> mean_embed;         // embed_dim (zeros when nothing visible)
    std::vector<double> ctx;                // embed_dim
    std::vector<double> z;                  // 2*embed_dim = [mask_token ; ctx]
    std::vector<double> hpre, hact;         // hidden_dim
    std::size_t n_visible = 0;
};

MimForward mim_forward(const MimModel& model, const GrayImage& img, const PatchGrid& grid,
                       const MaskPlan& plan);

// Loss value plus its gradient with respect to the shared reconstruction.
struct LossGrad {
    double value = 0.0;
    std::vector<double> drecon;  // patch_size^2
};

// Mean over masked patches of the per-patch mean squared error between the
// shared reconstruction and the original patch. Empty masked set gives 0.
LossGrad loss_rec(const MimForward& fw, const GrayImage& img, const PatchGrid& grid,
                  const MaskPlan& plan);

// Anatomy-weighted variant: per-patch errors weighted by the patch's share of
// the anatomy distribution, renormalized over the masked set. A zero-mass or
// perfectly uniform masked set falls back to the unweighted path bit-for-bit.
LossGrad loss_wrec(const MimForward& fw, const GrayImage& img, const PatchGrid& grid,
                   const MaskPlan& plan, const AnatomyDistribution& dist);

// Anatomical consistency: pixel loss of segmentor(composite) against hard
// targets thresholded from segmentor(original) at 0.5 (ties to background),
// targets treated as constants. The segmentor must be frozen. cached_targets
// short-circuits the target pass when the caller already has them.
LossGrad loss_cons(const SegmentorModel& seg, const GrayImage& img, const MimForward& fw,
                   const PatchGrid& grid, const MaskPlan& plan, ConsMetric metric,
                   const std::vector<double>* cached_targets = nullptr);

struct TrainLossOptions {
    bool cons = true;
    bool wrec = false;
    ConsMetric metric = ConsMetric::cross_entropy;
};

struct TrainLoss {
    double l_rec = 0.0;
    double l_cons = 0.0;
    double l_train = 0.0;  // always formed as l_rec + l_cons
    std::vector<double> drecon;
};

// Combined objective. With the consistency term disabled l_cons is exactly 0
// and l_train equals l_rec bit-for-bit.
TrainLoss loss_train(const MimModel& model, const SegmentorModel* seg, const GrayImage& img,
                     const MimForward& fw, const PatchGrid& grid, const MaskPlan& plan,
                     const AnatomyDistribution& dist, const TrainLossOptions& opt,
                     const std::vector<double>* cached_targets = nullptr);

struct MimGrads {
    std::vector<double> we, be, wc, mask_token, wh, bh, wo, bo;
};

MimGrads mim_backward(const MimModel& model, const MimForward& fw,
                      const std::vector<double>& drecon);

struct PretrainConfig {
    int patch_size = 8;
    int embed_dim = 32;
    int hidden_dim = 64;
    double gamma = 0.5;
    double beta0 = 0.0;
    double betaE = 0.5;
    int epochs = 200;
    double lr = 0.01;
    int batch_size = 8;
    std::uint64_t seed = 0;
    int workers = 1;
    bool cons = true;
    bool wrec = false;
    ConsMetric metric = ConsMetric::cross_entropy;
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double beta = 0.0;
    double l_rec = 0.0;
    double l_cons = 0.0;
    double l_train = 0.0;
    double masked_vessel_proportion = 0.0;  // mean over images
};

struct PretrainResult {
    MimModel model;
    std::vector<EpochStats> curve;
    // Per image: fraction of epochs in which each patch was masked.
    std::vector<std::vector<double>> cumulative;
};

// Full pretraining loop. anatomy[i] is the vessel mask steering image i's
// sampling. The per-image plan at epoch e draws from a child generator seeded
// by derive_seed(cfg.seed, e, i), so results are independent of batch split
// and worker count. Updates average gradients over each batch (fixed
// ascending image order, summed in index order).
PretrainResult pretrain(const std::vector<GrayImage>& images,
                        const std::vector<BinaryMask>& anatomy, const SegmentorModel* seg,
                        const PretrainConfig& cfg);

// Patch embeddings e_i = We p_i + be, flattened (patch-major).
std::vector<double> encode_features(const MimModel& model, const GrayImage& img,
                                    const PatchGrid& grid);

struct ProbeResult {
    double mean_dsc = 0.0;
    double mean_cldice = 0.0;
    std::vector<double> per_image_dsc;
};

// Linear probe on frozen patch embeddings: logits W e_i + b per patch,
// trained with pixel-wise cross-entropy (per-image SGD, shuffled), then
// evaluated on the test pairs at threshold 0.5.
ProbeResult probe_train_eval(const MimModel& model,
                             const std::vector<std::pair<GrayImage, BinaryMask>>& train,
                             const std::vector<std::pair<GrayImage, BinaryMask>>& test,
                             int epochs, double lr, std::uint64_t seed);

// Flat binary checkpoint: magic "AMIM0001", patch_size/embed_dim/hidden_dim
// as u32 LE, then parameters as f64 LE in declared order.
void save_mim(const MimModel& model, const std::string& path);
MimModel load_mim(const std::string& path);

}  // namespace angio

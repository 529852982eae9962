#include "angio/mim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "angio/errors.hpp"
#include "angio/metrics.hpp"
#include "angio/parallel.hpp"

namespace angio {

namespace {

constexpr double kProbEps = 1e-7;

void check_model(const MimModel& m) {
    const std::size_t pp = static_cast<std::size_t>(m.patch_size) * m.patch_size;
    const std::size_t d = static_cast<std::size_t>(m.embed_dim);
    const std::size_t h = static_cast<std::size_t>(m.hidden_dim);
    if (m.patch_size < 1 || m.embed_dim < 1 || m.hidden_dim < 1)
        throw param_error("mim model: dimensions must be >= 1");
    if (m.we.size() != d * pp || m.be.size() != d || m.wc.size() != d * d ||
        m.mask_token.size() != d || m.wh.size() != h * 2 * d || m.bh.size() != h ||
        m.wo.size() != pp * h || m.bo.size() != pp)
        throw shape_error("mim model: parameter buffers inconsistent with dimensions");
}

std::vector<double> hard_targets(const GrayImage& probs) {
    std::vector<double> t(probs.pixels.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = probs.pixels[i] > 0.5 ? 1.0 : 0.0;
    return t;
}

void write_u32_le(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64_le(std::ofstream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32_le(std::ifstream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw format_error("truncated checkpoint: " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double read_f64_le(std::ifstream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw format_error("truncated checkpoint: " + path);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace

MimModel init_mim(int patch_size, int embed_dim, int hidden_dim, Rng& rng) {
    if (patch_size < 1 || embed_dim < 1 || hidden_dim < 1)
        throw param_error("init_mim: dimensions must be >= 1");
    MimModel m;
    m.patch_size = patch_size;
    m.embed_dim = embed_dim;
    m.hidden_dim = hidden_dim;
    const std::size_t pp = static_cast<std::size_t>(patch_size) * patch_size;
    const std::size_t d = static_cast<std::size_t>(embed_dim);
    const std::size_t h = static_cast<std::size_t>(hidden_dim);
    m.we.resize(d * pp);
    m.be.assign(d, 0.0);
    m.wc.resize(d * d);
    m.mask_token.resize(d);
    m.wh.resize(h * 2 * d);
    m.bh.assign(h, 0.0);
    m.wo.resize(pp * h);
    m.bo.assign(pp, 0.0);
    const double se = std::sqrt(2.0 / static_cast<double>(pp));
    const double sc = std::sqrt(2.0 / static_cast<double>(d));
    const double sh = std::sqrt(2.0 / static_cast<double>(2 * d));
    const double so = std::sqrt(2.0 / static_cast<double>(h));
    for (double& v : m.we) v = rng.gauss() * se;
    for (double& v : m.wc) v = rng.gauss() * sc;
    for (double& v : m.mask_token) v = rng.gauss() * 0.02;
    for (double& v : m.wh) v = rng.gauss() * sh;
    for (double& v : m.wo) v = rng.gauss() * so;
    return m;
}

std::vector<double> extract_patch(const GrayImage& img, const PatchGrid& grid,
                                  std::size_t patch_idx) {
    const int P = grid.patch_size;
    if (patch_idx >= static_cast<std::size_t>(grid.patch_count()))
        throw param_error("extract_patch: patch index out of range");
    const int gy = static_cast<int>(patch_idx) / grid.grid_w;
    const int gx = static_cast<int>(patch_idx) % grid.grid_w;
    std::vector<double> p(static_cast<std::size_t>(P) * P);
    for (int py = 0; py < P; ++py)
        for (int px = 0; px < P; ++px)
            p[static_cast<std::size_t>(py) * P + px] = img.at(gx * P + px, gy * P + py);
    return p;
}

MimForward mim_forward(const MimModel& model, const GrayImage& img, const PatchGrid& grid,
                       const MaskPlan& plan) {
    check_model(model);
    if (grid.patch_size != model.patch_size)
        throw shape_error("mim_forward: grid patch size differs from model patch size");
    if (grid.grid_w * grid.patch_size != img.width || grid.grid_h * grid.patch_size != img.height)
        throw shape_error("mim_forward: grid does not tile the image");
    const int N = grid.patch_count();
    const std::size_t pp = static_cast<std::size_t>(model.patch_size) * model.patch_size;
    const std::size_t d = static_cast<std::size_t>(model.embed_dim);
    const std::size_t h = static_cast<std::size_t>(model.hidden_dim);

    std::vector<char> is_masked(static_cast<std::size_t>(N), 0);
    for (int idx : plan.masked) {
        if (idx < 0 || idx >= N) throw param_error("mim_forward: plan index out of range");
        is_masked[static_cast<std::size_t>(idx)] = 1;
    }

    MimForward fw;
    fw.visible_patch_sum.assign(pp, 0.0);
    for (int i = 0; i < N; ++i) {
        if (is_masked[static_cast<std::size_t>(i)]) continue;
        const std::vector<double> p = extract_patch(img, grid, static_cast<std::size_t>(i));
        for (std::size_t t = 0; t < pp; ++t) fw.visible_patch_sum[t] += p[t];
        ++fw.n_visible;
    }

    // Mean visible embedding via linearity: We * mean(p) + be.
    fw.mean_embed.assign(d, 0.0);
    if (fw.n_visible > 0) {
        const double inv = 1.0 / static_cast<double>(fw.n_visible);
        for (std::size_t a = 0; a < d; ++a) {
            double acc = model.be[a];
            const double* row = &model.we[a * pp];
            for (std::size_t t = 0; t < pp; ++t) acc += row[t] * fw.visible_patch_sum[t] * inv;
            fw.mean_embed[a] = acc;
        }
    }

    fw.ctx.assign(d, 0.0);
    if (fw.n_visible > 0) {
        for (std::size_t a = 0; a < d; ++a) {
            double acc = 0.0;
            const double* row = &model.wc[a * d];
            for (std::size_t b = 0; b < d; ++b) acc += row[b] * fw.mean_embed[b];
            fw.ctx[a] = acc;
        }
    }

    fw.z.resize(2 * d);
    std::copy(model.mask_token.begin(), model.mask_token.end(), fw.z.begin());
    std::copy(fw.ctx.begin(), fw.ctx.end(), fw.z.begin() + static_cast<std::ptrdiff_t>(d));

    fw.hpre.resize(h);
    fw.hact.resize(h);
    for (std::size_t k = 0; k < h; ++k) {
        double acc = model.bh[k];
        const double* row = &model.wh[k * 2 * d];
        for (std::size_t l = 0; l < 2 * d; ++l) acc += row[l] * fw.z[l];
        fw.hpre[k] = acc;
        fw.hact[k] = acc > 0.0 ? acc : 0.0;
    }

    fw.recon.resize(pp);
    for (std::size_t j = 0; j < pp; ++j) {
        double acc = model.bo[j];
        const double* row = &model.wo[j * h];
        for (std::size_t k = 0; k < h; ++k) acc += row[k] * fw.hact[k];
        fw.recon[j] = acc;
    }

    fw.composite = img;
    const int P = model.patch_size;
    for (int idx : plan.masked) {
        const int gy = idx / grid.grid_w;
        const int gx = idx % grid.grid_w;
        for (int py = 0; py < P; ++py)
            for (int px = 0; px < P; ++px)
                fw.composite.pixels[static_cast<std::size_t>(gy * P + py) * img.width + gx * P + px] =
                    fw.recon[static_cast<std::size_t>(py) * P + px];
    }
    return fw;
}

LossGrad loss_rec(const MimForward& fw, const GrayImage& img, const PatchGrid& grid,
                  const MaskPlan& plan) {
    const std::size_t pp = fw.recon.size();
    LossGrad out;
    out.drecon.assign(pp, 0.0);
    if (plan.masked.empty()) return out;
    const double inv_k = 1.0 / static_cast<double>(plan.masked.size());
    const double inv_pp = 1.0 / static_cast<double>(pp);
    double loss = 0.0;
    for (int idx : plan.masked) {
        const std::vector<double> p = extract_patch(img, grid, static_cast<std::size_t>(idx));
        double mse = 0.0;
        for (std::size_t t = 0; t < pp; ++t) {
            const double diff = fw.recon[t] - p[t];
            mse += diff * diff;
            out.drecon[t] += inv_k * inv_pp * 2.0 * diff;
        }
        loss += inv_k * inv_pp * mse;
    }
    out.value = loss;
    return out;
}

LossGrad loss_wrec(const MimForward& fw, const GrayImage& img, const PatchGrid& grid,
                   const MaskPlan& plan, const AnatomyDistribution& dist) {
    if (plan.masked.empty()) return loss_rec(fw, img, grid, plan);
    double z = 0.0;
    bool uniform = true;
    for (int idx : plan.masked) {
        const double w = dist.probs.at(static_cast<std::size_t>(idx));
        z += w;
        if (w != dist.probs.at(static_cast<std::size_t>(plan.masked.front()))) uniform = false;
    }
    if (z == 0.0 || uniform) return loss_rec(fw, img, grid, plan);

    const std::size_t pp = fw.recon.size();
    const double inv_pp = 1.0 / static_cast<double>(pp);
    LossGrad out;
    out.drecon.assign(pp, 0.0);
    double loss = 0.0;
    for (int idx : plan.masked) {
        const double w = dist.probs[static_cast<std::size_t>(idx)] / z;
        const std::vector<double> p = extract_patch(img, grid, static_cast<std::size_t>(idx));
        double mse = 0.0;
        for (std::size_t t = 0; t < pp; ++t) {
            const double diff = fw.recon[t] - p[t];
            mse += diff * diff;
            out.drecon[t] += w * inv_pp * 2.0 * diff;
        }
        loss += w * inv_pp * mse;
    }
    out.value = loss;
    return out;
}

LossGrad loss_cons(const SegmentorModel& seg, const GrayImage& img, const MimForward& fw,
                   const PatchGrid& grid, const MaskPlan& plan, ConsMetric metric,
                   const std::vector<double>* cached_targets) {
    if (!seg.frozen) throw state_error("loss_cons: segmentor must be frozen");
    std::vector<double> targets;
    const std::vector<double>* tptr = cached_targets;
    if (tptr == nullptr) {
        targets = hard_targets(seg_forward(seg, img));
        tptr = &targets;
    }
    if (tptr->size() != img.pixels.size())
        throw shape_error("loss_cons: target size differs from image");
    const SegLossResult r =
        seg_loss_with_targets(seg, fw.composite, *tptr, metric, /*want_param_grads=*/false);

    const int P = grid.patch_size;
    LossGrad out;
    out.value = r.loss;
    out.drecon.assign(static_cast<std::size_t>(P) * P, 0.0);
    for (int idx : plan.masked) {
        const int gy = idx / grid.grid_w;
        const int gx = idx % grid.grid_w;
        for (int py = 0; py < P; ++py)
            for (int px = 0; px < P; ++px)
                out.drecon[static_cast<std::size_t>(py) * P + px] +=
                    r.grads.input[static_cast<std::size_t>(gy * P + py) * img.width + gx * P + px];
    }
    return out;
}

TrainLoss loss_train(const MimModel& model, const SegmentorModel* seg, const GrayImage& img,
                     const MimForward& fw, const PatchGrid& grid, const MaskPlan& plan,
                     const AnatomyDistribution& dist, const TrainLossOptions& opt,
                     const std::vector<double>* cached_targets) {
    (void)model;
    TrainLoss tl;
    const LossGrad rec = opt.wrec ? loss_wrec(fw, img, grid, plan, dist)
                                  : loss_rec(fw, img, grid, plan);
    tl.l_rec = rec.value;
    tl.drecon = rec.drecon;
    if (opt.cons) {
        if (seg == nullptr) throw param_error("loss_train: consistency enabled without a segmentor");
        const LossGrad cons = loss_cons(*seg, img, fw, grid, plan, opt.metric, cached_targets);
        tl.l_cons = cons.value;
        for (std::size_t t = 0; t < tl.drecon.size(); ++t) tl.drecon[t] += cons.drecon[t];
    } else {
        tl.l_cons = 0.0;
    }
    tl.l_train = tl.l_rec + tl.l_cons;
    return tl;
}

MimGrads mim_backward(const MimModel& model, const MimForward& fw,
                      const std::vector<double>& drecon) {
    check_model(model);
    const std::size_t pp = static_cast<std::size_t>(model.patch_size) * model.patch_size;
    const std::size_t d = static_cast<std::size_t>(model.embed_dim);
    const std::size_t h = static_cast<std::size_t>(model.hidden_dim);
    if (drecon.size() != pp) throw shape_error("mim_backward: drecon size mismatch");

    MimGrads g;
    g.we.assign(d * pp, 0.0);
    g.be.assign(d, 0.0);
    g.wc.assign(d * d, 0.0);
    g.mask_token.assign(d, 0.0);
    g.wh.assign(h * 2 * d, 0.0);
    g.bh.assign(h, 0.0);
    g.wo.assign(pp * h, 0.0);
    g.bo.assign(pp, 0.0);

    std::vector<double> dhact(h, 0.0);
    for (std::size_t j = 0; j < pp; ++j) {
        const double dr = drecon[j];
        g.bo[j] = dr;
        if (dr == 0.0) continue;
        const double* row = &model.wo[j * h];
        double* grow = &g.wo[j * h];
        for (std::size_t k = 0; k < h; ++k) {
            grow[k] = dr * fw.hact[k];
            dhact[k] += dr * row[k];
        }
    }

    std::vector<double> dz(2 * d, 0.0);
    for (std::size_t k = 0; k < h; ++k) {
        const double dh = fw.hpre[k] > 0.0 ? dhact[k] : 0.0;
        g.bh[k] = dh;
        if (dh == 0.0) continue;
        const double* row = &model.wh[k * 2 * d];
        double* grow = &g.wh[k * 2 * d];
        for (std::size_t l = 0; l < 2 * d; ++l) {
            grow[l] = dh * fw.z[l];
            dz[l] += dh * row[l];
        }
    }

    for (std::size_t a = 0; a < d; ++a) g.mask_token[a] = dz[a];

    std::vector<double> dmean(d, 0.0);
    for (std::size_t a = 0; a < d; ++a) {
        const double dctx = dz[d + a];
        if (dctx == 0.0) continue;
        const double* row = &model.wc[a * d];
        double* grow = &g.wc[a * d];
        for (std::size_t b = 0; b < d; ++b) {
            grow[b] = dctx * fw.mean_embed[b];
            dmean[b] += dctx * row[b];
        }
    }

    if (fw.n_visible > 0) {
        const double inv = 1.0 / static_cast<double>(fw.n_visible);
        for (std::size_t a = 0; a < d; ++a) {
            const double dm = dmean[a];
            g.be[a] = dm;
            if (dm == 0.0) continue;
            double* grow = &g.we[a * pp];
            for (std::size_t t = 0; t < pp; ++t) grow[t] = dm * fw.visible_patch_sum[t] * inv;
        }
    }
    return g;
}

PretrainResult pretrain(const std::vector<GrayImage>& images,
                        const std::vector<BinaryMask>& anatomy, const SegmentorModel* seg,
                        const PretrainConfig& cfg) {
    if (images.empty()) throw param_error("pretrain: empty dataset");
    if (anatomy.size() != images.size())
        throw param_error("pretrain: anatomy mask count differs from image count");
    if (cfg.epochs < 1) throw param_error("pretrain: epochs must be >= 1");
    if (cfg.batch_size < 1) throw param_error("pretrain: batch_size must be >= 1");
    if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw param_error("pretrain: gamma must be in (0,1)");
    if (cfg.lr <= 0.0) throw param_error("pretrain: lr must be positive");
    if (cfg.workers < 1) throw param_error("pretrain: workers must be >= 1");
    if (cfg.cons && seg == nullptr)
        throw param_error("pretrain: consistency enabled without a segmentor");
    if (cfg.cons && !seg->frozen) throw state_error("pretrain: segmentor must be frozen");

    const std::size_t n = images.size();
    std::vector<PatchGrid> grids(n);
    std::vector<std::vector<long long>> counts(n);
    std::vector<AnatomyDistribution> dists(n);
    for (std::size_t i = 0; i < n; ++i) {
        grids[i] = make_patch_grid(images[i].width, images[i].height, cfg.patch_size);
        if (anatomy[i].width != images[i].width || anatomy[i].height != images[i].height)
            throw shape_error("pretrain: anatomy mask dimensions differ from image");
        counts[i] = patch_vessel_counts(anatomy[i], cfg.patch_size);
        dists[i] = anatomy_distribution(counts[i]);
    }

    Rng init_rng(derive_seed(cfg.seed, 0, 0));
    PretrainResult res;
    res.model = init_mim(cfg.patch_size, cfg.embed_dim, cfg.hidden_dim, init_rng);

    // Hard consistency targets depend only on the frozen segmentor and the
    // original images, so they are computed once up front.
    std::vector<std::vector<double>> targets;
    if (cfg.cons) {
        targets.resize(n);
        parallel_for(n, cfg.workers, [&](std::size_t i) {
            targets[i] = hard_targets(seg_forward(*seg, images[i]));
        });
    }

    std::vector<std::vector<long long>> hits(n);
    for (std::size_t i = 0; i < n; ++i)
        hits[i].assign(static_cast<std::size_t>(grids[i].patch_count()), 0);

    const Schedule sched{cfg.beta0, cfg.betaE, cfg.epochs};
    const TrainLossOptions opt{cfg.cons, cfg.wrec, cfg.metric};

    struct Slot {
        MimGrads g;
        double rec = 0.0, cons = 0.0, mvp = 0.0;
        std::vector<int> masked;
    };

    res.curve.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int e = 1; e <= cfg.epochs; ++e) {
        const double beta = beta_at(sched, e);
        double rec_sum = 0.0, cons_sum = 0.0, mvp_sum = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t bn = std::min(n - start, static_cast<std::size_t>(cfg.batch_size));
            std::vector<Slot> slots(bn);
            parallel_for(bn, cfg.workers, [&](std::size_t b) {
                const std::size_t idx = start + b;
                Rng child(derive_seed(cfg.seed, static_cast<std::uint64_t>(e),
                                      static_cast<std::uint64_t>(idx)));
                const MaskPlan plan = sample_mask_plan(dists[idx], cfg.gamma, beta, child, e);
                const MimForward fw = mim_forward(res.model, images[idx], grids[idx], plan);
                const TrainLoss tl =
                    loss_train(res.model, seg, images[idx], fw, grids[idx], plan, dists[idx], opt,
                               cfg.cons ? &targets[idx] : nullptr);
                Slot& s = slots[b];
                s.g = mim_backward(res.model, fw, tl.drecon);
                s.rec = tl.l_rec;
                s.cons = tl.l_cons;
                s.mvp = masked_vessel_proportion(plan, counts[idx]);
                s.masked = plan.masked;
            });
            MimGrads sum = slots[0].g;
            for (std::size_t b = 1; b < bn; ++b) {
                const MimGrads& g = slots[b].g;
                for (std::size_t i = 0; i < sum.we.size(); ++i) sum.we[i] += g.we[i];
                for (std::size_t i = 0; i < sum.be.size(); ++i) sum.be[i] += g.be[i];
                for (std::size_t i = 0; i < sum.wc.size(); ++i) sum.wc[i] += g.wc[i];
                for (std::size_t i = 0; i < sum.mask_token.size(); ++i)
                    sum.mask_token[i] += g.mask_token[i];
                for (std::size_t i = 0; i < sum.wh.size(); ++i) sum.wh[i] += g.wh[i];
                for (std::size_t i = 0; i < sum.bh.size(); ++i) sum.bh[i] += g.bh[i];
                for (std::size_t i = 0; i < sum.wo.size(); ++i) sum.wo[i] += g.wo[i];
                for (std::size_t i = 0; i < sum.bo.size(); ++i) sum.bo[i] += g.bo[i];
            }
            for (std::size_t b = 0; b < bn; ++b) {
                rec_sum += slots[b].rec;
                cons_sum += slots[b].cons;
                mvp_sum += slots[b].mvp;
                for (int p : slots[b].masked) ++hits[start + b][static_cast<std::size_t>(p)];
            }
            const double scale = cfg.lr / static_cast<double>(bn);
            MimModel& m = res.model;
            for (std::size_t i = 0; i < m.we.size(); ++i) m.we[i] -= scale * sum.we[i];
            for (std::size_t i = 0; i < m.be.size(); ++i) m.be[i] -= scale * sum.be[i];
            for (std::size_t i = 0; i < m.wc.size(); ++i) m.wc[i] -= scale * sum.wc[i];
            for (std::size_t i = 0; i < m.mask_token.size(); ++i)
                m.mask_token[i] -= scale * sum.mask_token[i];
            for (std::size_t i = 0; i < m.wh.size(); ++i) m.wh[i] -= scale * sum.wh[i];
            for (std::size_t i = 0; i < m.bh.size(); ++i) m.bh[i] -= scale * sum.bh[i];
            for (std::size_t i = 0; i < m.wo.size(); ++i) m.wo[i] -= scale * sum.wo[i];
            for (std::size_t i = 0; i < m.bo.size(); ++i) m.bo[i] -= scale * sum.bo[i];
        }
        EpochStats row;
        row.epoch = e;
        row.beta = beta;
        row.l_rec = rec_sum / static_cast<double>(n);
        row.l_cons = cons_sum / static_cast<double>(n);
        row.l_train = row.l_rec + row.l_cons;
        row.masked_vessel_proportion = mvp_sum / static_cast<double>(n);
        res.curve.push_back(row);
    }

    res.cumulative.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        res.cumulative[i].resize(hits[i].size());
        for (std::size_t p = 0; p < hits[i].size(); ++p)
            res.cumulative[i][p] =
                static_cast<double>(hits[i][p]) / static_cast<double>(cfg.epochs);
    }
    return res;
}

std::vector<double> encode_features(const MimModel& model, const GrayImage& img,
                                    const PatchGrid& grid) {
    check_model(model);
    if (grid.patch_size != model.patch_size)
        throw shape_error("encode_features: grid patch size differs from model patch size");
    const int N = grid.patch_count();
    const std::size_t pp = static_cast<std::size_t>(model.patch_size) * model.patch_size;
    const std::size_t d = static_cast<std::size_t>(model.embed_dim);
    std::vector<double> out(static_cast<std::size_t>(N) * d);
    for (int i = 0; i < N; ++i) {
        const std::vector<double> p = extract_patch(img, grid, static_cast<std::size_t>(i));
        for (std::size_t a = 0; a < d; ++a) {
            double acc = model.be[a];
            const double* row = &model.we[a * pp];
            for (std::size_t t = 0; t < pp; ++t) acc += row[t] * p[t];
            out[static_cast<std::size_t>(i) * d + a] = acc;
        }
    }
    return out;
}

ProbeResult probe_train_eval(const MimModel& model,
                             const std::vector<std::pair<GrayImage, BinaryMask>>& train,
                             const std::vector<std::pair<GrayImage, BinaryMask>>& test,
                             int epochs, double lr, std::uint64_t seed) {
    if (train.empty() || test.empty()) throw param_error("probe_train_eval: empty dataset");
    if (epochs < 1) throw param_error("probe_train_eval: epochs must be >= 1");
    const int P = model.patch_size;
    const std::size_t pp = static_cast<std::size_t>(P) * P;
    const std::size_t d = static_cast<std::size_t>(model.embed_dim);

    struct Prepared {
        PatchGrid grid;
        std::vector<double> feats;  // N x d
        const BinaryMask* label;
        const GrayImage* img;
    };
    auto prepare = [&](const std::vector<std::pair<GrayImage, BinaryMask>>& set) {
        std::vector<Prepared> out(set.size());
        for (std::size_t i = 0; i < set.size(); ++i) {
            out[i].grid = make_patch_grid(set[i].first.width, set[i].first.height, P);
            out[i].feats = encode_features(model, set[i].first, out[i].grid);
            out[i].label = &set[i].second;
            out[i].img = &set[i].first;
        }
        return out;
    };
    const std::vector<Prepared> tr = prepare(train);
    const std::vector<Prepared> te = prepare(test);

    // Zero-initialized logistic probe: differences between encoders come from
    // the features alone, not the probe init.
    std::vector<double> W(pp * d, 0.0);
    std::vector<double> B(pp, 0.0);

    Rng rng(seed);
    std::vector<std::size_t> order(tr.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int e = 0; e < epochs; ++e) {
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.below(i));
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t oi : order) {
            const Prepared& s = tr[oi];
            const int N = s.grid.patch_count();
            const double inv_n = 1.0 / (static_cast<double>(N) * static_cast<double>(pp));
            std::vector<double> dW(pp * d, 0.0), dB(pp, 0.0);
            for (int i = 0; i < N; ++i) {
                const double* f = &s.feats[static_cast<std::size_t>(i) * d];
                const int gy = i / s.grid.grid_w;
                const int gx = i % s.grid.grid_w;
                for (std::size_t j = 0; j < pp; ++j) {
                    double logit = B[j];
                    const double* row = &W[j * d];
                    for (std::size_t a = 0; a < d; ++a) logit += row[a] * f[a];
                    const double p = 1.0 / (1.0 + std::exp(-logit));
                    const int py = static_cast<int>(j) / P;
                    const int px = static_cast<int>(j) % P;
                    const double t =
                        s.label->at(gx * P + px, gy * P + py) ? 1.0 : 0.0;
                    const double dl = inv_n * (p - t);
                    dB[j] += dl;
                    double* wrow = &dW[j * d];
                    for (std::size_t a = 0; a < d; ++a) wrow[a] += dl * f[a];
                }
            }
            for (std::size_t i = 0; i < W.size(); ++i) W[i] -= lr * dW[i];
            for (std::size_t i = 0; i < B.size(); ++i) B[i] -= lr * dB[i];
        }
    }

    ProbeResult res;
    double dsc_sum = 0.0, cld_sum = 0.0;
    for (const Prepared& s : te) {
        const int N = s.grid.patch_count();
        BinaryMask pred;
        pred.width = s.img->width;
        pred.height = s.img->height;
        pred.bits.assign(static_cast<std::size_t>(pred.width) * pred.height, 0);
        for (int i = 0; i < N; ++i) {
            const double* f = &s.feats[static_cast<std::size_t>(i) * d];
            const int gy = i / s.grid.grid_w;
            const int gx = i % s.grid.grid_w;
            for (std::size_t j = 0; j < pp; ++j) {
                double logit = B[j];
                const double* row = &W[j * d];
                for (std::size_t a = 0; a < d; ++a) logit += row[a] * f[a];
                const double p = 1.0 / (1.0 + std::exp(-logit));
                const int py = static_cast<int>(j) / P;
                const int px = static_cast<int>(j) % P;
                if (p >= 0.5)
                    pred.bits[static_cast<std::size_t>(gy * P + py) * pred.width + gx * P + px] = 1;
            }
        }
        const double ds = dsc(pred, *s.label);
        dsc_sum += ds;
        cld_sum += cldice(pred, *s.label).cldice;
        res.per_image_dsc.push_back(ds);
    }
    res.mean_dsc = dsc_sum / static_cast<double>(te.size());
    res.mean_cldice = cld_sum / static_cast<double>(te.size());
    return res;
}

void save_mim(const MimModel& model, const std::string& path) {
    check_model(model);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os.write("AMIM0001", 8);
    write_u32_le(os, static_cast<std::uint32_t>(model.patch_size));
    write_u32_le(os, static_cast<std::uint32_t>(model.embed_dim));
    write_u32_le(os, static_cast<std::uint32_t>(model.hidden_dim));
    for (double v : model.we) write_f64_le(os, v);
    for (double v : model.be) write_f64_le(os, v);
    for (double v : model.wc) write_f64_le(os, v);
    for (double v : model.mask_token) write_f64_le(os, v);
    for (double v : model.wh) write_f64_le(os, v);
    for (double v : model.bh) write_f64_le(os, v);
    for (double v : model.wo) write_f64_le(os, v);
    for (double v : model.bo) write_f64_le(os, v);
    if (!os) throw io_error("write failed: " + path);
}

MimModel load_mim(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, "AMIM0001", 8) != 0)
        throw format_error("bad model checkpoint magic: " + path);
    const std::uint32_t P = read_u32_le(is, path);
    const std::uint32_t d = read_u32_le(is, path);
    const std::uint32_t h = read_u32_le(is, path);
    if (P < 1 || P > 1024 || d < 1 || d > 65536 || h < 1 || h > 65536)
        throw format_error("implausible dimensions in checkpoint: " + path);
    MimModel m;
    m.patch_size = static_cast<int>(P);
    m.embed_dim = static_cast<int>(d);
    m.hidden_dim = static_cast<int>(h);
    const std::size_t pp = static_cast<std::size_t>(P) * P;
    m.we.resize(static_cast<std::size_t>(d) * pp);
    m.be.resize(d);
    m.wc.resize(static_cast<std::size_t>(d) * d);
    m.mask_token.resize(d);
    m.wh.resize(static_cast<std::size_t>(h) * 2 * d);
    m.bh.resize(h);
    m.wo.resize(pp * h);
    m.bo.resize(pp);
    for (double& v : m.we) v = read_f64_le(is, path);
    for (double& v : m.be) v = read_f64_le(is, path);
    for (double& v : m.wc) v = read_f64_le(is, path);
    for (double& v : m.mask_token) v = read_f64_le(is, path);
    for (double& v : m.wh) v = read_f64_le(is, path);
    for (double& v : m.bh) v = read_f64_le(is, path);
    for (double& v : m.wo) v = read_f64_le(is, path);
    for (double& v : m.bo) v = read_f64_le(is, path);
    char extra;
    if (is.read(&extra, 1)) throw format_error("trailing bytes in checkpoint: " + path);
    return m;
}

}  // namespace angio

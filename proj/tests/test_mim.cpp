#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "angio/errors.hpp"
#include "angio/mim.hpp"

using namespace angio;
namespace fs = std::filesystem;

namespace {

GrayImage random_image(int w, int h, Rng& rng) {
    GrayImage img(w, h);
    for (auto& p : img.pixels) p = rng.uniform01();
    return img;
}

MaskPlan plan_of(std::vector<int> masked) {
    MaskPlan p;
    p.masked = std::move(masked);
    p.guided = p.masked;
    return p;
}

std::vector<double> hard_targets_of(const SegmentorModel& seg, const GrayImage& img) {
    const GrayImage p = seg_forward(seg, img);
    std::vector<double> t(p.pixels.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = p.pixels[i] > 0.5 ? 1.0 : 0.0;
    return t;
}

void check_close(double analytic, double numeric) {
    CHECK(std::abs(analytic - numeric) <= 1e-6 + 1e-3 * std::abs(numeric));
}

}  // namespace

TEST_CASE("init_mim shapes and determinism") {
    Rng a(1), b(1), c(2);
    const MimModel m1 = init_mim(4, 6, 8, a);
    const MimModel m2 = init_mim(4, 6, 8, b);
    const MimModel m3 = init_mim(4, 6, 8, c);
    CHECK(m1.we.size() == 6u * 16u);
    CHECK(m1.be.size() == 6u);
    CHECK(m1.wc.size() == 36u);
    CHECK(m1.mask_token.size() == 6u);
    CHECK(m1.wh.size() == 8u * 12u);
    CHECK(m1.bh.size() == 8u);
    CHECK(m1.wo.size() == 16u * 8u);
    CHECK(m1.bo.size() == 16u);
    CHECK(m1.we == m2.we);
    CHECK(m1.wo == m2.wo);
    CHECK(m1.we != m3.we);
    Rng r(0);
    CHECK_THROWS_AS(init_mim(0, 4, 4, r), param_error);
    CHECK_THROWS_AS(init_mim(4, 0, 4, r), param_error);
}

TEST_CASE("extract_patch copies row-major tiles") {
    GrayImage img(8, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x) img.at(x, y) = 10.0 * y + x;
    const PatchGrid grid = make_patch_grid(8, 4, 4);  // 2x1 grid
    const std::vector<double> p0 = extract_patch(img, grid, 0);
    const std::vector<double> p1 = extract_patch(img, grid, 1);
    REQUIRE(p0.size() == 16);
    CHECK(p0[0] == 0.0);    // (0,0)
    CHECK(p0[5] == 11.0);   // (1,1)
    CHECK(p1[0] == 4.0);    // (4,0)
    CHECK(p1[15] == 37.0);  // (7,3)
    CHECK_THROWS_AS(extract_patch(img, grid, 2), param_error);
}

TEST_CASE("mim_forward passes visible patches through bit-identically") {
    Rng rng(8);
    const MimModel m = init_mim(4, 6, 8, rng);
    const GrayImage img = random_image(16, 8, rng);
    const PatchGrid grid = make_patch_grid(16, 8, 4);  // 4x2, N=8
    const MaskPlan plan = plan_of({1, 6});
    const MimForward fw = mim_forward(m, img, grid, plan);
    CHECK(fw.n_visible == 6);
    REQUIRE(fw.composite.pixels.size() == img.pixels.size());

    for (int idx = 0; idx < 8; ++idx) {
        const bool masked = (idx == 1 || idx == 6);
        const int gy = idx / 4, gx = idx % 4;
        for (int py = 0; py < 4; ++py)
            for (int px = 0; px < 4; ++px) {
                const double got = fw.composite.at(gx * 4 + px, gy * 4 + py);
                if (masked)
                    CHECK(got == fw.recon[static_cast<std::size_t>(py) * 4 + px]);
                else
                    CHECK(got == img.at(gx * 4 + px, gy * 4 + py));
            }
    }

    // z concatenates [mask_token ; ctx].
    REQUIRE(fw.z.size() == 12);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(fw.z[i] == m.mask_token[i]);
        CHECK(fw.z[6 + i] == fw.ctx[i]);
    }
}

TEST_CASE("mim_forward with nothing visible uses a zero context") {
    Rng rng(3);
    const MimModel m = init_mim(4, 5, 6, rng);
    const GrayImage img = random_image(8, 8, rng);
    const PatchGrid grid = make_patch_grid(8, 8, 4);
    const MimForward fw = mim_forward(m, img, grid, plan_of({0, 1, 2, 3}));
    CHECK(fw.n_visible == 0);
    for (double v : fw.mean_embed) CHECK(v == 0.0);
    for (double v : fw.ctx) CHECK(v == 0.0);
    // Decoder still produces a reconstruction from the mask token alone.
    CHECK(fw.recon.size() == 16);

    CHECK_THROWS_AS(mim_forward(m, img, grid, plan_of({4})), param_error);
    const PatchGrid wrong = make_patch_grid(6, 6, 3);
    CHECK_THROWS_AS(mim_forward(m, img, wrong, plan_of({0})), shape_error);
}

TEST_CASE("mim_forward matches a hand-rolled tiny oracle") {
    // P=2, d=2, h=2, image 4x2 -> two patches; patch 1 masked.
    MimModel m;
    m.patch_size = 2;
    m.embed_dim = 2;
    m.hidden_dim = 2;
    m.we = {0.1, -0.2, 0.3, 0.4, 0.0, 0.5, -0.1, 0.2};  // [2][4]
    m.be = {0.05, -0.05};
    m.wc = {1.0, 0.5, -0.5, 0.25};  // [2][2]
    m.mask_token = {0.2, -0.3};
    m.wh = {0.3, -0.1, 0.2, 0.4, -0.2, 0.6, 0.1, -0.3};  // [2][4]
    m.bh = {0.01, -0.02};
    m.wo = {0.5, -0.4, 0.2, 0.1, -0.6, 0.3, 0.25, 0.15};  // [4][2]
    m.bo = {0.0, 0.1, -0.1, 0.2};

    GrayImage img(4, 2);
    img.at(0, 0) = 0.9; img.at(1, 0) = 0.8; img.at(0, 1) = 0.7; img.at(1, 1) = 0.6;
    img.at(2, 0) = 0.1; img.at(3, 0) = 0.2; img.at(2, 1) = 0.3; img.at(3, 1) = 0.4;
    const PatchGrid grid = make_patch_grid(4, 2, 2);
    const MimForward fw = mim_forward(m, img, grid, plan_of({1}));

    // One visible patch: p0 = [0.9, 0.8, 0.7, 0.6].
    const std::vector<double> p0 = {0.9, 0.8, 0.7, 0.6};
    std::vector<double> mean(2);
    for (int a = 0; a < 2; ++a) {
        double acc = m.be[static_cast<std::size_t>(a)];
        for (int t = 0; t < 4; ++t) acc += m.we[static_cast<std::size_t>(a) * 4 + t] * p0[static_cast<std::size_t>(t)];
        mean[static_cast<std::size_t>(a)] = acc;
    }
    CHECK(fw.mean_embed[0] == doctest::Approx(mean[0]).epsilon(1e-14));
    CHECK(fw.mean_embed[1] == doctest::Approx(mean[1]).epsilon(1e-14));

    std::vector<double> ctx(2);
    ctx[0] = m.wc[0] * mean[0] + m.wc[1] * mean[1];
    ctx[1] = m.wc[2] * mean[0] + m.wc[3] * mean[1];
    CHECK(fw.ctx[0] == doctest::Approx(ctx[0]).epsilon(1e-14));
    CHECK(fw.ctx[1] == doctest::Approx(ctx[1]).epsilon(1e-14));

    const std::vector<double> z = {m.mask_token[0], m.mask_token[1], ctx[0], ctx[1]};
    std::vector<double> hact(2);
    for (int k = 0; k < 2; ++k) {
        double acc = m.bh[static_cast<std::size_t>(k)];
        for (int l = 0; l < 4; ++l) acc += m.wh[static_cast<std::size_t>(k) * 4 + l] * z[static_cast<std::size_t>(l)];
        hact[static_cast<std::size_t>(k)] = acc > 0.0 ? acc : 0.0;
    }
    for (int j = 0; j < 4; ++j) {
        const double want = m.bo[static_cast<std::size_t>(j)] + m.wo[static_cast<std::size_t>(j) * 2] * hact[0] +
                            m.wo[static_cast<std::size_t>(j) * 2 + 1] * hact[1];
        CHECK(fw.recon[static_cast<std::size_t>(j)] == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("loss_rec is the mean masked-patch MSE") {
    Rng rng(15);
    const MimModel m = init_mim(2, 3, 4, rng);
    const GrayImage img = random_image(6, 4, rng);
    const PatchGrid grid = make_patch_grid(6, 4, 2);  // 3x2, N=6
    const MaskPlan plan = plan_of({0, 4});
    const MimForward fw = mim_forward(m, img, grid, plan);
    const LossGrad lg = loss_rec(fw, img, grid, plan);

    double want = 0.0;
    for (int idx : plan.masked) {
        const std::vector<double> p = extract_patch(img, grid, static_cast<std::size_t>(idx));
        double mse = 0.0;
        for (int t = 0; t < 4; ++t) {
            const double d = fw.recon[static_cast<std::size_t>(t)] - p[static_cast<std::size_t>(t)];
            mse += d * d;
        }
        want += mse / 4.0;
    }
    want /= 2.0;
    CHECK(lg.value == doctest::Approx(want).epsilon(1e-14));

    // drecon by finite differences on the shared reconstruction.
    const double h = 1e-6;
    for (int t = 0; t < 4; ++t) {
        MimForward pert = fw;
        pert.recon[static_cast<std::size_t>(t)] += h;
        const double hi = loss_rec(pert, img, grid, plan).value;
        pert.recon[static_cast<std::size_t>(t)] -= 2.0 * h;
        const double lo = loss_rec(pert, img, grid, plan).value;
        check_close(lg.drecon[static_cast<std::size_t>(t)], (hi - lo) / (2.0 * h));
    }

    const MaskPlan none = plan_of({});
    const MimForward fw2 = mim_forward(m, img, grid, none);
    const LossGrad empty = loss_rec(fw2, img, grid, none);
    CHECK(empty.value == 0.0);
    for (double g : empty.drecon) CHECK(g == 0.0);
}

TEST_CASE("loss_wrec reweights by anatomy share and falls back bit-for-bit") {
    Rng rng(16);
    const MimModel m = init_mim(2, 3, 4, rng);
    const GrayImage img = random_image(6, 4, rng);
    const PatchGrid grid = make_patch_grid(6, 4, 2);
    const MaskPlan plan = plan_of({1, 3, 5});
    const MimForward fw = mim_forward(m, img, grid, plan);
    const LossGrad plain = loss_rec(fw, img, grid, plan);

    // Uniform weights over the masked set -> identical to the plain loss.
    const AnatomyDistribution uni = anatomy_distribution({2, 2, 2, 2, 2, 2});
    const LossGrad u = loss_wrec(fw, img, grid, plan, uni);
    CHECK(u.value == plain.value);
    CHECK(u.drecon == plain.drecon);

    // Zero mass over the masked set -> fallback as well.
    const AnatomyDistribution offmask = anatomy_distribution({5, 0, 7, 0, 3, 0});
    const LossGrad z = loss_wrec(fw, img, grid, plan, offmask);
    CHECK(z.value == plain.value);
    CHECK(z.drecon == plain.drecon);

    // Proper weighting matches the definition.
    const AnatomyDistribution skew = anatomy_distribution({0, 6, 0, 2, 0, 4});
    const LossGrad w = loss_wrec(fw, img, grid, plan, skew);
    double want = 0.0;
    const double zmass = skew.probs[1] + skew.probs[3] + skew.probs[5];
    for (int idx : plan.masked) {
        const std::vector<double> p = extract_patch(img, grid, static_cast<std::size_t>(idx));
        double mse = 0.0;
        for (int t = 0; t < 4; ++t) {
            const double d = fw.recon[static_cast<std::size_t>(t)] - p[static_cast<std::size_t>(t)];
            mse += d * d;
        }
        want += (skew.probs[static_cast<std::size_t>(idx)] / zmass) * (mse / 4.0);
    }
    CHECK(w.value == doctest::Approx(want).epsilon(1e-14));
    CHECK(w.value != plain.value);
}

TEST_CASE("loss_cons equals the segmentor loss on the composite") {
    Rng rng(21);
    const MimModel m = init_mim(4, 5, 6, rng);
    const GrayImage img = random_image(8, 8, rng);
    const PatchGrid grid = make_patch_grid(8, 8, 4);
    const MaskPlan plan = plan_of({0, 3});
    const MimForward fw = mim_forward(m, img, grid, plan);

    Rng srng(7);
    SegmentorModel seg = init_segmentor(2, srng);
    CHECK_THROWS_AS(loss_cons(seg, img, fw, grid, plan, ConsMetric::cross_entropy), state_error);
    freeze(seg);

    const std::vector<double> targets = hard_targets_of(seg, img);
    for (ConsMetric metric : {ConsMetric::cross_entropy, ConsMetric::l1, ConsMetric::dice}) {
        const LossGrad lc = loss_cons(seg, img, fw, grid, plan, metric);
        const double want =
            seg_loss_with_targets(seg, fw.composite, targets, metric, false).loss;
        CHECK(lc.value == want);
        const LossGrad cached = loss_cons(seg, img, fw, grid, plan, metric, &targets);
        CHECK(cached.value == lc.value);
        CHECK(cached.drecon == lc.drecon);
    }
}

TEST_CASE("loss_train composes the objective exactly") {
    Rng rng(30);
    const MimModel m = init_mim(4, 5, 6, rng);
    const GrayImage img = random_image(8, 8, rng);
    const PatchGrid grid = make_patch_grid(8, 8, 4);
    const MaskPlan plan = plan_of({1, 2});
    const AnatomyDistribution dist = anatomy_distribution({4, 1, 0, 2});
    const MimForward fw = mim_forward(m, img, grid, plan);
    Rng srng(9);
    SegmentorModel seg = init_segmentor(2, srng);
    freeze(seg);

    TrainLossOptions opt;
    const TrainLoss on = loss_train(m, &seg, img, fw, grid, plan, dist, opt);
    CHECK(on.l_train == on.l_rec + on.l_cons);  // identity, not approximation
    CHECK(on.l_rec == loss_rec(fw, img, grid, plan).value);
    CHECK(on.l_cons ==
          loss_cons(seg, img, fw, grid, plan, ConsMetric::cross_entropy).value);

    TrainLossOptions off;
    off.cons = false;
    const TrainLoss no_cons = loss_train(m, nullptr, img, fw, grid, plan, dist, off);
    CHECK(no_cons.l_cons == 0.0);
    CHECK(no_cons.l_train == no_cons.l_rec);
    CHECK(no_cons.l_rec == on.l_rec);

    TrainLossOptions wopt;
    wopt.cons = false;
    wopt.wrec = true;
    const TrainLoss weighted = loss_train(m, nullptr, img, fw, grid, plan, dist, wopt);
    CHECK(weighted.l_rec == loss_wrec(fw, img, grid, plan, dist).value);

    CHECK_THROWS_AS(loss_train(m, nullptr, img, fw, grid, plan, dist, opt), param_error);
}

TEST_CASE("mim_backward matches finite differences end to end") {
    Rng rng(41);
    MimModel m = init_mim(2, 3, 4, rng);
    const GrayImage img = random_image(6, 4, rng);
    const PatchGrid grid = make_patch_grid(6, 4, 2);
    const MaskPlan plan = plan_of({0, 2, 5});
    const AnatomyDistribution dist = anatomy_distribution({3, 0, 1, 0, 2, 4});
    Rng srng(13);
    SegmentorModel seg = init_segmentor(2, srng);
    freeze(seg);
    const std::vector<double> targets = hard_targets_of(seg, img);

    TrainLossOptions cons_on;
    TrainLossOptions cons_off;
    cons_off.cons = false;
    TrainLossOptions wrec_on;
    wrec_on.cons = false;
    wrec_on.wrec = true;

    struct Cfg {
        TrainLossOptions opt;
        const SegmentorModel* seg;
    };
    const Cfg cfgs[] = {{cons_on, &seg}, {cons_off, nullptr}, {wrec_on, nullptr}};

    auto eval = [&](const Cfg& c) {
        const MimForward fw = mim_forward(m, img, grid, plan);
        return loss_train(m, c.seg, img, fw, grid, plan, dist, c.opt,
                          c.seg ? &targets : nullptr);
    };

    const double h = 1e-5;
    for (const Cfg& c : cfgs) {
        const MimForward fw = mim_forward(m, img, grid, plan);
        const TrainLoss tl =
            loss_train(m, c.seg, img, fw, grid, plan, dist, c.opt, c.seg ? &targets : nullptr);
        const MimGrads g = mim_backward(m, fw, tl.drecon);

        auto fd_slot = [&](double* slot, double analytic) {
            const double save = *slot;
            *slot = save + h;
            const double hi = eval(c).l_train;
            *slot = save - h;
            const double lo = eval(c).l_train;
            *slot = save;
            check_close(analytic, (hi - lo) / (2.0 * h));
        };
        for (std::size_t i = 0; i < m.we.size(); ++i) fd_slot(&m.we[i], g.we[i]);
        for (std::size_t i = 0; i < m.be.size(); ++i) fd_slot(&m.be[i], g.be[i]);
        for (std::size_t i = 0; i < m.wc.size(); ++i) fd_slot(&m.wc[i], g.wc[i]);
        for (std::size_t i = 0; i < m.mask_token.size(); ++i)
            fd_slot(&m.mask_token[i], g.mask_token[i]);
        for (std::size_t i = 0; i < m.wh.size(); ++i) fd_slot(&m.wh[i], g.wh[i]);
        for (std::size_t i = 0; i < m.bh.size(); ++i) fd_slot(&m.bh[i], g.bh[i]);
        for (std::size_t i = 0; i < m.wo.size(); ++i) fd_slot(&m.wo[i], g.wo[i]);
        for (std::size_t i = 0; i < m.bo.size(); ++i) fd_slot(&m.bo[i], g.bo[i]);
    }
}

TEST_CASE("pretrain runs deterministically and logs a consistent curve") {
    // Two 16x16 samples with stripe anatomy; P=4 -> N=16 patches.
    std::vector<GrayImage> images;
    std::vector<BinaryMask> anatomy;
    for (int s = 0; s < 2; ++s) {
        GrayImage img(16, 16, 0.8);
        BinaryMask gt(16, 16);
        for (int i = 0; i < 16; ++i)
            for (int k = 5 + s; k <= 8 + s; ++k) {
                img.at(k, i) = 0.3;
                gt.at(k, i) = 1;
            }
        images.push_back(img);
        anatomy.push_back(gt);
    }
    Rng srng(2);
    SegmentorModel seg = init_segmentor(2, srng);
    freeze(seg);

    PretrainConfig cfg;
    cfg.patch_size = 4;
    cfg.embed_dim = 6;
    cfg.hidden_dim = 8;
    cfg.gamma = 0.5;
    cfg.beta0 = 0.1;
    cfg.betaE = 0.9;
    cfg.epochs = 4;
    cfg.lr = 0.01;
    cfg.batch_size = 2;
    cfg.seed = 5;

    const PretrainResult r1 = pretrain(images, anatomy, &seg, cfg);
    REQUIRE(r1.curve.size() == 4);
    const Schedule sched{0.1, 0.9, 4};
    for (int e = 1; e <= 4; ++e) {
        const EpochStats& row = r1.curve[static_cast<std::size_t>(e - 1)];
        CHECK(row.epoch == e);
        CHECK(row.beta == beta_at(sched, e));
        CHECK(row.l_train == row.l_rec + row.l_cons);
        CHECK(std::isfinite(row.l_train));
        CHECK(row.masked_vessel_proportion >= 0.0);
        CHECK(row.masked_vessel_proportion <= 1.0);
    }

    // Cumulative ratios: every epoch masks exactly 8 of 16 patches.
    REQUIRE(r1.cumulative.size() == 2);
    for (const auto& ratios : r1.cumulative) {
        REQUIRE(ratios.size() == 16);
        double sum = 0.0;
        for (double v : ratios) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(8.0).epsilon(1e-12));
    }

    const PretrainResult r2 = pretrain(images, anatomy, &seg, cfg);
    CHECK(r1.model.we == r2.model.we);
    CHECK(r1.model.bo == r2.model.bo);

    // Worker count must not change the arithmetic.
    PretrainConfig par = cfg;
    par.workers = 2;
    const PretrainResult r3 = pretrain(images, anatomy, &seg, par);
    CHECK(r3.model.we == r1.model.we);
    CHECK(r3.model.wh == r1.model.wh);
    CHECK(r3.model.bo == r1.model.bo);
    for (std::size_t e = 0; e < 4; ++e) {
        CHECK(r3.curve[e].l_rec == r1.curve[e].l_rec);
        CHECK(r3.curve[e].l_cons == r1.curve[e].l_cons);
    }

    // The mask-plan stream is seeded per (epoch, image), so the sampled plans
    // and with them the cumulative ratios are independent of the batch split.
    // (Losses are not: a smaller batch updates parameters mid-epoch.)
    PretrainConfig small = cfg;
    small.batch_size = 1;
    const PretrainResult r4 = pretrain(images, anatomy, &seg, small);
    CHECK(r4.cumulative == r1.cumulative);
    for (std::size_t e = 0; e < 4; ++e)
        CHECK(r4.curve[e].masked_vessel_proportion == r1.curve[e].masked_vessel_proportion);
}

TEST_CASE("pretrain validates its inputs") {
    std::vector<GrayImage> images = {GrayImage(8, 8, 0.5)};
    std::vector<BinaryMask> anatomy = {BinaryMask(8, 8)};
    Rng srng(1);
    SegmentorModel seg = init_segmentor(2, srng);

    PretrainConfig cfg;
    cfg.patch_size = 4;
    cfg.embed_dim = 4;
    cfg.hidden_dim = 4;
    cfg.epochs = 1;

    CHECK_THROWS_AS(pretrain({}, {}, nullptr, cfg), param_error);
    CHECK_THROWS_AS(pretrain(images, {}, &seg, cfg), param_error);
    // Consistency demands a frozen segmentor.
    CHECK_THROWS_AS(pretrain(images, anatomy, nullptr, cfg), param_error);
    CHECK_THROWS_AS(pretrain(images, anatomy, &seg, cfg), state_error);
    freeze(seg);

    PretrainConfig bad = cfg;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(pretrain(images, anatomy, &seg, bad), param_error);
    bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(pretrain(images, anatomy, &seg, bad), param_error);
    bad = cfg;
    bad.lr = 0.0;
    CHECK_THROWS_AS(pretrain(images, anatomy, &seg, bad), param_error);
    bad = cfg;
    bad.workers = 0;
    CHECK_THROWS_AS(pretrain(images, anatomy, &seg, bad), param_error);
    bad = cfg;
    bad.patch_size = 5;  // does not tile 8x8
    CHECK_THROWS_AS(pretrain(images, anatomy, &seg, bad), shape_error);

    std::vector<BinaryMask> wrong = {BinaryMask(4, 4)};
    CHECK_THROWS_AS(pretrain(images, wrong, &seg, cfg), shape_error);
}

TEST_CASE("encode_features flattens per-patch linear embeddings") {
    Rng rng(50);
    const MimModel m = init_mim(4, 5, 6, rng);
    const GrayImage img = random_image(8, 8, rng);
    const PatchGrid grid = make_patch_grid(8, 8, 4);
    const std::vector<double> feats = encode_features(m, img, grid);
    REQUIRE(feats.size() == 4u * 5u);
    for (std::size_t i = 0; i < 4; ++i) {
        const std::vector<double> p = extract_patch(img, grid, i);
        for (std::size_t a = 0; a < 5; ++a) {
            double want = m.be[a];
            for (std::size_t t = 0; t < 16; ++t) want += m.we[a * 16 + t] * p[t];
            CHECK(feats[i * 5 + a] == doctest::Approx(want).epsilon(1e-14));
        }
    }
}

TEST_CASE("linear probe separates a trivially separable dataset") {
    // Dark left half = vessel, bright right half = background.
    auto make_sample = []() {
        GrayImage img(8, 8, 0.8);
        BinaryMask gt(8, 8);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 4; ++x) {
                img.at(x, y) = 0.2;
                gt.at(x, y) = 1;
            }
        return std::make_pair(img, gt);
    };
    std::vector<std::pair<GrayImage, BinaryMask>> data = {make_sample(), make_sample()};
    Rng rng(60);
    const MimModel m = init_mim(4, 6, 8, rng);
    const ProbeResult r = probe_train_eval(m, data, data, 80, 1.0, 17);
    REQUIRE(r.per_image_dsc.size() == 2);
    CHECK(r.mean_dsc > 0.9);
    CHECK(r.mean_cldice >= 0.0);
    CHECK(r.mean_cldice <= 1.0);
    const ProbeResult again = probe_train_eval(m, data, data, 80, 1.0, 17);
    CHECK(again.mean_dsc == r.mean_dsc);

    CHECK_THROWS_AS(probe_train_eval(m, {}, data, 5, 0.1, 1), param_error);
    CHECK_THROWS_AS(probe_train_eval(m, data, data, 0, 0.1, 1), param_error);
}

TEST_CASE("mim checkpoint round trip and corruption") {
    Rng rng(70);
    const MimModel m = init_mim(4, 5, 6, rng);
    const fs::path path = fs::temp_directory_path() / "angio_mim_ckpt.bin";
    save_mim(m, path.string());
    const MimModel r = load_mim(path.string());
    CHECK(r.patch_size == 4);
    CHECK(r.embed_dim == 5);
    CHECK(r.hidden_dim == 6);
    CHECK(r.we == m.we);
    CHECK(r.be == m.be);
    CHECK(r.wc == m.wc);
    CHECK(r.mask_token == m.mask_token);
    CHECK(r.wh == m.wh);
    CHECK(r.bh == m.bh);
    CHECK(r.wo == m.wo);
    CHECK(r.bo == m.bo);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const fs::path bad = fs::temp_directory_path() / "angio_mim_bad.bin";
    {
        std::ofstream out(bad, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
    }
    CHECK_THROWS_AS(load_mim(bad.string()), format_error);
    {
        std::ofstream out(bad, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.put('Z');
    }
    CHECK_THROWS_AS(load_mim(bad.string()), format_error);
    {
        std::string evil = bytes;
        evil[3] = '9';
        std::ofstream out(bad, std::ios::binary);
        out.write(evil.data(), static_cast<std::streamsize>(evil.size()));
    }
    CHECK_THROWS_AS(load_mim(bad.string()), format_error);
    CHECK_THROWS_AS(load_mim((fs::temp_directory_path() / "angio_mim_missing.bin").string()),
                    io_error);
    fs::remove(path);
    fs::remove(bad);
}

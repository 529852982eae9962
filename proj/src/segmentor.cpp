#include "angio/segmentor.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <utility>

#include "angio/errors.hpp"

namespace angio {

namespace {

constexpr double kProbEps = 1e-7;

// Forward activations cached for reverse mode. Channel planes are stored
// contiguously: plane k occupies [k*n, (k+1)*n) with n = width*height.
struct SegTrace {
    int width = 0, height = 0;
    std::vector<double> z1, a1;  // c planes each
    std::vector<double> z2, a2;  // c planes each
    std::vector<double> prob;    // 1 plane, logistic output
};

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

SegTrace run_forward(const SegmentorModel& model, const GrayImage& img) {
    if (img.width < 1 || img.height < 1) throw shape_error("seg_forward: empty image");
    const int w = img.width, h = img.height, c = model.c;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    SegTrace t;
    t.width = w;
    t.height = h;
    t.z1.assign(static_cast<std::size_t>(c) * n, 0.0);
    t.a1.assign(static_cast<std::size_t>(c) * n, 0.0);
    t.z2.assign(static_cast<std::size_t>(c) * n, 0.0);
    t.a2.assign(static_cast<std::size_t>(c) * n, 0.0);
    t.prob.assign(n, 0.0);

    for (int k = 0; k < c; ++k) {
        const double* ker = &model.w1[static_cast<std::size_t>(k) * 9];
        double* zp = &t.z1[static_cast<std::size_t>(k) * n];
        double* ap = &t.a1[static_cast<std::size_t>(k) * n];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = model.b1[static_cast<std::size_t>(k)];
                for (int ky = -1; ky <= 1; ++ky) {
                    const int sy = mirror_index(y + ky, h);
                    for (int kx = -1; kx <= 1; ++kx) {
                        const int sx = mirror_index(x + kx, w);
                        acc += ker[(ky + 1) * 3 + (kx + 1)] * img.at(sx, sy);
                    }
                }
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                zp[i] = acc;
                ap[i] = acc > 0.0 ? acc : 0.0;
            }
        }
    }

    for (int k = 0; k < c; ++k) {
        double* zp = &t.z2[static_cast<std::size_t>(k) * n];
        double* ap = &t.a2[static_cast<std::size_t>(k) * n];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = model.b2[static_cast<std::size_t>(k)];
                for (int m = 0; m < c; ++m) {
                    const double* ker = &model.w2[(static_cast<std::size_t>(k) * c + m) * 9];
                    const double* src = &t.a1[static_cast<std::size_t>(m) * n];
                    for (int ky = -1; ky <= 1; ++ky) {
                        const int sy = mirror_index(y + ky, h);
                        for (int kx = -1; kx <= 1; ++kx) {
                            const int sx = mirror_index(x + kx, w);
                            acc += ker[(ky + 1) * 3 + (kx + 1)] * src[static_cast<std::size_t>(sy) * w + sx];
                        }
                    }
                }
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                zp[i] = acc;
                ap[i] = acc > 0.0 ? acc : 0.0;
            }
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        double acc = model.b3;
        for (int m = 0; m < c; ++m) acc += model.w3[static_cast<std::size_t>(m)] * t.a2[static_cast<std::size_t>(m) * n + i];
        t.prob[i] = logistic(acc);
    }
    return t;
}

SegGrads zero_grads(const SegmentorModel& model, std::size_t n) {
    SegGrads g;
    g.w1.assign(model.w1.size(), 0.0);
    g.b1.assign(model.b1.size(), 0.0);
    g.w2.assign(model.w2.size(), 0.0);
    g.b2.assign(model.b2.size(), 0.0);
    g.w3.assign(model.w3.size(), 0.0);
    g.b3 = 0.0;
    g.input.assign(n, 0.0);
    return g;
}

// Reverse pass from d loss / d prob. Scatter-style adjoints mirror the
// forward gathers, so mirrored border reads become mirrored accumulations.
SegGrads run_backward(const SegmentorModel& model, const GrayImage& img, const SegTrace& t,
                      const std::vector<double>& dprob, bool want_param_grads) {
    const int w = t.width, h = t.height, c = model.c;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    SegGrads g = zero_grads(model, n);

    std::vector<double> dlogit(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = t.prob[i];
        dlogit[i] = dprob[i] * p * (1.0 - p);
    }

    std::vector<double> da2(static_cast<std::size_t>(c) * n, 0.0);
    for (int m = 0; m < c; ++m) {
        const double* ap = &t.a2[static_cast<std::size_t>(m) * n];
        double* dp = &da2[static_cast<std::size_t>(m) * n];
        double wsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (want_param_grads) wsum += dlogit[i] * ap[i];
            dp[i] = dlogit[i] * model.w3[static_cast<std::size_t>(m)];
        }
        if (want_param_grads) g.w3[static_cast<std::size_t>(m)] = wsum;
    }
    if (want_param_grads) g.b3 = std::accumulate(dlogit.begin(), dlogit.end(), 0.0);

    std::vector<double> da1(static_cast<std::size_t>(c) * n, 0.0);
    for (int k = 0; k < c; ++k) {
        const double* zp = &t.z2[static_cast<std::size_t>(k) * n];
        const double* dap = &da2[static_cast<std::size_t>(k) * n];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const double dz = zp[i] > 0.0 ? dap[i] : 0.0;
                if (dz == 0.0) continue;
                if (want_param_grads) g.b2[static_cast<std::size_t>(k)] += dz;
                for (int m = 0; m < c; ++m) {
                    const double* ker = &model.w2[(static_cast<std::size_t>(k) * c + m) * 9];
                    double* kg = &g.w2[(static_cast<std::size_t>(k) * c + m) * 9];
                    const double* src = &t.a1[static_cast<std::size_t>(m) * n];
                    double* dst = &da1[static_cast<std::size_t>(m) * n];
                    for (int ky = -1; ky <= 1; ++ky) {
                        const int sy = mirror_index(y + ky, h);
                        for (int kx = -1; kx <= 1; ++kx) {
                            const int sx = mirror_index(x + kx, w);
                            const std::size_t j = static_cast<std::size_t>(sy) * w + sx;
                            if (want_param_grads) kg[(ky + 1) * 3 + (kx + 1)] += dz * src[j];
                            dst[j] += dz * ker[(ky + 1) * 3 + (kx + 1)];
                        }
                    }
                }
            }
        }
    }

    for (int k = 0; k < c; ++k) {
        const double* zp = &t.z1[static_cast<std::size_t>(k) * n];
        const double* dap = &da1[static_cast<std::size_t>(k) * n];
        const double* ker = &model.w1[static_cast<std::size_t>(k) * 9];
        double* kg = &g.w1[static_cast<std::size_t>(k) * 9];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const double dz = zp[i] > 0.0 ? dap[i] : 0.0;
                if (dz == 0.0) continue;
                if (want_param_grads) g.b1[static_cast<std::size_t>(k)] += dz;
                for (int ky = -1; ky <= 1; ++ky) {
                    const int sy = mirror_index(y + ky, h);
                    for (int kx = -1; kx <= 1; ++kx) {
                        const int sx = mirror_index(x + kx, w);
                        const std::size_t j = static_cast<std::size_t>(sy) * w + sx;
                        if (want_param_grads) kg[(ky + 1) * 3 + (kx + 1)] += dz * img.pixels[j];
                        g.input[j] += dz * ker[(ky + 1) * 3 + (kx + 1)];
                    }
                }
            }
        }
    }
    return g;
}

SegLossResult loss_from_trace(const SegmentorModel& model, const GrayImage& img, const SegTrace& t,
                              const std::vector<double>& targets, ConsMetric metric,
                              bool want_param_grads) {
    const std::size_t n = t.prob.size();
    if (targets.size() != n) throw shape_error("segmentor loss: target size mismatch");
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> dprob(n, 0.0);
    double loss = 0.0;

    if (metric == ConsMetric::cross_entropy) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = t.prob[i];
            const double pc = std::min(std::max(p, kProbEps), 1.0 - kProbEps);
            const double tv = targets[i];
            loss += -(tv * std::log(pc) + (1.0 - tv) * std::log(1.0 - pc));
            if (p > kProbEps && p < 1.0 - kProbEps)
                dprob[i] = inv_n * (-tv / pc + (1.0 - tv) / (1.0 - pc));
        }
        loss *= inv_n;
    } else if (metric == ConsMetric::l1) {
        for (std::size_t i = 0; i < n; ++i) {
            const double d = t.prob[i] - targets[i];
            loss += std::abs(d);
            dprob[i] = inv_n * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
        }
        loss *= inv_n;
    } else {
        double inter = 0.0, psum = 0.0, tsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            inter += t.prob[i] * targets[i];
            psum += t.prob[i];
            tsum += targets[i];
        }
        const double num = 2.0 * inter + kProbEps;
        const double den = psum + tsum + kProbEps;
        loss = 1.0 - num / den;
        for (std::size_t i = 0; i < n; ++i)
            dprob[i] = -(2.0 * targets[i] * den - num) / (den * den);
    }

    SegLossResult out;
    out.loss = loss;
    out.grads = run_backward(model, img, t, dprob, want_param_grads);
    return out;
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

long long segmentor_param_count(int c) {
    const long long cc = c;
    return 9 * cc + cc + 9 * cc * cc + cc + cc + 1;
}

SegmentorModel init_segmentor(int c, Rng& rng) {
    if (c < 1) throw param_error("init_segmentor: channel count must be >= 1");
    SegmentorModel m;
    m.c = c;
    m.w1.resize(static_cast<std::size_t>(c) * 9);
    m.b1.assign(static_cast<std::size_t>(c), 0.0);
    m.w2.resize(static_cast<std::size_t>(c) * c * 9);
    m.b2.assign(static_cast<std::size_t>(c), 0.0);
    m.w3.resize(static_cast<std::size_t>(c));
    m.b3 = 0.0;
    const double s1 = std::sqrt(2.0 / 9.0);
    const double s2 = std::sqrt(2.0 / (9.0 * c));
    const double s3 = std::sqrt(2.0 / c);
    for (double& v : m.w1) v = rng.gauss() * s1;
    for (double& v : m.w2) v = rng.gauss() * s2;
    for (double& v : m.w3) v = rng.gauss() * s3;
    return m;
}

GrayImage seg_forward(const SegmentorModel& model, const GrayImage& img) {
    SegTrace t = run_forward(model, img);
    GrayImage out;
    out.width = t.width;
    out.height = t.height;
    out.pixels = std::move(t.prob);
    return out;
}

SegLossResult seg_loss(const SegmentorModel& model, const GrayImage& img, const BinaryMask& target) {
    if (target.width != img.width || target.height != img.height)
        throw shape_error("seg_loss: image/target dimensions differ");
    std::vector<double> t(target.bits.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = target.bits[i] ? 1.0 : 0.0;
    return seg_loss_with_targets(model, img, t, ConsMetric::cross_entropy, true);
}

SegLossResult seg_loss_with_targets(const SegmentorModel& model, const GrayImage& img,
                                    const std::vector<double>& targets, ConsMetric metric,
                                    bool want_param_grads) {
    SegTrace trace = run_forward(model, img);
    return loss_from_trace(model, img, trace, targets, metric, want_param_grads);
}

std::vector<double> seg_train(SegmentorModel& model,
                              const std::vector<std::pair<GrayImage, BinaryMask>>& data,
                              int epochs, double lr, Rng& rng) {
    if (model.frozen) throw state_error("seg_train: model is frozen");
    if (data.empty()) throw param_error("seg_train: empty dataset");
    if (epochs < 1) throw param_error("seg_train: epochs must be >= 1");
    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(epochs));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int e = 0; e < epochs; ++e) {
        // Fisher-Yates, high index down, swap target drawn with below().
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.below(i));
            std::swap(order[i - 1], order[j]);
        }
        double sum = 0.0;
        for (std::size_t idx : order) {
            SegLossResult r = seg_loss(model, data[idx].first, data[idx].second);
            sum += r.loss;
            for (std::size_t i = 0; i < model.w1.size(); ++i) model.w1[i] -= lr * r.grads.w1[i];
            for (std::size_t i = 0; i < model.b1.size(); ++i) model.b1[i] -= lr * r.grads.b1[i];
            for (std::size_t i = 0; i < model.w2.size(); ++i) model.w2[i] -= lr * r.grads.w2[i];
            for (std::size_t i = 0; i < model.b2.size(); ++i) model.b2[i] -= lr * r.grads.b2[i];
            for (std::size_t i = 0; i < model.w3.size(); ++i) model.w3[i] -= lr * r.grads.w3[i];
            model.b3 -= lr * r.grads.b3;
        }
        curve.push_back(sum / static_cast<double>(data.size()));
    }
    return curve;
}

void freeze(SegmentorModel& model) { model.frozen = true; }

void save_segmentor(const SegmentorModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os.write("ASEG0001", 8);
    write_u32_le(os, static_cast<std::uint32_t>(model.c));
    for (double v : model.w1) write_f64_le(os, v);
    for (double v : model.b1) write_f64_le(os, v);
    for (double v : model.w2) write_f64_le(os, v);
    for (double v : model.b2) write_f64_le(os, v);
    for (double v : model.w3) write_f64_le(os, v);
    write_f64_le(os, model.b3);
    if (!os) throw io_error("write failed: " + path);
}

SegmentorModel load_segmentor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, "ASEG0001", 8) != 0)
        throw format_error("bad segmentor checkpoint magic: " + path);
    const std::uint32_t c = read_u32_le(is, path);
    if (c < 1 || c > 4096) throw format_error("implausible channel count in checkpoint: " + path);
    SegmentorModel m;
    m.c = static_cast<int>(c);
    m.w1.resize(static_cast<std::size_t>(c) * 9);
    m.b1.resize(c);
    m.w2.resize(static_cast<std::size_t>(c) * c * 9);
    m.b2.resize(c);
    m.w3.resize(c);
    for (double& v : m.w1) v = read_f64_le(is, path);
    for (double& v : m.b1) v = read_f64_le(is, path);
    for (double& v : m.w2) v = read_f64_le(is, path);
    for (double& v : m.b2) v = read_f64_le(is, path);
    for (double& v : m.w3) v = read_f64_le(is, path);
    m.b3 = read_f64_le(is, path);
    char extra;
    if (is.read(&extra, 1)) throw format_error("trailing bytes in checkpoint: " + path);
    return m;
}

}  // namespace angio

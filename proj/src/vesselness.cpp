#include "angio/vesselness.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "angio/errors.hpp"

namespace angio {

VesselnessMap vesselness_at_scale(const GrayImage& img, double sigma, Polarity polarity) {
    if (!(sigma > 0.0)) throw param_error("vesselness_at_scale: sigma must be positive");
    GrayImage work = img;
    if (polarity == Polarity::dark_vessels)
        for (double& p : work.pixels) p = -p;
    const GrayImage smoothed = gaussian_smooth(work, sigma);
    const HessianField h = hessian(smoothed);
    VesselnessMap v(img.width, img.height);
    const std::size_t n = v.response.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto [l1, l2] = eig2x2_symmetric(h.dxx[i], h.dxy[i], h.dyy[i]);
        v.response[i] = l2 < 0.0 ? std::fabs(l1) : 0.0;
    }
    return v;
}

VesselnessMap multiscale_vesselness(const GrayImage& img, const FrangiConfig& cfg) {
    if (cfg.scales.empty()) throw param_error("multiscale_vesselness: scales must be nonempty");
    VesselnessMap out(img.width, img.height);
    for (double sigma : cfg.scales) {
        const VesselnessMap v = vesselness_at_scale(img, sigma, cfg.polarity);
        for (std::size_t i = 0; i < out.response.size(); ++i)
            out.response[i] = std::max(out.response[i], v.response[i]);
    }
    return out;
}

BinaryMask adaptive_threshold(const VesselnessMap& v, double alpha) {
    if (v.response.empty()) throw param_error("adaptive_threshold: empty map");
    const double t = percentile(v.response, alpha);
    BinaryMask m(v.width, v.height);
    for (std::size_t i = 0; i < v.response.size(); ++i) m.bits[i] = v.response[i] >= t ? 1 : 0;
    return m;
}

std::vector<Pixel> select_seeds(const VesselnessMap& v, int k) {
    if (k < 1) throw param_error("select_seeds: k must be >= 1");
    const std::size_t n = v.response.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (v.response[a] != v.response[b]) return v.response[a] > v.response[b];
        return a < b;
    });
    const std::size_t take = std::min(static_cast<std::size_t>(k), n);
    std::vector<Pixel> seeds;
    seeds.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const int y = static_cast<int>(order[i] / v.width);
        const int x = static_cast<int>(order[i] % v.width);
        seeds.push_back({x, y});
    }
    return seeds;
}

RegionGrowResult region_grow(const BinaryMask& threshold_mask, const std::vector<Pixel>& seeds,
                             int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        throw param_error("region_grow: connectivity must be 4 or 8");
    const int W = threshold_mask.width, H = threshold_mask.height;
    RegionGrowResult result;
    result.mask = BinaryMask(W, H);
    std::queue<std::size_t> frontier;
    int live_seeds = 0;
    for (const Pixel& s : seeds) {
        if (s.x < 0 || s.x >= W || s.y < 0 || s.y >= H)
            throw param_error("region_grow: seed outside mask bounds");
        const std::size_t i = static_cast<std::size_t>(s.y) * W + s.x;
        if (!threshold_mask.bits[i]) {
            ++result.skipped_seeds;
            continue;
        }
        if (!result.mask.bits[i]) {
            result.mask.bits[i] = 1;
            frontier.push(i);
        }
        ++live_seeds;
    }
    if (live_seeds == 0) {
        result.no_growth = true;
        return result;
    }
    static const int dx8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static const int dy8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static const int dx4[] = {0, -1, 1, 0};
    static const int dy4[] = {-1, 0, 0, 1};
    const int* dx = connectivity == 8 ? dx8 : dx4;
    const int* dy = connectivity == 8 ? dy8 : dy4;
    const int nn = connectivity;
    while (!frontier.empty()) {
        const std::size_t i = frontier.front();
        frontier.pop();
        const int x = static_cast<int>(i % W), y = static_cast<int>(i / W);
        for (int d = 0; d < nn; ++d) {
            const int nx = x + dx[d], ny = y + dy[d];
            if (nx < 0 || nx >= W || ny < 0 || ny >= H) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * W + nx;
            if (threshold_mask.bits[j] && !result.mask.bits[j]) {
                result.mask.bits[j] = 1;
                frontier.push(j);
            }
        }
    }
    return result;
}

ExtractReport extract_anatomy_report(const GrayImage& img, const FrangiConfig& cfg) {
    const VesselnessMap v = multiscale_vesselness(img, cfg);
    ExtractReport report;
    bool all_zero = true;
    for (double r : v.response)
        if (r != 0.0) {
            all_zero = false;
            break;
        }
    if (all_zero) {
        // Blank map: the percentile threshold would be 0 and select every
        // pixel, so return the empty mask instead.
        report.mask = BinaryMask(img.width, img.height);
        report.degenerate = true;
        return report;
    }
    report.threshold = percentile(v.response, cfg.alpha);
    const BinaryMask thresholded = adaptive_threshold(v, cfg.alpha);
    report.seeds = select_seeds(v, cfg.multi_seed);
    report.mask = region_grow(thresholded, report.seeds, cfg.connectivity).mask;
    return report;
}

BinaryMask extract_anatomy(const GrayImage& img, const FrangiConfig& cfg) {
    return extract_anatomy_report(img, cfg).mask;
}

}  // namespace angio

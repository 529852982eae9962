#include "angio/masking.hpp"

#include <algorithm>
#include <cmath>

#include "angio/errors.hpp"

namespace angio {

PatchGrid make_patch_grid(int width, int height, int patch_size) {
    if (patch_size <= 0) throw param_error("patch grid: patch size must be positive");
    if (width % patch_size != 0 || height % patch_size != 0)
        throw shape_error("patch grid: image dimensions must be divisible by the patch size");
    PatchGrid g;
    g.patch_size = patch_size;
    g.grid_w = width / patch_size;
    g.grid_h = height / patch_size;
    if (g.patch_count() < 1) throw shape_error("patch grid: empty grid");
    return g;
}

std::vector<long long> patch_vessel_counts(const BinaryMask& mask, int patch_size) {
    const PatchGrid g = make_patch_grid(mask.width, mask.height, patch_size);
    std::vector<long long> counts(static_cast<std::size_t>(g.patch_count()), 0);
    for (int y = 0; y < mask.height; ++y) {
        const int py = y / patch_size;
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y)) ++counts[static_cast<std::size_t>(py) * g.grid_w + x / patch_size];
        }
    }
    return counts;
}

AnatomyDistribution anatomy_distribution(const std::vector<long long>& counts) {
    AnatomyDistribution f;
    f.vessel_counts = counts;
    for (long long c : counts) {
        if (c < 0) throw param_error("anatomy_distribution: negative count");
        f.total_vessel_pixels += c;
    }
    const std::size_t n = counts.size();
    f.probs.resize(n);
    if (f.total_vessel_pixels > 0) {
        for (std::size_t i = 0; i < n; ++i)
            f.probs[i] = static_cast<double>(counts[i]) / static_cast<double>(f.total_vessel_pixels);
    } else {
        const double u = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) f.probs[i] = u;
    }
    return f;
}

double beta_at(const Schedule& s, int e) {
    if (s.max_epoch <= 0) throw param_error("beta_at: E must be positive");
    if (e < 0 || e > s.max_epoch) throw param_error("beta_at: epoch outside [0, E]");
    return s.beta0 + (static_cast<double>(e) / static_cast<double>(s.max_epoch)) * (s.betaE - s.beta0);
}

long long round_half_up(double x) { return static_cast<long long>(std::floor(x + 0.5)); }

MaskPlan sample_mask_plan(const AnatomyDistribution& f, double gamma, double beta_e, Rng& rng,
                          int epoch) {
    const std::size_t n = f.probs.size();
    if (n < 1) throw param_error("sample_mask_plan: empty distribution");
    if (!(gamma > 0.0 && gamma < 1.0)) throw param_error("sample_mask_plan: gamma must be in (0,1)");
    if (beta_e < 0.0 || beta_e > 1.0)
        throw param_error("sample_mask_plan: beta_e must be in [0,1]");

    const double dn = static_cast<double>(n);
    const long long k_total = round_half_up(gamma * dn);
    long long k_guided = round_half_up(beta_e * gamma * dn);
    if (k_guided > k_total) k_guided = k_total;

    MaskPlan plan;
    plan.gamma = gamma;
    plan.epoch = epoch;

    std::vector<double> weights(f.probs);
    std::vector<char> chosen(n, 0);

    // Guided picks: sequential weighted draw without replacement. Each pick
    // renormalizes implicitly by drawing against the remaining total.
    for (long long t = 0; t < k_guided; ++t) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!chosen[i]) total += weights[i];
        if (!(total > 0.0)) break;  // shortfall: remaining picks become random
        const double u = rng.uniform01() * total;
        double acc = 0.0;
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (chosen[i]) continue;
            acc += weights[i];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        if (pick == n) {  // floating-point tail guard: take the last unchosen
            for (std::size_t i = n; i-- > 0;)
                if (!chosen[i] && weights[i] > 0.0) {
                    pick = i;
                    break;
                }
            if (pick == n) break;
        }
        chosen[pick] = 1;
        plan.guided.push_back(static_cast<int>(pick));
    }

    // Random picks: uniform without replacement over everything unchosen.
    const long long k_random = k_total - static_cast<long long>(plan.guided.size());
    std::vector<int> pool;
    pool.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) pool.push_back(static_cast<int>(i));
    for (long long t = 0; t < k_random; ++t) {
        const std::size_t j = static_cast<std::size_t>(rng.below(pool.size()));
        plan.random.push_back(pool[j]);
        pool[j] = pool.back();
        pool.pop_back();
    }

    std::sort(plan.guided.begin(), plan.guided.end());
    std::sort(plan.random.begin(), plan.random.end());
    plan.masked.reserve(plan.guided.size() + plan.random.size());
    plan.masked.insert(plan.masked.end(), plan.guided.begin(), plan.guided.end());
    plan.masked.insert(plan.masked.end(), plan.random.begin(), plan.random.end());
    std::sort(plan.masked.begin(), plan.masked.end());
    return plan;
}

double masked_vessel_proportion(const MaskPlan& plan, const std::vector<long long>& counts) {
    if (plan.masked.empty()) throw param_error("masked_vessel_proportion: empty plan");
    long long with_vessels = 0;
    for (int i : plan.masked) {
        if (i < 0 || static_cast<std::size_t>(i) >= counts.size())
            throw shape_error("masked_vessel_proportion: patch index outside counts");
        if (counts[static_cast<std::size_t>(i)] > 0) ++with_vessels;
    }
    return static_cast<double>(with_vessels) / static_cast<double>(plan.masked.size());
}

std::vector<double> cumulative_mask_ratio(const std::vector<MaskPlan>& plans, int patch_count) {
    if (patch_count < 1) throw param_error("cumulative_mask_ratio: empty grid");
    std::vector<long long> hits(static_cast<std::size_t>(patch_count), 0);
    for (const MaskPlan& p : plans) {
        for (int i : p.masked) {
            if (i < 0 || i >= patch_count)
                throw shape_error("cumulative_mask_ratio: plan index outside grid");
            ++hits[static_cast<std::size_t>(i)];
        }
    }
    std::vector<double> ratio(static_cast<std::size_t>(patch_count), 0.0);
    if (plans.empty()) return ratio;
    for (std::size_t i = 0; i < ratio.size(); ++i)
        ratio[i] = static_cast<double>(hits[i]) / static_cast<double>(plans.size());
    return ratio;
}

}  // namespace angio

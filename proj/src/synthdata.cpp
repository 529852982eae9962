#include "angio/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "angio/errors.hpp"
#include "angio/rng.hpp"

namespace angio {

namespace {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Tube {
    std::vector<Point> pts;
    double width = 0.0;
};

// Recursive midpoint displacement. The perpendicular offset magnitude is kept
// in [0.5, 1.0] * rough * segment-length: a floor well above zero, because the
// vesselness response vanishes on straight runs and a phantom that goes
// straight for long stretches cannot be recovered by the extractor.
std::vector<Point> midpoint_polyline(Rng& rng, Point a, Point b, int levels, double rough,
                                     double size) {
    std::vector<Point> pts = {a, b};
    for (int lvl = 0; lvl < levels; ++lvl) {
        std::vector<Point> out;
        out.reserve(pts.size() * 2 - 1);
        out.push_back(pts[0]);
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            const Point& p = pts[i];
            const Point& q = pts[i + 1];
            Point mid{(p.x + q.x) / 2.0, (p.y + q.y) / 2.0};
            const double dx = q.x - p.x, dy = q.y - p.y;
            const double len = std::hypot(dx, dy);
            if (len > 1e-9) {
                const double nx = -dy / len, ny = dx / len;
                const double mag = rough * len * rng.uniform(0.5, 1.0);
                const double sgn = rng.uniform01() < 0.5 ? 1.0 : -1.0;
                mid.x += sgn * mag * nx;
                mid.y += sgn * mag * ny;
            }
            mid.x = std::clamp(mid.x, 1.0, size - 2.0);
            mid.y = std::clamp(mid.y, 1.0, size - 2.0);
            out.push_back(mid);
            out.push_back(q);
        }
        pts = std::move(out);
    }
    return pts;
}

std::vector<Tube> draw_tree(Rng& rng, const PhantomConfig& cfg) {
    const double size = static_cast<double>(cfg.size);
    const double lo = cfg.tube_width_min, hi = cfg.tube_width_max;

    // Trunk: starts at a random edge pointing inward.
    const int edge = static_cast<int>(rng.below(4));
    const double t = rng.uniform(0.3, 0.7) * (size - 1.0);
    const double margin = 6.0;
    Point start;
    double heading = 0.0;
    switch (edge) {
        case 0: start = {margin, t}; heading = 0.0; break;
        case 1: start = {size - 1.0 - margin, t}; heading = 3.14159265358979323846; break;
        case 2: start = {t, margin}; heading = 1.57079632679489661923; break;
        default: start = {t, size - 1.0 - margin}; heading = -1.57079632679489661923; break;
    }
    heading += rng.uniform(-0.3, 0.3);
    double span = rng.uniform(0.1875, 0.25) * size;
    Point end{start.x + span * std::cos(heading), start.y + span * std::sin(heading)};
    end.x = std::clamp(end.x, 4.0, size - 5.0);
    end.y = std::clamp(end.y, 4.0, size - 5.0);

    const double trunk_width = lo + rng.uniform(0.625, 1.0) * (hi - lo);
    const double width_floor = lo + 0.25 * (hi - lo);
    const int levels = 4;
    const double rough = 0.36;

    std::vector<Tube> tubes;
    tubes.reserve(static_cast<std::size_t>(cfg.branch_depth));
    tubes.push_back({midpoint_polyline(rng, start, end, levels, rough, size), trunk_width});

    const std::vector<Point>* parent = &tubes.back().pts;
    double parent_width = trunk_width;
    double parent_span = span;
    for (int d = 1; d < cfg.branch_depth; ++d) {
        const std::size_t len = parent->size();
        const std::size_t i_lo = len / 3;
        const std::size_t i_hi = 2 * len / 3;
        const std::size_t i = i_lo + rng.below(i_hi - i_lo + 1);
        const Point& at = (*parent)[i];
        const Point& before = (*parent)[i > 0 ? i - 1 : 0];
        const double local_heading = std::atan2(at.y - before.y, at.x - before.x);
        const double side = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        // Shallow departure angles keep the ridge response continuous through
        // the junction; steep angles leave a response gap that splits the
        // thresholded band.
        const double branch_heading = local_heading + side * rng.uniform(0.4, 0.7);
        const double branch_span = std::max(size / 8.0, 0.7 * parent_span);
        // Back the start point one pixel along the branch heading so the child
        // crosses the parent tube and the ground truth stays connected.
        Point bstart{at.x - std::cos(branch_heading), at.y - std::sin(branch_heading)};
        Point bend{bstart.x + branch_span * std::cos(branch_heading),
                   bstart.y + branch_span * std::sin(branch_heading)};
        bend.x = std::clamp(bend.x, 4.0, size - 5.0);
        bend.y = std::clamp(bend.y, 4.0, size - 5.0);
        const double bwidth = std::max(width_floor, 0.85 * parent_width);
        tubes.push_back({midpoint_polyline(rng, bstart, bend, levels, rough, size), bwidth});
        parent = &tubes.back().pts;
        parent_width = bwidth;
        parent_span = branch_span;
    }
    return tubes;
}

double point_segment_distance(double px, double py, const Point& a, const Point& b) {
    const double abx = b.x - a.x, aby = b.y - a.y;
    const double den = abx * abx + aby * aby;
    if (den < 1e-12) return std::hypot(px - a.x, py - a.y);
    double t = ((px - a.x) * abx + (py - a.y) * aby) / den;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (a.x + t * abx), py - (a.y + t * aby));
}

std::pair<GrayImage, BinaryMask> generate_once(const PhantomConfig& cfg, std::uint64_t seed) {
    const int S = cfg.size;
    const double size = static_cast<double>(S);
    Rng rng(seed);

    // Low-frequency background: a linear ramp along a random direction.
    const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double cx = (size - 1.0) / 2.0, cy = (size - 1.0) / 2.0;
    const double diag = std::hypot(size, size);
    GrayImage img(S, S);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            const double s = 2.0 * ((x - cx) * std::cos(theta) + (y - cy) * std::sin(theta)) / diag;
            img.at(x, y) = 0.75 + cfg.background_gradient * s;
        }

    std::vector<Tube> tubes;
    for (int tree = 0; tree < cfg.n_trees; ++tree) {
        std::vector<Tube> tree_tubes = draw_tree(rng, cfg);
        for (auto& t : tree_tubes) tubes.push_back(std::move(t));
    }

    // Noiseless dip field: max over tubes of contrast * exp(-d^2 / 2 sigma^2),
    // sigma chosen so the full width at half maximum equals the tube width.
    GrayImage dip(S, S, 0.0);
    for (const Tube& tube : tubes) {
        const double sigma = (tube.width / 2.0) / std::sqrt(2.0 * std::log(2.0));
        const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                double dmin = 1e30;
                for (std::size_t i = 0; i + 1 < tube.pts.size(); ++i) {
                    const double d = point_segment_distance(static_cast<double>(x),
                                                            static_cast<double>(y), tube.pts[i],
                                                            tube.pts[i + 1]);
                    if (d < dmin) dmin = d;
                }
                const double v = cfg.vessel_contrast * std::exp(-dmin * dmin * inv2s2);
                if (v > dip.at(x, y)) dip.at(x, y) = v;
            }
    }

    BinaryMask gt(S, S);
    for (std::size_t i = 0; i < gt.bits.size(); ++i)
        gt.bits[i] = dip.pixels[i] > cfg.vessel_contrast / 2.0 ? 1 : 0;

    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        double v = img.pixels[i] - dip.pixels[i] + rng.gauss(0.0, cfg.noise_sigma);
        img.pixels[i] = std::clamp(v, 0.0, 1.0);
    }
    return {std::move(img), std::move(gt)};
}

}  // namespace

std::pair<GrayImage, BinaryMask> generate_phantom(const PhantomConfig& cfg) {
    if (cfg.size < 8) throw param_error("phantom: size must be at least 8");
    if (cfg.n_trees < 1) throw param_error("phantom: n_trees must be >= 1");
    if (cfg.branch_depth < 1) throw param_error("phantom: branch_depth must be >= 1");
    if (!(cfg.tube_width_min > 0.0) || cfg.tube_width_max < cfg.tube_width_min)
        throw param_error("phantom: tube width range must be positive and ordered");
    if (!(cfg.vessel_contrast > 0.0) || cfg.vessel_contrast > 1.0)
        throw param_error("phantom: contrast must be in (0,1]");
    if (cfg.noise_sigma < 0.0) throw param_error("phantom: noise sigma must be >= 0");

    for (int attempt = 0; attempt < 10; ++attempt) {
        const std::uint64_t seed =
            attempt == 0 ? cfg.seed : derive_seed(cfg.seed, 1000003ULL, static_cast<std::uint64_t>(attempt));
        auto [img, gt] = generate_once(cfg, seed);
        const double fraction =
            static_cast<double>(gt.popcount()) / static_cast<double>(gt.bits.size());
        if (fraction >= 0.01 && fraction <= 0.30) return {std::move(img), std::move(gt)};
    }
    std::ostringstream msg;
    msg << "phantom: vessel pixel fraction outside [0.01, 0.30] after 10 attempts (seed "
        << cfg.seed << ")";
    throw generation_error(msg.str());
}

std::string phantom_config_canonical(const PhantomConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "size=" << cfg.size << "\n"
        << "n_trees=" << cfg.n_trees << "\n"
        << "branch_depth=" << cfg.branch_depth << "\n"
        << "tube_width_min=" << cfg.tube_width_min << "\n"
        << "tube_width_max=" << cfg.tube_width_max << "\n"
        << "vessel_contrast=" << cfg.vessel_contrast << "\n"
        << "noise_sigma=" << cfg.noise_sigma << "\n"
        << "background_gradient=" << cfg.background_gradient << "\n"
        << "seed=" << cfg.seed << "\n";
    return out.str();
}

std::string phantom_config_hash(const PhantomConfig& cfg) {
    const std::string s = phantom_config_canonical(cfg);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

BenchmarkLayout make_benchmark(const std::string& out_dir, std::uint64_t seed, int n_train,
                               int n_test, const PhantomConfig& base_cfg) {
    if (n_train < 1 || n_test < 1)
        throw param_error("make_benchmark: n_train and n_test must be >= 1");
    namespace fs = std::filesystem;
    BenchmarkLayout layout;
    layout.root = out_dir;
    layout.train_images = (fs::path(out_dir) / "train" / "images").string();
    layout.train_masks = (fs::path(out_dir) / "train" / "masks").string();
    layout.test_images = (fs::path(out_dir) / "test" / "images").string();
    layout.test_masks = (fs::path(out_dir) / "test" / "masks").string();
    layout.manifest = (fs::path(out_dir) / "manifest.json").string();
    std::error_code ec;
    for (const std::string& d :
         {layout.train_images, layout.train_masks, layout.test_images, layout.test_masks}) {
        fs::create_directories(d, ec);
        if (ec) throw io_error("cannot create directory " + d + ": " + ec.message());
    }

    nlohmann::json manifest;
    PhantomConfig cfg = base_cfg;
    cfg.seed = seed;
    manifest["seed"] = seed;
    manifest["config_hash"] = phantom_config_hash(cfg);
    manifest["n_train"] = n_train;
    manifest["n_test"] = n_test;
    {
        nlohmann::json jc;
        jc["size"] = cfg.size;
        jc["n_trees"] = cfg.n_trees;
        jc["branch_depth"] = cfg.branch_depth;
        jc["tube_width_min"] = cfg.tube_width_min;
        jc["tube_width_max"] = cfg.tube_width_max;
        jc["vessel_contrast"] = cfg.vessel_contrast;
        jc["noise_sigma"] = cfg.noise_sigma;
        jc["background_gradient"] = cfg.background_gradient;
        manifest["config"] = jc;
    }

    auto emit = [&](const std::string& img_dir, const std::string& mask_dir,
                    const std::string& stem, std::uint64_t stream, int count,
                    nlohmann::json& names) {
        for (int i = 0; i < count; ++i) {
            PhantomConfig item = cfg;
            item.seed = derive_seed(seed, stream, static_cast<std::uint64_t>(i));
            auto [img, gt] = generate_phantom(item);
            char name[64];
            std::snprintf(name, sizeof name, "%s_%04d.pgm", stem.c_str(), i);
            write_pgm(img, (fs::path(img_dir) / name).string());
            write_pgm(gt, (fs::path(mask_dir) / name).string());
            names.push_back(name);
        }
    };
    nlohmann::json train_names = nlohmann::json::array();
    nlohmann::json test_names = nlohmann::json::array();
    emit(layout.train_images, layout.train_masks, "train", 0, n_train, train_names);
    emit(layout.test_images, layout.test_masks, "test", 1, n_test, test_names);
    manifest["train_files"] = train_names;
    manifest["test_files"] = test_names;

    std::ofstream out(layout.manifest);
    if (!out) throw io_error("cannot write manifest: " + layout.manifest);
    out << manifest.dump(2) << "\n";
    return layout;
}

}  // namespace angio

#include "angio/cli.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "angio/config.hpp"
#include "angio/errors.hpp"
#include "angio/image.hpp"
#include "angio/masking.hpp"
#include "angio/metrics.hpp"
#include "angio/mim.hpp"
#include "angio/parallel.hpp"
#include "angio/segmentor.hpp"
#include "angio/synthdata.hpp"
#include "angio/vesselness.hpp"

namespace fs = std::filesystem;

namespace angio {

namespace {

void log_line(const std::string& msg) { std::cerr << "[angiomim] " << msg << "\n"; }

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

bool is_image_file(const fs::path& p) {
    const std::string ext = p.extension().string();
    return ext == ".pgm" || ext == ".png";
}

// Sorted so every listing (and everything derived from it) is deterministic.
std::vector<fs::path> list_images(const std::string& input) {
    const fs::path p(input);
    if (fs::is_regular_file(p)) return {p};
    if (!fs::is_directory(p)) throw io_error("no such file or directory: " + input);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw io_error("no .pgm/.png images under: " + input);
    return out;
}

std::vector<std::pair<GrayImage, BinaryMask>> load_pairs(const std::string& images_dir,
                                                         const std::string& masks_dir) {
    std::vector<std::pair<GrayImage, BinaryMask>> out;
    for (const fs::path& img_path : list_images(images_dir)) {
        const std::string stem = img_path.stem().string();
        fs::path mask_path;
        for (const char* ext : {".pgm", ".png"}) {
            const fs::path cand = fs::path(masks_dir) / (stem + ext);
            if (fs::is_regular_file(cand)) {
                mask_path = cand;
                break;
            }
        }
        if (mask_path.empty())
            throw io_error("no mask for '" + stem + "' under: " + masks_dir);
        out.emplace_back(load_image(img_path.string()), to_mask(load_image(mask_path.string())));
        if (out.back().second.width != out.back().first.width ||
            out.back().second.height != out.back().first.height)
            throw shape_error("image/mask dimensions differ for '" + stem + "'");
    }
    return out;
}

std::vector<double> parse_scales(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw config_error("--scales: cannot parse '" + tok + "'");
        }
    }
    if (out.empty()) throw config_error("--scales: empty list");
    return out;
}

Polarity parse_polarity(const std::string& s) {
    if (s == "dark") return Polarity::dark_vessels;
    if (s == "bright") return Polarity::bright_vessels;
    throw config_error("--polarity: expected 'dark' or 'bright', got '" + s + "'");
}

struct FrangiFlags {
    std::string scales = "1,2,3,4";
    double alpha = 92.0;
    std::string polarity = "dark";
    int connectivity = 8;
    int seeds = 1;
};

void add_frangi_flags(CLI::App* cmd, FrangiFlags& f) {
    cmd->add_option("--scales", f.scales, "comma-separated Gaussian scales")
        ->capture_default_str();
    cmd->add_option("--alpha", f.alpha, "adaptive-threshold percentile")->capture_default_str();
    cmd->add_option("--polarity", f.polarity, "vessel polarity: dark|bright")
        ->capture_default_str();
    cmd->add_option("--connectivity", f.connectivity, "region growing connectivity: 4|8")
        ->capture_default_str();
    cmd->add_option("--seeds", f.seeds, "number of region-growing seeds")->capture_default_str();
}

FrangiConfig frangi_from_flags(const FrangiFlags& f) {
    FrangiConfig cfg;
    cfg.scales = parse_scales(f.scales);
    cfg.alpha = f.alpha;
    cfg.polarity = parse_polarity(f.polarity);
    cfg.connectivity = f.connectivity;
    cfg.multi_seed = f.seeds;
    if (cfg.connectivity != 4 && cfg.connectivity != 8)
        throw config_error("--connectivity: must be 4 or 8");
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 100.0))
        throw config_error("--alpha: must lie in [0, 100]");
    for (double s : cfg.scales)
        if (!(s > 0.0)) throw config_error("--scales: scales must be positive");
    if (cfg.multi_seed < 1) throw config_error("--seeds: must be >= 1");
    return cfg;
}

std::string seeds_field(const std::vector<Pixel>& seeds) {
    std::string out;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i) out += "|";
        out += std::to_string(seeds[i].y) + ":" + std::to_string(seeds[i].x);
    }
    return out;
}

// --- extract / pseudo-label ------------------------------------------------

struct ExtractRow {
    std::string name;
    double threshold = 0.0;
    std::string seeds;
    std::size_t mask_pixels = 0;
};

int run_extraction(const std::string& input, const std::string& output, const FrangiConfig& cfg,
                   int workers, bool dataset_layout) {
    const std::vector<fs::path> files = list_images(input);
    fs::create_directories(output);
    const fs::path img_dir = fs::path(output) / "images";
    const fs::path mask_dir = fs::path(output) / "masks";
    if (dataset_layout) {
        fs::create_directories(img_dir);
        fs::create_directories(mask_dir);
    }

    std::vector<ExtractRow> rows(files.size());
    std::vector<GrayImage> images(files.size());
    std::vector<ExtractReport> reports(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) images[i] = load_image(files[i].string());
    parallel_for(files.size(), workers,
                 [&](std::size_t i) { reports[i] = extract_anatomy_report(images[i], cfg); });

    for (std::size_t i = 0; i < files.size(); ++i) {
        const std::string stem = files[i].stem().string();
        ExtractRow& r = rows[i];
        r.name = files[i].filename().string();
        r.threshold = reports[i].threshold;
        r.seeds = seeds_field(reports[i].seeds);
        r.mask_pixels = reports[i].mask.popcount();
        if (dataset_layout) {
            write_pgm(images[i], (img_dir / (stem + ".pgm")).string());
            write_pgm(reports[i].mask, (mask_dir / (stem + ".pgm")).string());
        } else {
            write_pgm(reports[i].mask, (fs::path(output) / (stem + "_mask.pgm")).string());
        }
        if (reports[i].degenerate) log_line("degenerate vesselness map (empty mask): " + r.name);
    }

    const fs::path csv_path =
        fs::path(output) / (dataset_layout ? "pseudo_labels.csv" : "extract.csv");
    std::ofstream csv(csv_path);
    if (!csv) throw io_error("cannot open for writing: " + csv_path.string());
    csv << "filename,threshold,seeds,mask_pixels\n";
    for (const ExtractRow& r : rows)
        csv << r.name << "," << fmt_double(r.threshold) << "," << r.seeds << "," << r.mask_pixels
            << "\n";
    log_line("wrote " + std::to_string(files.size()) + " masks to " + output);
    return 0;
}

// --- train-segmentor -------------------------------------------------------

int cmd_train_segmentor(const std::string& images, const std::string& labels,
                        const std::string& out, int epochs, double lr, std::uint64_t seed,
                        int channels) {
    const auto data = load_pairs(images, labels);
    log_line("training segmentor on " + std::to_string(data.size()) + " pairs, c=" +
             std::to_string(channels));
    Rng rng(seed);
    SegmentorModel model = init_segmentor(channels, rng);
    const std::vector<double> curve = seg_train(model, data, epochs, lr, rng);
    freeze(model);
    if (const fs::path parent = fs::path(out).parent_path(); !parent.empty())
        fs::create_directories(parent);
    save_segmentor(model, out);
    std::ofstream csv(out + ".curve.csv");
    if (!csv) throw io_error("cannot open for writing: " + out + ".curve.csv");
    csv << "epoch,loss\n";
    for (std::size_t e = 0; e < curve.size(); ++e)
        csv << (e + 1) << "," << fmt_double(curve[e]) << "\n";
    log_line("final mean loss " + fmt_double(curve.back()) + "; checkpoint " + out);
    return 0;
}

// --- pretrain --------------------------------------------------------------

GrayImage heatmap_image(const std::vector<double>& ratios, const PatchGrid& grid) {
    GrayImage hm(grid.grid_w, grid.grid_h);
    for (int gy = 0; gy < grid.grid_h; ++gy)
        for (int gx = 0; gx < grid.grid_w; ++gx)
            hm.at(gx, gy) = ratios[static_cast<std::size_t>(gy) * grid.grid_w + gx];
    return hm;
}

int cmd_pretrain(const RunConfig& rc) {
    validate_run_config(rc);
    const std::vector<fs::path> files = list_images(rc.train_dir);
    std::vector<GrayImage> images(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) images[i] = load_image(files[i].string());
    for (std::size_t i = 0; i < files.size(); ++i)
        if (images[i].width % rc.patch_size != 0 || images[i].height % rc.patch_size != 0)
            throw config_error("masking.patch_size: " + std::to_string(rc.patch_size) +
                               " does not divide " + files[i].filename().string() + " (" +
                               std::to_string(images[i].width) + "x" +
                               std::to_string(images[i].height) + ")");

    log_line("extracting anatomy for " + std::to_string(images.size()) + " images");
    std::vector<BinaryMask> anatomy(images.size());
    parallel_for(images.size(), rc.workers,
                 [&](std::size_t i) { anatomy[i] = extract_anatomy(images[i], rc.frangi); });

    SegmentorModel seg;
    if (rc.cons) {
        seg = load_segmentor(rc.segmentor_path);
        freeze(seg);
        log_line("loaded frozen segmentor (c=" + std::to_string(seg.c) + ") from " +
                 rc.segmentor_path);
    }

    PretrainConfig pc;
    pc.patch_size = rc.patch_size;
    pc.embed_dim = rc.embed_dim;
    pc.hidden_dim = rc.hidden_dim;
    pc.gamma = rc.gamma;
    pc.beta0 = rc.beta0;
    pc.betaE = rc.betaE;
    pc.epochs = rc.epochs;
    pc.lr = rc.lr;
    pc.batch_size = rc.batch_size;
    pc.seed = rc.seed;
    pc.workers = rc.workers;
    pc.cons = rc.cons;
    pc.wrec = rc.wrec;
    pc.metric = rc.metric;

    log_line("pretraining: " + std::to_string(rc.epochs) + " epochs, gamma " +
             fmt_double(rc.gamma) + ", beta " + fmt_double(rc.beta0) + " -> " +
             fmt_double(rc.betaE));
    const PretrainResult res = pretrain(images, anatomy, rc.cons ? &seg : nullptr, pc);

    fs::create_directories(rc.out_dir);
    const fs::path out(rc.out_dir);
    save_mim(res.model, (out / "model.bin").string());

    std::ofstream csv(out / "curve.csv");
    if (!csv) throw io_error("cannot open for writing: " + (out / "curve.csv").string());
    csv << "epoch,beta,l_rec,l_cons,l_train,masked_vessel_proportion\n";
    for (const EpochStats& r : res.curve)
        csv << r.epoch << "," << fmt_double(r.beta) << "," << fmt_double(r.l_rec) << ","
            << fmt_double(r.l_cons) << "," << fmt_double(r.l_train) << ","
            << fmt_double(r.masked_vessel_proportion) << "\n";

    nlohmann::json manifest;
    manifest["command"] = "pretrain";
    manifest["config_hash"] = run_config_hash(rc);
    manifest["config"] = run_config_canonical(rc);
    manifest["n_images"] = images.size();
    manifest["model"] = "model.bin";
    manifest["curve"] = "curve.csv";
    std::vector<std::string> heatmaps;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const PatchGrid grid = make_patch_grid(images[i].width, images[i].height, rc.patch_size);
        const std::string name = "cumulative_" + files[i].stem().string() + ".pgm";
        write_pgm(heatmap_image(res.cumulative[i], grid), (out / name).string());
        heatmaps.push_back(name);
    }
    manifest["heatmaps"] = heatmaps;
    std::ofstream mf(out / "manifest.json");
    if (!mf) throw io_error("cannot open for writing: " + (out / "manifest.json").string());
    mf << manifest.dump(2) << "\n";

    log_line("epoch 1 l_train " + fmt_double(res.curve.front().l_train) + ", epoch " +
             std::to_string(rc.epochs) + " l_train " + fmt_double(res.curve.back().l_train));
    log_line("outputs under " + rc.out_dir);
    return 0;
}

// --- stats -----------------------------------------------------------------

int cmd_stats(const std::string& masks_dir, const std::string& out_dir, int patch_size,
              double gamma, double beta0, double betaE, int epochs, std::uint64_t seed,
              int workers) {
    if (patch_size < 1) throw config_error("--patch-size: must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw config_error("--gamma: must lie in (0, 1)");
    if (!(beta0 >= 0.0 && beta0 <= 1.0)) throw config_error("--beta0: must lie in [0, 1]");
    if (!(betaE >= 0.0 && betaE <= 1.0)) throw config_error("--betaE: must lie in [0, 1]");
    if (epochs < 1) throw config_error("--epochs: must be >= 1");
    if (workers < 1) throw config_error("--workers: must be >= 1");

    const std::vector<fs::path> files = list_images(masks_dir);
    std::vector<BinaryMask> masks(files.size());
    for (std::size_t i = 0; i < files.size(); ++i)
        masks[i] = to_mask(load_image(files[i].string()));
    std::vector<PatchGrid> grids(files.size());
    std::vector<std::vector<long long>> counts(files.size());
    std::vector<AnatomyDistribution> dists(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (masks[i].width % patch_size != 0 || masks[i].height % patch_size != 0)
            throw config_error("--patch-size: " + std::to_string(patch_size) +
                               " does not divide " + files[i].filename().string());
        grids[i] = make_patch_grid(masks[i].width, masks[i].height, patch_size);
        counts[i] = patch_vessel_counts(masks[i], patch_size);
        dists[i] = anatomy_distribution(counts[i]);
    }

    const Schedule sched{beta0, betaE, epochs};
    std::vector<std::vector<long long>> hits(files.size());
    for (std::size_t i = 0; i < files.size(); ++i)
        hits[i].assign(counts[i].size(), 0);

    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "masked_vessel_proportion.csv");
    if (!csv) throw io_error("cannot open for writing: " + out_dir + "/masked_vessel_proportion.csv");
    csv << "epoch,beta,masked_vessel_proportion\n";
    for (int e = 1; e <= epochs; ++e) {
        const double beta = beta_at(sched, e);
        std::vector<MaskPlan> plans(files.size());
        parallel_for(files.size(), workers, [&](std::size_t i) {
            Rng child(derive_seed(seed, static_cast<std::uint64_t>(e),
                                  static_cast<std::uint64_t>(i)));
            plans[i] = sample_mask_plan(dists[i], gamma, beta, child, e);
        });
        double mvp_sum = 0.0;
        for (std::size_t i = 0; i < files.size(); ++i) {
            mvp_sum += masked_vessel_proportion(plans[i], counts[i]);
            for (int p : plans[i].masked) ++hits[i][static_cast<std::size_t>(p)];
        }
        csv << e << "," << fmt_double(beta) << ","
            << fmt_double(mvp_sum / static_cast<double>(files.size())) << "\n";
    }

    for (std::size_t i = 0; i < files.size(); ++i) {
        std::vector<double> ratios(hits[i].size());
        for (std::size_t p = 0; p < ratios.size(); ++p)
            ratios[p] = static_cast<double>(hits[i][p]) / static_cast<double>(epochs);
        const std::string name = "cumulative_" + files[i].stem().string() + ".pgm";
        write_pgm(heatmap_image(ratios, grids[i]), (fs::path(out_dir) / name).string());
    }
    log_line("masking stats for " + std::to_string(files.size()) + " masks over " +
             std::to_string(epochs) + " epochs written to " + out_dir);
    return 0;
}

// --- eval ------------------------------------------------------------------

void print_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::cout << "image,dsc,cldice,tprec,tsens\n";
    double sums[4] = {0, 0, 0, 0};
    std::vector<std::array<double, 4>> vals;
    for (const auto& [name, m] : rows) {
        std::cout << name << "," << fmt_double(m.dsc) << "," << fmt_double(m.cldice) << ","
                  << fmt_double(m.tprec) << "," << fmt_double(m.tsens) << "\n";
        vals.push_back({m.dsc, m.cldice, m.tprec, m.tsens});
        for (int k = 0; k < 4; ++k) sums[k] += vals.back()[static_cast<std::size_t>(k)];
    }
    const double n = static_cast<double>(rows.size());
    double mean[4], sd[4] = {0, 0, 0, 0};
    for (int k = 0; k < 4; ++k) mean[k] = sums[k] / n;
    for (const auto& v : vals)
        for (int k = 0; k < 4; ++k)
            sd[k] += (v[static_cast<std::size_t>(k)] - mean[k]) * (v[static_cast<std::size_t>(k)] - mean[k]);
    for (int k = 0; k < 4; ++k) sd[k] = std::sqrt(sd[k] / n);
    std::cout << "mean," << fmt_double(mean[0]) << "," << fmt_double(mean[1]) << ","
              << fmt_double(mean[2]) << "," << fmt_double(mean[3]) << "\n";
    std::cout << "std," << fmt_double(sd[0]) << "," << fmt_double(sd[1]) << ","
              << fmt_double(sd[2]) << "," << fmt_double(sd[3]) << "\n";
}

int cmd_eval_masks(const std::string& pred_dir, const std::string& gt_dir) {
    const std::vector<fs::path> preds = list_images(pred_dir);
    std::vector<std::pair<std::string, MetricReport>> rows;
    for (const fs::path& pp : preds) {
        const std::string stem = pp.stem().string();
        fs::path gt_path;
        for (const char* ext : {".pgm", ".png"}) {
            const fs::path cand = fs::path(gt_dir) / (stem + ext);
            if (fs::is_regular_file(cand)) {
                gt_path = cand;
                break;
            }
        }
        if (gt_path.empty()) throw io_error("no ground truth for '" + stem + "' under: " + gt_dir);
        const BinaryMask pred = to_mask(load_image(pp.string()));
        const BinaryMask gt = to_mask(load_image(gt_path.string()));
        rows.emplace_back(pp.filename().string(), cldice(pred, gt));
    }
    print_metric_table(rows);
    return 0;
}

int cmd_eval_probe(const std::string& ckpt, const std::string& train_dir,
                   const std::string& test_dir, int n_seeds, int probe_epochs, double probe_lr,
                   std::uint64_t seed) {
    if (n_seeds < 1) throw config_error("--seeds: must be >= 1");
    const MimModel model = load_mim(ckpt);
    const auto train = load_pairs(train_dir + "/images", train_dir + "/masks");
    const auto test = load_pairs(test_dir + "/images", test_dir + "/masks");
    log_line("probing " + ckpt + ": " + std::to_string(train.size()) + " train / " +
             std::to_string(test.size()) + " test images, " + std::to_string(n_seeds) + " seeds");
    std::cout << "seed,dsc,cldice\n";
    double dsum = 0.0, csum = 0.0;
    std::vector<double> dscs, clds;
    for (int i = 0; i < n_seeds; ++i) {
        const ProbeResult r = probe_train_eval(model, train, test, probe_epochs, probe_lr,
                                               derive_seed(seed, 0xCAFE, static_cast<std::uint64_t>(i)));
        std::cout << i << "," << fmt_double(r.mean_dsc) << "," << fmt_double(r.mean_cldice)
                  << "\n";
        dscs.push_back(r.mean_dsc);
        clds.push_back(r.mean_cldice);
        dsum += r.mean_dsc;
        csum += r.mean_cldice;
    }
    const double n = static_cast<double>(n_seeds);
    const double dmean = dsum / n, cmean = csum / n;
    double dvar = 0.0, cvar = 0.0;
    for (int i = 0; i < n_seeds; ++i) {
        dvar += (dscs[static_cast<std::size_t>(i)] - dmean) * (dscs[static_cast<std::size_t>(i)] - dmean);
        cvar += (clds[static_cast<std::size_t>(i)] - cmean) * (clds[static_cast<std::size_t>(i)] - cmean);
    }
    std::cout << "mean," << fmt_double(dmean) << "," << fmt_double(cmean) << "\n";
    std::cout << "std," << fmt_double(std::sqrt(dvar / n)) << "," << fmt_double(std::sqrt(cvar / n))
              << "\n";
    return 0;
}

// --- synth -----------------------------------------------------------------

int cmd_synth(const std::string& out, std::uint64_t seed, int n_train, int n_test,
              const PhantomConfig& base) {
    const BenchmarkLayout layout = make_benchmark(out, seed, n_train, n_test, base);
    log_line("benchmark written: " + std::to_string(n_train) + " train / " +
             std::to_string(n_test) + " test under " + layout.root);
    return 0;
}

}  // namespace

int dispatch(std::vector<std::string> args) {
    CLI::App app{"vascular-anatomy-aware masked image modeling toolkit"};
    app.require_subcommand(1);

    // extract
    auto* ext = app.add_subcommand("extract", "unsupervised vessel mask extraction");
    std::string ext_input, ext_output;
    FrangiFlags ext_flags;
    int ext_workers = 1;
    ext->add_option("--input", ext_input, "image file or directory")->required();
    ext->add_option("--output", ext_output, "output directory")->required();
    add_frangi_flags(ext, ext_flags);
    ext->add_option("--workers", ext_workers, "worker threads")->capture_default_str();

    // pseudo-label
    auto* pl = app.add_subcommand("pseudo-label",
                                  "extract masks and lay out an images/ + masks/ training set");
    std::string pl_input, pl_output;
    FrangiFlags pl_flags;
    int pl_workers = 1;
    pl->add_option("--input", pl_input, "image file or directory")->required();
    pl->add_option("--output", pl_output, "output dataset directory")->required();
    add_frangi_flags(pl, pl_flags);
    pl->add_option("--workers", pl_workers, "worker threads")->capture_default_str();

    // train-segmentor
    auto* ts = app.add_subcommand("train-segmentor", "train and freeze the pixel segmentor");
    std::string ts_images, ts_labels, ts_out;
    int ts_epochs = 200, ts_channels = 8;
    double ts_lr = 0.05;
    std::uint64_t ts_seed = 0;
    ts->add_option("--images", ts_images, "training image directory")->required();
    ts->add_option("--labels", ts_labels, "label mask directory")->required();
    ts->add_option("--out", ts_out, "checkpoint path")->required();
    ts->add_option("--epochs", ts_epochs, "training epochs")->capture_default_str();
    ts->add_option("--lr", ts_lr, "learning rate")->capture_default_str();
    ts->add_option("--seed", ts_seed, "master seed")->capture_default_str();
    ts->add_option("--channels", ts_channels, "hidden channel width")->capture_default_str();

    // pretrain
    auto* pt = app.add_subcommand("pretrain", "masked-image pretraining from a TOML config");
    std::string pt_config;
    std::string pt_train, pt_out, pt_segmentor;
    int pt_epochs = -1, pt_workers = -1;
    double pt_gamma = -1.0;
    long long pt_seed = -1;
    bool pt_no_cons = false, pt_wrec = false;
    pt->add_option("--config", pt_config, "run configuration TOML")->required();
    pt->add_option("--train", pt_train, "override data.train_dir");
    pt->add_option("--out", pt_out, "override data.out_dir");
    pt->add_option("--segmentor", pt_segmentor, "override data.segmentor");
    pt->add_option("--epochs", pt_epochs, "override training.epochs");
    pt->add_option("--workers", pt_workers, "override training.workers");
    pt->add_option("--gamma", pt_gamma, "override masking.gamma");
    pt->add_option("--seed", pt_seed, "override training.seed");
    pt->add_flag("--no-cons", pt_no_cons, "disable the consistency term");
    pt->add_flag("--wrec", pt_wrec, "use the anatomy-weighted reconstruction term");

    // eval
    auto* ev = app.add_subcommand("eval", "mask metrics or linear-probe evaluation");
    std::string ev_pred, ev_gt, ev_ckpt, ev_train, ev_test;
    int ev_seeds = 3, ev_probe_epochs = 40;
    double ev_probe_lr = 1.0;
    std::uint64_t ev_seed = 0;
    ev->add_option("--pred", ev_pred, "predicted mask directory (mask mode)");
    ev->add_option("--gt", ev_gt, "ground-truth mask directory (mask mode)");
    ev->add_option("--pretrained", ev_ckpt, "model checkpoint (probe mode)");
    ev->add_option("--train", ev_train, "probe training set root (images/ + masks/)");
    ev->add_option("--test", ev_test, "probe test set root (images/ + masks/)");
    ev->add_option("--seeds", ev_seeds, "number of probe seeds")->capture_default_str();
    ev->add_option("--probe-epochs", ev_probe_epochs, "probe training epochs")
        ->capture_default_str();
    ev->add_option("--probe-lr", ev_probe_lr, "probe learning rate")->capture_default_str();
    ev->add_option("--seed", ev_seed, "base seed for probe runs")->capture_default_str();

    // stats
    auto* st = app.add_subcommand("stats", "masking schedule statistics over a mask directory");
    std::string st_masks, st_out, st_config;
    int st_patch = 8, st_epochs = 200, st_workers = 1;
    double st_gamma = 0.5, st_beta0 = 0.0, st_betaE = 0.5;
    std::uint64_t st_seed = 0;
    bool st_gamma_set = false, st_beta0_set = false, st_betaE_set = false, st_epochs_set = false,
         st_patch_set = false;
    st->add_option("--masks", st_masks, "vessel mask directory")->required();
    st->add_option("--out", st_out, "output directory")->required();
    st->add_option("--config", st_config, "TOML with [masking]/[training] defaults");
    st->add_option("--patch-size", st_patch, "patch size")
        ->capture_default_str()
        ->each([&](const std::string&) { st_patch_set = true; });
    st->add_option("--gamma", st_gamma, "mask ratio")
        ->capture_default_str()
        ->each([&](const std::string&) { st_gamma_set = true; });
    st->add_option("--beta0", st_beta0, "guidance at epoch 0")
        ->capture_default_str()
        ->each([&](const std::string&) { st_beta0_set = true; });
    st->add_option("--betaE", st_betaE, "guidance at the final epoch")
        ->capture_default_str()
        ->each([&](const std::string&) { st_betaE_set = true; });
    st->add_option("--epochs", st_epochs, "schedule length")
        ->capture_default_str()
        ->each([&](const std::string&) { st_epochs_set = true; });
    st->add_option("--seed", st_seed, "master seed")->capture_default_str();
    st->add_option("--workers", st_workers, "worker threads")->capture_default_str();

    // synth
    auto* sy = app.add_subcommand("synth", "generate a synthetic phantom benchmark");
    std::string sy_out;
    std::uint64_t sy_seed = 7;
    int sy_ntrain = 64, sy_ntest = 16;
    PhantomConfig sy_base;
    sy->add_option("--out", sy_out, "benchmark root directory")->required();
    sy->add_option("--seed", sy_seed, "benchmark seed")->capture_default_str();
    sy->add_option("--n-train", sy_ntrain, "training images")->capture_default_str();
    sy->add_option("--n-test", sy_ntest, "test images")->capture_default_str();
    sy->add_option("--size", sy_base.size, "image side length")->capture_default_str();
    sy->add_option("--trees", sy_base.n_trees, "vessel trees per image")->capture_default_str();
    sy->add_option("--depth", sy_base.branch_depth, "branches per tree")->capture_default_str();
    sy->add_option("--width-min", sy_base.tube_width_min, "min tube width")->capture_default_str();
    sy->add_option("--width-max", sy_base.tube_width_max, "max tube width")->capture_default_str();
    sy->add_option("--contrast", sy_base.vessel_contrast, "vessel dip contrast")
        ->capture_default_str();
    sy->add_option("--noise", sy_base.noise_sigma, "additive noise sigma")->capture_default_str();
    sy->add_option("--bg-gradient", sy_base.background_gradient, "background ramp amplitude")
        ->capture_default_str();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (ext->parsed())
            return run_extraction(ext_input, ext_output, frangi_from_flags(ext_flags), ext_workers,
                                  /*dataset_layout=*/false);
        if (pl->parsed())
            return run_extraction(pl_input, pl_output, frangi_from_flags(pl_flags), pl_workers,
                                  /*dataset_layout=*/true);
        if (ts->parsed())
            return cmd_train_segmentor(ts_images, ts_labels, ts_out, ts_epochs, ts_lr, ts_seed,
                                       ts_channels);
        if (pt->parsed()) {
            RunConfig rc = load_run_config(pt_config);
            if (!pt_train.empty()) rc.train_dir = pt_train;
            if (!pt_out.empty()) rc.out_dir = pt_out;
            if (!pt_segmentor.empty()) rc.segmentor_path = pt_segmentor;
            if (pt_epochs >= 0) rc.epochs = pt_epochs;
            if (pt_workers >= 0) rc.workers = pt_workers;
            if (pt_gamma >= 0.0) rc.gamma = pt_gamma;
            if (pt_seed >= 0) rc.seed = static_cast<std::uint64_t>(pt_seed);
            if (pt_no_cons) rc.cons = false;
            if (pt_wrec) rc.wrec = true;
            return cmd_pretrain(rc);
        }
        if (ev->parsed()) {
            if (!ev_ckpt.empty()) {
                if (ev_train.empty() || ev_test.empty())
                    throw config_error("probe mode needs --train and --test");
                return cmd_eval_probe(ev_ckpt, ev_train, ev_test, ev_seeds, ev_probe_epochs,
                                      ev_probe_lr, ev_seed);
            }
            if (ev_pred.empty() || ev_gt.empty())
                throw config_error("eval needs either --pretrained/--train/--test or --pred/--gt");
            return cmd_eval_masks(ev_pred, ev_gt);
        }
        if (st->parsed()) {
            if (!st_config.empty()) {
                const RunConfig rc = load_run_config(st_config);
                if (!st_patch_set) st_patch = rc.patch_size;
                if (!st_gamma_set) st_gamma = rc.gamma;
                if (!st_beta0_set) st_beta0 = rc.beta0;
                if (!st_betaE_set) st_betaE = rc.betaE;
                if (!st_epochs_set) st_epochs = rc.epochs;
            }
            return cmd_stats(st_masks, st_out, st_patch, st_gamma, st_beta0, st_betaE, st_epochs,
                             st_seed, st_workers);
        }
        if (sy->parsed()) return cmd_synth(sy_out, sy_seed, sy_ntrain, sy_ntest, sy_base);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 2;
}

int dispatch(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(std::move(args));
}

}  // namespace angio

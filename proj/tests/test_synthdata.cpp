#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "angio/errors.hpp"
#include "angio/image.hpp"
#include "angio/synthdata.hpp"

using namespace angio;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("angio_synth_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("generate_phantom is deterministic per config") {
    PhantomConfig cfg;
    cfg.seed = 42;
    auto [img1, gt1] = generate_phantom(cfg);
    auto [img2, gt2] = generate_phantom(cfg);
    CHECK(img1.pixels == img2.pixels);
    CHECK(gt1.bits == gt2.bits);

    cfg.seed = 43;
    auto [img3, gt3] = generate_phantom(cfg);
    CHECK(img3.pixels != img1.pixels);
}

TEST_CASE("phantom output ranges and vessel fraction") {
    for (std::uint64_t seed : {0ULL, 5ULL, 99ULL}) {
        PhantomConfig cfg;
        cfg.seed = seed;
        auto [img, gt] = generate_phantom(cfg);
        CHECK(img.width == 64);
        CHECK(img.height == 64);
        CHECK(gt.width == 64);
        CHECK(gt.height == 64);
        for (double v : img.pixels) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        const double fraction =
            static_cast<double>(gt.popcount()) / static_cast<double>(gt.bits.size());
        CHECK(fraction >= 0.01);
        CHECK(fraction <= 0.30);
    }
}

TEST_CASE("vessel pixels are darker than background on average") {
    PhantomConfig cfg;
    cfg.seed = 7;
    auto [img, gt] = generate_phantom(cfg);
    double vessel_sum = 0.0, bg_sum = 0.0;
    std::size_t nv = 0, nb = 0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        if (gt.bits[i]) {
            vessel_sum += img.pixels[i];
            ++nv;
        } else {
            bg_sum += img.pixels[i];
            ++nb;
        }
    }
    REQUIRE(nv > 0);
    REQUIRE(nb > 0);
    // Tube centers dip by ~contrast; even averaged over the full half-max band
    // the gap must stay a large multiple of the noise level.
    CHECK(vessel_sum / nv < bg_sum / nb - 0.15);
}

TEST_CASE("generate_phantom validates its config") {
    PhantomConfig cfg;
    cfg.size = 7;
    CHECK_THROWS_AS(generate_phantom(cfg), param_error);
    cfg = PhantomConfig{};
    cfg.n_trees = 0;
    CHECK_THROWS_AS(generate_phantom(cfg), param_error);
    cfg = PhantomConfig{};
    cfg.branch_depth = 0;
    CHECK_THROWS_AS(generate_phantom(cfg), param_error);
    cfg = PhantomConfig{};
    cfg.tube_width_min = 0.0;
    CHECK_THROWS_AS(generate_phantom(cfg), param_error);
    cfg = PhantomConfig{};
    cfg.tube_width_max = 1.0;  // below tube_width_min
    CHECK_THROWS_AS(generate_phantom(cfg), param_error);
    cfg = PhantomConfig{};
    cfg.vessel_contrast = 0.0;
    CHECK_THROWS_AS(generate_phantom(cfg), param_error);
    cfg = PhantomConfig{};
    cfg.vessel_contrast = 1.5;
    CHECK_THROWS_AS(generate_phantom(cfg), param_error);
    cfg = PhantomConfig{};
    cfg.noise_sigma = -0.1;
    CHECK_THROWS_AS(generate_phantom(cfg), param_error);
}

TEST_CASE("impossible vessel fraction raises a generation error") {
    PhantomConfig cfg;
    cfg.size = 16;
    cfg.tube_width_min = 40.0;
    cfg.tube_width_max = 40.0;  // tube swallows the whole image on every attempt
    CHECK_THROWS_AS(generate_phantom(cfg), generation_error);
}

TEST_CASE("phantom config canonical form and hash") {
    PhantomConfig cfg;
    const std::string canon = phantom_config_canonical(cfg);
    CHECK(canon.find("size=64\n") != std::string::npos);
    CHECK(canon.find("n_trees=1\n") != std::string::npos);
    CHECK(canon.find("branch_depth=3\n") != std::string::npos);
    CHECK(canon.find("seed=0\n") != std::string::npos);

    const std::string h = phantom_config_hash(cfg);
    CHECK(h.size() == 16);
    for (char c : h) CHECK(((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')));
    CHECK(phantom_config_hash(cfg) == h);  // stable

    PhantomConfig other = cfg;
    other.seed = 1;
    CHECK(phantom_config_hash(other) != h);
    other = cfg;
    other.noise_sigma = 0.03;
    CHECK(phantom_config_hash(other) != h);
}

TEST_CASE("make_benchmark writes the full layout reproducibly") {
    PhantomConfig base;
    base.size = 32;
    base.branch_depth = 2;
    const fs::path dir_a = temp_dir("bench_a");
    const fs::path dir_b = temp_dir("bench_b");
    const BenchmarkLayout a = make_benchmark(dir_a.string(), 123, 3, 2, base);
    const BenchmarkLayout b = make_benchmark(dir_b.string(), 123, 3, 2, base);

    for (const std::string& d : {a.train_images, a.train_masks, a.test_images, a.test_masks})
        CHECK(fs::is_directory(d));

    int train_count = 0;
    for (const auto& e : fs::directory_iterator(a.train_images)) {
        ++train_count;
        const GrayImage img = load_image(e.path().string());
        CHECK(img.width == 32);
        CHECK(img.height == 32);
    }
    CHECK(train_count == 3);
    int test_count = 0;
    for (const auto& e : fs::directory_iterator(a.test_images)) {
        ++test_count;
        (void)e;
    }
    CHECK(test_count == 2);

    // Masks re-read as strict {0,1} rasters.
    const GrayImage m0 = load_image((fs::path(a.train_masks) / "train_0000.pgm").string());
    const BinaryMask mask0 = to_mask(m0);
    CHECK(mask0.popcount() > 0);
    for (std::size_t i = 0; i < m0.pixels.size(); ++i)
        CHECK((m0.pixels[i] == 0.0 || m0.pixels[i] == 1.0));

    // Identical seed, identical bytes.
    for (const char* rel : {"train/images/train_0001.pgm", "test/masks/test_0000.pgm"}) {
        std::ifstream fa(dir_a / rel, std::ios::binary);
        std::ifstream fb(dir_b / rel, std::ios::binary);
        REQUIRE(fa);
        REQUIRE(fb);
        const std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
        const std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
        CHECK(ba == bb);
    }

    std::ifstream mf(a.manifest);
    REQUIRE(mf);
    const nlohmann::json manifest = nlohmann::json::parse(mf);
    CHECK(manifest.at("seed").get<std::uint64_t>() == 123);
    CHECK(manifest.at("n_train").get<int>() == 3);
    CHECK(manifest.at("n_test").get<int>() == 2);
    CHECK(manifest.at("train_files").size() == 3);
    CHECK(manifest.at("test_files").size() == 2);
    PhantomConfig pinned = base;
    pinned.seed = 123;
    CHECK(manifest.at("config_hash").get<std::string>() == phantom_config_hash(pinned));

    // Train and test streams are decoupled: files differ across splits.
    std::ifstream ftr(dir_a / "train/images/train_0000.pgm", std::ios::binary);
    std::ifstream fte(dir_a / "test/images/test_0000.pgm", std::ios::binary);
    const std::string btr((std::istreambuf_iterator<char>(ftr)), std::istreambuf_iterator<char>());
    const std::string bte((std::istreambuf_iterator<char>(fte)), std::istreambuf_iterator<char>());
    CHECK(btr != bte);

    CHECK_THROWS_AS(make_benchmark((dir_a / "bad").string(), 1, 0, 1, base), param_error);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

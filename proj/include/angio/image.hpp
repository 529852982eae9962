#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace angio {

// Single-channel raster, row-major, intensities in [0,1] after load.
// All arithmetic is 64-bit.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }
};

// {0,1} raster, row-major.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return bits.size(); }
    std::size_t popcount() const {
        std::size_t n = 0;
        for (auto b : bits) n += b;
        return n;
    }
};

// Per-pixel symmetric 2x2 second-derivative matrices (dxx, dxy, dyy).
struct HessianField {
    int width = 0;
    int height = 0;
    std::vector<double> dxx, dxy, dyy;

    HessianField() = default;
    HessianField(int w, int h)
        : width(w),
          height(h),
          dxx(static_cast<std::size_t>(w) * h, 0.0),
          dxy(static_cast<std::size_t>(w) * h, 0.0),
          dyy(static_cast<std::size_t>(w) * h, 0.0) {}
};

// Mirror (reflect-101) index: the edge pixel is not duplicated, so index -1
// maps to 1 and index n maps to n-2. Shared by smoothing, Hessian stencils and
// the segmentor's convolutions.
inline int mirror_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

// --- I/O ------------------------------------------------------------------
// PGM P2/P5 (8- or 16-bit) and PNG (8- or 16-bit, gray or RGB). 3-channel
// inputs are averaged; intensities are scaled by maxval to [0,1].
GrayImage load_image(const std::string& path);

// 8-bit binary PGM, round(p*255) per pixel.
void write_pgm(const GrayImage& img, const std::string& path);
// Masks as 8-bit binary PGM with values {0, 255}.
void write_pgm(const BinaryMask& mask, const std::string& path);

// Threshold a loaded gray raster back into a mask (>= 0.5 -> 1).
BinaryMask to_mask(const GrayImage& img);

// --- Numeric substrate ----------------------------------------------------
// Separable Gaussian blur, kernel radius ceil(3*sigma), weights normalized to
// sum 1, mirror borders. Horizontal pass then vertical pass.
GrayImage gaussian_smooth(const GrayImage& img, double sigma);

// Second central differences with mirror borders; dxy is the central
// difference of central differences. Requires width, height >= 3.
HessianField hessian(const GrayImage& img);

// Eigenvalues of [[dxx, dxy], [dxy, dyy]] ordered by ascending |.|:
// |first| <= |second|. Closed-form trace/discriminant.
std::pair<double, double> eig2x2_symmetric(double dxx, double dxy, double dyy);

// Nearest-rank percentile: sort ascending, take index ceil(alpha*n/100)-1,
// clamped to [0, n-1].
double percentile(const std::vector<double>& values, double alpha);

}  // namespace angio

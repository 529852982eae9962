#include "angio/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "angio/errors.hpp"

namespace angio {

namespace {

// Skips whitespace and '#' comment lines in a PGM header.
int next_pgm_token(std::istream& in, const std::string& path) {
    for (;;) {
        int c = in.peek();
        if (c == EOF) throw format_error("truncated PGM header: " + path);
        if (std::isspace(c)) {
            in.get();
            continue;
        }
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        break;
    }
    int value = 0;
    if (!(in >> value)) throw format_error("malformed PGM header: " + path);
    return value;
}

GrayImage load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open image: " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || (magic[1] != '2' && magic[1] != '5'))
        throw format_error("not a P2/P5 PGM file: " + path);
    const bool ascii = magic[1] == '2';
    const int width = next_pgm_token(in, path);
    const int height = next_pgm_token(in, path);
    const int maxval = next_pgm_token(in, path);
    if (width <= 0 || height <= 0) throw format_error("bad PGM dimensions: " + path);
    if (maxval <= 0 || maxval > 65535) throw format_error("unsupported PGM maxval: " + path);

    GrayImage img(width, height);
    const std::size_t n = img.size();
    if (ascii) {
        for (std::size_t i = 0; i < n; ++i) {
            int v = 0;
            if (!(in >> v)) throw format_error("truncated P2 data: " + path);
            if (v < 0 || v > maxval) throw format_error("P2 sample out of range: " + path);
            img.pixels[i] = static_cast<double>(v) / maxval;
        }
    } else {
        in.get();  // the single whitespace byte after maxval
        if (maxval < 256) {
            std::vector<std::uint8_t> raw(n);
            in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
            if (!in) throw format_error("truncated P5 data: " + path);
            for (std::size_t i = 0; i < n; ++i)
                img.pixels[i] = static_cast<double>(raw[i]) / maxval;
        } else {
            std::vector<std::uint8_t> raw(n * 2);
            in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
            if (!in) throw format_error("truncated P5 data: " + path);
            for (std::size_t i = 0; i < n; ++i) {
                const int v = (raw[2 * i] << 8) | raw[2 * i + 1];  // big-endian per PGM
                img.pixels[i] = static_cast<double>(v) / maxval;
            }
        }
    }
    return img;
}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

GrayImage load_png(const std::string& path) {
    PngReader r;
    r.fp = std::fopen(path.c_str(), "rb");
    if (!r.fp) throw io_error("cannot open image: " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, r.fp) != 8 || png_sig_cmp(sig, 0, 8))
        throw format_error("not a PNG file: " + path);
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw io_error("libpng init failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw io_error("libpng init failed");
    if (setjmp(png_jmpbuf(r.png))) throw format_error("corrupt PNG data: " + path);

    png_init_io(r.png, r.fp);
    png_set_sig_bytes(r.png, 8);
    png_read_info(r.png, r.info);

    const png_uint_32 width = png_get_image_width(r.png, r.info);
    const png_uint_32 height = png_get_image_height(r.png, r.info);
    const int bit_depth = png_get_bit_depth(r.png, r.info);
    const int color_type = png_get_color_type(r.png, r.info);

    if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB)
        throw format_error("unsupported PNG color type (need 1 or 3 channels): " + path);
    if (bit_depth != 8 && bit_depth != 16)
        throw format_error("unsupported PNG bit depth (need 8 or 16): " + path);

    png_set_interlace_handling(r.png);
    png_read_update_info(r.png, r.info);

    const int channels = png_get_channels(r.png, r.info);
    const std::size_t rowbytes = png_get_rowbytes(r.png, r.info);
    std::vector<std::uint8_t> data(rowbytes * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = data.data() + y * rowbytes;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);

    GrayImage img(static_cast<int>(width), static_cast<int>(height));
    const double maxval = bit_depth == 8 ? 255.0 : 65535.0;
    for (png_uint_32 y = 0; y < height; ++y) {
        const std::uint8_t* row = rows[y];
        for (png_uint_32 x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int c = 0; c < channels; ++c) {
                const std::size_t o = (static_cast<std::size_t>(x) * channels + c) *
                                      (bit_depth == 8 ? 1 : 2);
                const int v = bit_depth == 8 ? row[o] : ((row[o] << 8) | row[o + 1]);
                acc += static_cast<double>(v) / maxval;
            }
            img.at(static_cast<int>(x), static_cast<int>(y)) = acc / channels;
        }
    }
    return img;
}

}  // namespace

GrayImage load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw io_error("cannot open image: " + path);
    char head[2] = {0, 0};
    probe.read(head, 2);
    if (!probe) throw format_error("file too short to be an image: " + path);
    probe.close();
    if (head[0] == 'P' && (head[1] == '2' || head[1] == '5')) return load_pgm(path);
    if (static_cast<unsigned char>(head[0]) == 0x89 && head[1] == 'P') return load_png(path);
    throw format_error("unrecognized image format (need PGM P2/P5 or PNG): " + path);
}

void write_pgm(const GrayImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write image: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> raw(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        double v = img.pixels[i];
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        raw[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw io_error("short write: " + path);
}

void write_pgm(const BinaryMask& mask, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write image: " + path);
    out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    std::vector<std::uint8_t> raw(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) raw[i] = mask.bits[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw io_error("short write: " + path);
}

BinaryMask to_mask(const GrayImage& img) {
    BinaryMask m(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) m.bits[i] = img.pixels[i] >= 0.5 ? 1 : 0;
    return m;
}

GrayImage gaussian_smooth(const GrayImage& img, double sigma) {
    if (!(sigma > 0.0)) throw param_error("gaussian_smooth: sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int j = -radius; j <= radius; ++j) {
        kernel[j + radius] = std::exp(-(static_cast<double>(j) * j) / (2.0 * sigma * sigma));
        sum += kernel[j + radius];
    }
    for (double& w : kernel) w /= sum;

    const int W = img.width, H = img.height;
    GrayImage tmp(W, H), out(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int j = -radius; j <= radius; ++j)
                acc += kernel[j + radius] * img.at(mirror_index(x + j, W), y);
            tmp.at(x, y) = acc;
        }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int j = -radius; j <= radius; ++j)
                acc += kernel[j + radius] * tmp.at(x, mirror_index(y + j, H));
            out.at(x, y) = acc;
        }
    return out;
}

HessianField hessian(const GrayImage& img) {
    if (img.width < 3 || img.height < 3)
        throw shape_error("hessian: image must be at least 3x3");
    const int W = img.width, H = img.height;
    HessianField f(W, H);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const int xm = mirror_index(x - 1, W), xp = mirror_index(x + 1, W);
            const int ym = mirror_index(y - 1, H), yp = mirror_index(y + 1, H);
            const std::size_t i = static_cast<std::size_t>(y) * W + x;
            f.dxx[i] = img.at(xp, y) - 2.0 * img.at(x, y) + img.at(xm, y);
            f.dyy[i] = img.at(x, yp) - 2.0 * img.at(x, y) + img.at(x, ym);
            f.dxy[i] = (img.at(xp, yp) - img.at(xp, ym) - img.at(xm, yp) + img.at(xm, ym)) / 4.0;
        }
    }
    return f;
}

std::pair<double, double> eig2x2_symmetric(double dxx, double dxy, double dyy) {
    const double half_tr = (dxx + dyy) / 2.0;
    const double disc = std::sqrt(((dxx - dyy) / 2.0) * ((dxx - dyy) / 2.0) + dxy * dxy);
    const double hi = half_tr + disc;
    const double lo = half_tr - disc;
    // Order by ascending magnitude; on a magnitude tie the larger-valued root
    // is reported second.
    if (std::fabs(hi) >= std::fabs(lo)) return {lo, hi};
    return {hi, lo};
}

double percentile(const std::vector<double>& values, double alpha) {
    if (values.empty()) throw param_error("percentile: empty input");
    if (alpha < 0.0 || alpha > 100.0) throw param_error("percentile: alpha must be in [0,100]");
    std::vector<double> sorted(values);
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    long long idx = static_cast<long long>(std::ceil(alpha * n / 100.0)) - 1;
    if (idx < 0) idx = 0;
    if (idx >= static_cast<long long>(sorted.size()))
        idx = static_cast<long long>(sorted.size()) - 1;
    return sorted[static_cast<std::size_t>(idx)];
}

}  // namespace angio

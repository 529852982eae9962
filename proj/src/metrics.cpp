#include "angio/metrics.hpp"

#include <array>
#include <cstddef>

#include "angio/errors.hpp"

namespace angio {

double dsc(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw shape_error("dsc: mask dimensions differ");
    std::size_t p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        p += pred.bits[i];
        g += gt.bits[i];
        both += pred.bits[i] & gt.bits[i];
    }
    if (p + g == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

namespace {

// Neighbors P2..P9 clockwise from north; coordinates outside the image read 0.
inline std::array<int, 8> neighborhood(const BinaryMask& m, int x, int y) {
    auto bit = [&](int px, int py) -> int {
        if (px < 0 || px >= m.width || py < 0 || py >= m.height) return 0;
        return m.at(px, py);
    };
    return {bit(x, y - 1),     bit(x + 1, y - 1), bit(x + 1, y), bit(x + 1, y + 1),
            bit(x, y + 1),     bit(x - 1, y + 1), bit(x - 1, y), bit(x - 1, y - 1)};
}

}  // namespace

BinaryMask skeletonize(const BinaryMask& mask) {
    BinaryMask skel = mask;
    std::vector<std::size_t> marked;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int phase = 0; phase < 2; ++phase) {
            marked.clear();
            for (int y = 0; y < skel.height; ++y) {
                for (int x = 0; x < skel.width; ++x) {
                    if (!skel.at(x, y)) continue;
                    const auto p = neighborhood(skel, x, y);
                    int b = 0;
                    for (int v : p) b += v;
                    if (b < 2 || b > 6) continue;
                    int a = 0;
                    for (int i = 0; i < 8; ++i)
                        if (p[i] == 0 && p[(i + 1) % 8] == 1) ++a;
                    if (a != 1) continue;
                    // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
                    if (phase == 0) {
                        if (p[0] * p[2] * p[4] != 0) continue;
                        if (p[2] * p[4] * p[6] != 0) continue;
                    } else {
                        if (p[0] * p[2] * p[6] != 0) continue;
                        if (p[0] * p[4] * p[6] != 0) continue;
                    }
                    marked.push_back(static_cast<std::size_t>(y) * skel.width + x);
                }
            }
            if (!marked.empty()) {
                changed = true;
                for (std::size_t i : marked) skel.bits[i] = 0;
            }
        }
    }
    return skel;
}

MetricReport cldice(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw shape_error("cldice: mask dimensions differ");
    MetricReport r;
    r.dsc = dsc(pred, gt);
    const std::size_t np = pred.popcount(), ng = gt.popcount();
    if (np == 0 && ng == 0) {
        r.tprec = r.tsens = r.cldice = 1.0;
        return r;
    }
    const BinaryMask sp = skeletonize(pred);
    const BinaryMask sg = skeletonize(gt);
    const std::size_t nsp = sp.popcount(), nsg = sg.popcount();
    if (nsp == 0 || nsg == 0) {
        r.tprec = r.tsens = r.cldice = 0.0;
        return r;
    }
    std::size_t sp_in_gt = 0, sg_in_pred = 0;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        sp_in_gt += sp.bits[i] & gt.bits[i];
        sg_in_pred += sg.bits[i] & pred.bits[i];
    }
    r.tprec = static_cast<double>(sp_in_gt) / static_cast<double>(nsp);
    r.tsens = static_cast<double>(sg_in_pred) / static_cast<double>(nsg);
    r.cldice = (r.tprec + r.tsens) > 0.0 ? 2.0 * r.tprec * r.tsens / (r.tprec + r.tsens) : 0.0;
    return r;
}

}  // namespace angio

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "talsc/errors.hpp"
#include "talsc/tensor.hpp"

namespace talsc {

// Row = true class, column = predicted class.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<long long> counts;  // classes*classes

    explicit ConfusionMatrix(int c = 0) : classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}

    long long& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth) * classes + pred]; }
    long long at(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth) * classes + pred];
    }

    long long total() const { return std::accumulate(counts.begin(), counts.end(), 0LL); }

    double trace_ratio() const {
        long long tr = 0;
        for (int i = 0; i < classes; ++i) tr += at(i, i);
        const long long n = total();
        return n > 0 ? static_cast<double>(tr) / n : 0.0;
    }
};

inline ConfusionMatrix confusion(const std::vector<int>& predictions,
                                 const std::vector<int>& labels, int classes) {
    if (predictions.size() != labels.size())
        throw ValidationError("confusion: prediction/label length mismatch");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) ++cm.at(labels[i], predictions[i]);
    return cm;
}

// Fraction of argmax predictions matching the true label.
inline double sra(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty()) throw ValidationError("sra: empty input");
    if (predictions.size() != labels.size())
        throw ValidationError("sra: prediction/label length mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (predictions[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / predictions.size();
}

// Per-class F1; 0 by convention when precision+recall is 0.
inline std::vector<double> f1_per_class(const ConfusionMatrix& cm) {
    std::vector<double> out(cm.classes, 0.0);
    for (int c = 0; c < cm.classes; ++c) {
        long long tp = cm.at(c, c), fp = 0, fn = 0;
        for (int o = 0; o < cm.classes; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        const double denom = 2.0 * tp + fp + fn;
        out[c] = denom > 0.0 ? 2.0 * tp / denom : 0.0;
    }
    return out;
}

inline double macro_f1(const ConfusionMatrix& cm) {
    const auto f1 = f1_per_class(cm);
    return f1.empty() ? 0.0 : std::accumulate(f1.begin(), f1.end(), 0.0) / f1.size();
}

struct MsSsimConfig {
    int levels = 5;
    std::vector<double> weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    int window = 11;
    double window_sigma = 1.5;
    double c1 = 0.01 * 0.01;  // (k1*L)^2 with L = 1
    double c2 = 0.03 * 0.03;
};

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(size);
    const double mid = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[i] = std::exp(-(i - mid) * (i - mid) / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// valid-mode separable Gaussian filter over one channel plane
inline std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                        const std::vector<double>& k, int& oh, int& ow) {
    const int ks = static_cast<int>(k.size());
    oh = h - ks + 1;
    ow = w - ks + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < ks; ++i) acc += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < ks; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

inline std::vector<double> downsample2(const std::vector<double>& img, int h, int w, int& oh,
                                       int& ow) {
    oh = h / 2;
    ow = w / 2;
    std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            out[static_cast<std::size_t>(y) * ow + x] =
                0.25 * (img[static_cast<std::size_t>(2 * y) * w + 2 * x] +
                        img[static_cast<std::size_t>(2 * y) * w + 2 * x + 1] +
                        img[static_cast<std::size_t>(2 * y + 1) * w + 2 * x] +
                        img[static_cast<std::size_t>(2 * y + 1) * w + 2 * x + 1]);
    return out;
}

struct SsimTerms {
    double luminance = 0.0;
    double contrast_structure = 0.0;
};

inline SsimTerms ssim_terms(const std::vector<double>& a, const std::vector<double>& b, int h,
                            int w, int window, double sigma, double c1, double c2) {
    const auto k = gaussian_kernel(window, sigma);
    int oh = 0, ow = 0;
    auto mu_a = filter_valid(a, h, w, k, oh, ow);
    auto mu_b = filter_valid(b, h, w, k, oh, ow);
    std::vector<double> aa(a.size()), bb(b.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    auto m_aa = filter_valid(aa, h, w, k, oh, ow);
    auto m_bb = filter_valid(bb, h, w, k, oh, ow);
    auto m_ab = filter_valid(ab, h, w, k, oh, ow);
    SsimTerms t;
    const std::size_t n = mu_a.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double va = m_aa[i] - mu_a[i] * mu_a[i];
        const double vb = m_bb[i] - mu_b[i] * mu_b[i];
        const double cov = m_ab[i] - mu_a[i] * mu_b[i];
        t.luminance += (2.0 * mu_a[i] * mu_b[i] + c1) / (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1);
        t.contrast_structure += (2.0 * cov + c2) / (va + vb + c2);
    }
    t.luminance /= n;
    t.contrast_structure /= n;
    return t;
}

}  // namespace detail

// Level count the pyramid supports: the coarsest level must keep a usable
// window (min dim >= 8); the window itself shrinks to fit coarse levels.
inline int ms_ssim_levels(int min_dim, const MsSsimConfig& cfg) {
    int levels = 1;
    while (levels < cfg.levels && (min_dim >> levels) >= 8) ++levels;
    return levels;
}

// Multi-scale SSIM: contrast/structure at every level, luminance at the
// coarsest, geometric combination with renormalized weights.
inline double ms_ssim(const Tensor& img_a, const Tensor& img_b, const MsSsimConfig& cfg = {}) {
    check_same_shape(img_a, img_b, "ms_ssim");
    if (img_a.shape.size() != 3) throw ValidationError("ms_ssim: expected (c,h,w) images");
    const int ch = img_a.shape[0], h = img_a.shape[1], w = img_a.shape[2];
    const int levels = ms_ssim_levels(std::min(h, w), cfg);
    if (static_cast<int>(cfg.weights.size()) < levels)
        throw ConfigError("ms_ssim: fewer weights than levels");
    double wsum = 0.0;
    for (int l = 0; l < levels; ++l) wsum += cfg.weights[l];

    double result = 0.0;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < ch; ++c) {
        std::vector<double> a(img_a.data.begin() + c * plane, img_a.data.begin() + (c + 1) * plane);
        std::vector<double> b(img_b.data.begin() + c * plane, img_b.data.begin() + (c + 1) * plane);
        int lh = h, lw = w;
        double acc = 1.0;
        for (int l = 0; l < levels; ++l) {
            int win = std::min(cfg.window, std::min(lh, lw));
            if (win % 2 == 0) --win;
            const auto t = detail::ssim_terms(a, b, lh, lw, win, cfg.window_sigma, cfg.c1, cfg.c2);
            const double weight = cfg.weights[l] / wsum;
            const double cs = std::max(t.contrast_structure, 0.0);
            if (l == levels - 1) {
                acc *= std::pow(std::max(t.luminance * cs, 0.0), weight);
            } else {
                acc *= std::pow(cs, weight);
                int nh = 0, nw = 0;
                a = detail::downsample2(a, lh, lw, nh, nw);
                b = detail::downsample2(b, lh, lw, nh, nw);
                lh = nh;
                lw = nw;
            }
        }
        result += acc;
    }
    return result / ch;
}

struct LossHistogram {
    std::vector<double> bin_edges;  // size bins+1
    std::vector<long long> count_clean;
    std::vector<long long> count_flipped;
};

// Grouped loss histograms: clean vs corrupted per the shadow labels.
inline LossHistogram loss_histograms(const std::vector<double>& losses,
                                     const std::vector<bool>& corrupted, int bins = 32,
                                     double lo = 0.0, double hi = 10.0) {
    if (losses.size() != corrupted.size())
        throw ValidationError("loss_histograms: length mismatch");
    if (bins < 1 || !(hi > lo)) throw ValidationError("loss_histograms: bad bin spec");
    LossHistogram h;
    h.bin_edges.resize(bins + 1);
    for (int i = 0; i <= bins; ++i) h.bin_edges[i] = lo + (hi - lo) * i / bins;
    h.count_clean.assign(bins, 0);
    h.count_flipped.assign(bins, 0);
    for (std::size_t i = 0; i < losses.size(); ++i) {
        int b = static_cast<int>((losses[i] - lo) / (hi - lo) * bins);
        b = std::clamp(b, 0, bins - 1);
        (corrupted[i] ? h.count_flipped : h.count_clean)[b]++;
    }
    return h;
}

inline void write_histogram_csv(const LossHistogram& h, const std::filesystem::path& path) {
    std::ofstream f(path);
    f << "bin_left,bin_right,count_clean,count_flipped\n";
    for (std::size_t i = 0; i + 1 < h.bin_edges.size(); ++i)
        f << h.bin_edges[i] << "," << h.bin_edges[i + 1] << "," << h.count_clean[i] << ","
          << h.count_flipped[i] << "\n";
}

// Overlap coefficient of the two normalized histograms.
inline double histogram_overlap(const LossHistogram& h) {
    const double nc = std::accumulate(h.count_clean.begin(), h.count_clean.end(), 0.0);
    const double nf = std::accumulate(h.count_flipped.begin(), h.count_flipped.end(), 0.0);
    if (nc == 0.0 || nf == 0.0) return 0.0;
    double overlap = 0.0;
    for (std::size_t i = 0; i < h.count_clean.size(); ++i)
        overlap += std::min(h.count_clean[i] / nc, h.count_flipped[i] / nf);
    return overlap;
}

namespace detail {
inline std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (i + j) / 2.0 + 1.0;  // average rank for ties
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}
}  // namespace detail

inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw ValidationError("spearman: need two equal-length series");
    const auto rx = detail::ranks(xs), ry = detail::ranks(ys);
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace talsc

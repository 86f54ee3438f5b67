#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "talsc/errors.hpp"
#include "talsc/rng.hpp"
#include "talsc/tensor.hpp"

namespace talsc {

// Complex vectors travel as interleaved (re,im) real pairs so the autodiff
// layer stays real-valued.

enum class ChannelKind { Awgn, Rayleigh, Rician };

inline const char* to_string(ChannelKind k) {
    switch (k) {
        case ChannelKind::Awgn: return "awgn";
        case ChannelKind::Rayleigh: return "rayleigh";
        case ChannelKind::Rician: return "rician";
    }
    return "?";
}

inline ChannelKind channel_kind_from_string(const std::string& s) {
    if (s == "awgn") return ChannelKind::Awgn;
    if (s == "rayleigh") return ChannelKind::Rayleigh;
    if (s == "rician") return ChannelKind::Rician;
    throw ConfigError("unknown channel kind '" + s + "'");
}

inline double snr_to_sigma2(double snr_db) {
    if (!std::isfinite(snr_db)) throw ValidationError("snr_db must be finite");
    return std::pow(10.0, -snr_db / 10.0);
}

struct ChannelConfig {
    ChannelKind kind = ChannelKind::Awgn;
    double snr_db = 8.0;
    double rician_r = 8.0;  // only meaningful for Rician

    double sigma2() const { return snr_to_sigma2(snr_db); }
};

// One fading block: a single complex coefficient h held constant for a batch.
struct ChannelRealization {
    double h_re = 1.0;
    double h_im = 0.0;
    double sigma2 = 0.0;
    std::uint64_t id = 0;

    double h_abs2() const { return h_re * h_re + h_im * h_im; }
};

inline constexpr double kDeepFadeThreshold = 1e-12;

inline ChannelRealization draw_realization(const ChannelConfig& cfg, RngStream& rng,
                                           std::uint64_t id = 0) {
    ChannelRealization r;
    r.sigma2 = cfg.sigma2();
    r.id = id;
    switch (cfg.kind) {
        case ChannelKind::Awgn:
            r.h_re = 1.0;
            r.h_im = 0.0;
            break;
        case ChannelKind::Rayleigh: {
            // h ~ CN(0,1): each real part N(0, 1/2)
            const double s = std::sqrt(0.5);
            r.h_re = rng.normal(0.0, s);
            r.h_im = rng.normal(0.0, s);
            break;
        }
        case ChannelKind::Rician: {
            if (cfg.rician_r <= 0.0) throw ConfigError("rician_r must be positive");
            const double mu = std::sqrt(cfg.rician_r / (cfg.rician_r + 1.0));
            const double sigma = std::sqrt(1.0 / (cfg.rician_r + 1.0));
            const double s = sigma * std::sqrt(0.5);
            r.h_re = mu + rng.normal(0.0, s);
            r.h_im = rng.normal(0.0, s);
            break;
        }
    }
    return r;
}

// y = h*x + n with n ~ CN(0, sigma2) i.i.d. per complex symbol.
inline std::vector<double> transmit(std::span<const double> x, const ChannelRealization& r,
                                    RngStream& noise_rng) {
    if (x.size() % 2 != 0) throw ValidationError("transmit: odd real count");
    std::vector<double> y(x.size());
    const double ns = std::sqrt(r.sigma2 * 0.5);
    for (std::size_t i = 0; i < x.size(); i += 2) {
        const double a = x[i], b = x[i + 1];
        if (!std::isfinite(a) || !std::isfinite(b))
            throw ValidationError("transmit: non-finite input symbol");
        const double nr = r.sigma2 > 0.0 ? noise_rng.normal(0.0, ns) : 0.0;
        const double ni = r.sigma2 > 0.0 ? noise_rng.normal(0.0, ns) : 0.0;
        y[i] = r.h_re * a - r.h_im * b + nr;
        y[i + 1] = r.h_re * b + r.h_im * a + ni;
    }
    return y;
}

// Perfect-CSI equalization: xhat = conj(h)*y / |h|^2.
inline std::vector<double> equalize(std::span<const double> y, const ChannelRealization& r) {
    const double p = r.h_abs2();
    if (std::sqrt(p) < kDeepFadeThreshold)
        throw DeepFadeError("equalize: |h| below deep-fade threshold, skip batch");
    const double cr = r.h_re / p, ci = -r.h_im / p;
    std::vector<double> x(y.size());
    for (std::size_t i = 0; i < y.size(); i += 2) {
        x[i] = cr * y[i] - ci * y[i + 1];
        x[i + 1] = cr * y[i + 1] + ci * y[i];
    }
    return x;
}

// Cotangent maps of the two linear stages. For a real-valued loss, a complex
// multiply by c transposes to a multiply by conj(c).
//   channel y=h*x:        d_x = conj(h) * d_y
//   equalize xhat=c*y:    d_y = conj(c) * d_xhat = (h/|h|^2) * d_xhat
inline void complex_scale_inplace(std::span<double> v, double re, double im) {
    for (std::size_t i = 0; i < v.size(); i += 2) {
        const double a = v[i], b = v[i + 1];
        v[i] = re * a - im * b;
        v[i + 1] = re * b + im * a;
    }
}

inline Tensor channel_backward(const Tensor& dy, const ChannelRealization& r) {
    Tensor dx = dy;
    complex_scale_inplace(dx.data, r.h_re, -r.h_im);
    return dx;
}

inline Tensor equalize_backward(const Tensor& dxhat, const ChannelRealization& r) {
    const double p = r.h_abs2();
    Tensor dy = dxhat;
    complex_scale_inplace(dy.data, r.h_re / p, r.h_im / p);
    return dy;
}

}  // namespace talsc

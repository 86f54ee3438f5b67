#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "talsc/errors.hpp"
#include "talsc/layers.hpp"
#include "talsc/rng.hpp"
#include "talsc/spline.hpp"

namespace talsc {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

enum class SefBackend { Mlp, Kan, ConstantOne };

inline const char* to_string(SefBackend b) {
    switch (b) {
        case SefBackend::Mlp: return "mlp";
        case SefBackend::Kan: return "kan";
        case SefBackend::ConstantOne: return "none";
    }
    return "?";
}

// KAN stack: every edge between consecutive layers carries one pure-spline
// activation; node value = sum of incoming spline outputs. All activations
// share a single SplineSpec so one transfer matrix extends them all.
struct KanNetwork {
    std::vector<int> shape;  // [1, n1, ..., 1]
    SplineSpec spec;
    std::vector<std::vector<double>> coeffs;  // one group per activation, layer-major

    int num_groups() const {
        int n = 0;
        for (std::size_t l = 0; l + 1 < shape.size(); ++l) n += shape[l] * shape[l + 1];
        return n;
    }

    // group index for activation (layer l, output i, input j)
    int group(int l, int i, int j) const {
        int base = 0;
        for (int q = 0; q < l; ++q) base += shape[q] * shape[q + 1];
        return base + i * shape[l] + j;
    }

    static KanNetwork init(std::vector<int> shape, SplineSpec spec, RngStream& rng) {
        if (shape.size() < 2 || shape.front() != 1 || shape.back() != 1)
            throw ConfigError("KAN shape must start and end at width 1");
        spec.validate();
        KanNetwork k;
        k.shape = std::move(shape);
        k.spec = spec;
        const auto ident = spec.identity_coeffs();
        const int layers = static_cast<int>(k.shape.size()) - 1;
        for (int l = 0; l < layers; ++l) {
            const double fan = static_cast<double>(k.shape[l]);
            for (int i = 0; i < k.shape[l + 1]; ++i)
                for (int j = 0; j < k.shape[l]; ++j) {
                    std::vector<double> c(spec.num_basis());
                    if (l + 1 < layers) {
                        // keep hidden node values inside the spline domain
                        for (int q = 0; q < spec.num_basis(); ++q)
                            c[q] = ident[q] / fan + rng.normal(0.0, 0.02);
                    } else {
                        for (int q = 0; q < spec.num_basis(); ++q) c[q] = rng.normal(0.0, 0.02);
                    }
                    k.coeffs.push_back(std::move(c));
                }
        }
        return k;
    }
};

// Sample Confidence Module: significance evaluation function V(loss | Theta)
// mapping a scalar task loss to (0,1) via a sigmoid output.
class Scm {
public:
    struct Grad {
        double v = 0.0;
        double dv_dloss = 0.0;
        std::vector<double> dv_dtheta;  // flattened, matches params_flat order
    };

    static Scm make_mlp(int hidden_width, RngStream& rng) {
        if (hidden_width < 1) throw ConfigError("MLP hidden width must be >= 1");
        Scm s;
        s.backend_ = SefBackend::Mlp;
        s.mlp_.add(Dense(1, hidden_width, rng));
        s.mlp_.add(ReLU());
        s.mlp_.add(Dense(hidden_width, 1, rng));
        return s;
    }

    static Scm make_kan(std::vector<int> shape, SplineSpec spec, RngStream& rng) {
        Scm s;
        s.backend_ = SefBackend::Kan;
        s.kan_ = KanNetwork::init(std::move(shape), spec, rng);
        return s;
    }

    // Frozen V == 1 (the no-SCM baseline).
    static Scm constant_one() {
        Scm s;
        s.backend_ = SefBackend::ConstantOne;
        return s;
    }

    SefBackend backend() const { return backend_; }
    const KanNetwork& kan() const { return kan_; }
    const SplineSpec& spline_spec() const { return kan_.spec; }

    double eval(double loss) const {
        Grad g;
        eval_impl(loss, g, false);
        return g.v;
    }

    Grad eval_with_grad(double loss) const {
        Grad g;
        eval_impl(loss, g, true);
        return g;
    }

    std::size_t param_count() const {
        switch (backend_) {
            case SefBackend::Mlp: return mlp_.param_count();
            case SefBackend::Kan: {
                std::size_t n = 0;
                for (const auto& c : kan_.coeffs) n += c.size();
                return n;
            }
            case SefBackend::ConstantOne: return 0;
        }
        return 0;
    }

    std::vector<double> params_flat() const {
        if (backend_ == SefBackend::Mlp) return mlp_.params_flat();
        std::vector<double> out;
        out.reserve(param_count());
        for (const auto& c : kan_.coeffs) out.insert(out.end(), c.begin(), c.end());
        return out;
    }

    void set_params_flat(const std::vector<double>& flat) {
        if (flat.size() != param_count()) throw ConfigError("Scm::set_params_flat: size mismatch");
        if (backend_ == SefBackend::Mlp) {
            mlp_.set_params_flat(flat);
            return;
        }
        std::size_t off = 0;
        for (auto& c : kan_.coeffs) {
            std::copy(flat.begin() + off, flat.begin() + off + c.size(), c.begin());
            off += c.size();
        }
    }

    void apply_delta(std::span<const double> delta, double scale = 1.0) {
        if (backend_ == SefBackend::ConstantOne) return;
        auto p = params_flat();
        if (delta.size() != p.size()) throw ConfigError("Scm::apply_delta: size mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += scale * delta[i];
        set_params_flat(p);
    }

    // Closed-form coefficient transfer to a finer grid; KAN only. All groups
    // share one transform built on the supplied loss samples.
    void extend_grid(const SplineSpec& target, std::span<const double> sample_losses) {
        if (backend_ != SefBackend::Kan)
            throw ContractError("grid extension requires the KAN backend");
        std::vector<double> xs(sample_losses.begin(), sample_losses.end());
        for (double& x : xs) x = kan_.spec.clamp(x);
        TransformMatrix tm = grid_transform(kan_.spec, target, xs);
        for (auto& c : kan_.coeffs) c = tm.apply(c);
        kan_.spec = target;
    }

private:
    void eval_impl(double loss, Grad& g, bool want_grad) const {
        if (std::isnan(loss)) throw ValidationError("sef_eval: NaN loss");
        switch (backend_) {
            case SefBackend::ConstantOne:
                g.v = 1.0;
                g.dv_dloss = 0.0;
                if (want_grad) g.dv_dtheta.clear();
                return;
            case SefBackend::Mlp: {
                Tensor x({1});
                x.data[0] = loss;
                NetCache cache;
                Tensor raw = const_cast<Net&>(mlp_).forward(x, cache);
                g.v = sigmoid(raw.data[0]);
                if (want_grad) {
                    Net& net = const_cast<Net&>(mlp_);
                    net.zero_grads();
                    Tensor dy({1});
                    dy.data[0] = g.v * (1.0 - g.v);
                    Tensor dx = net.backward(dy, cache);
                    g.dv_dloss = dx.data[0];
                    g.dv_dtheta = net.grads_flat();
                }
                return;
            }
            case SefBackend::Kan:
                eval_kan(loss, g, want_grad);
                return;
        }
    }

    void eval_kan(double loss, Grad& g, bool want_grad) const {
        const auto& net = kan_;
        const SplineSpec& spec = net.spec;
        const int nb = spec.num_basis();
        const int layers = static_cast<int>(net.shape.size()) - 1;

        // Forward, caching per-node basis rows for the backward sweep.
        std::vector<std::vector<double>> values(layers + 1);
        std::vector<std::vector<std::vector<double>>> basis_rows(layers), deriv_rows(layers);
        std::vector<std::vector<bool>> clamped(layers);
        values[0] = {spec.clamp(loss)};
        const bool input_clamped = loss < spec.a || loss > spec.b;
        for (int l = 0; l < layers; ++l) {
            const int nin = net.shape[l], nout = net.shape[l + 1];
            basis_rows[l].resize(nin);
            deriv_rows[l].resize(nin);
            clamped[l].assign(nin, false);
            for (int j = 0; j < nin; ++j) {
                const double xv = l == 0 ? values[0][0] : values[l][j];
                const double xc = spec.clamp(xv);
                clamped[l][j] = xv < spec.a || xv > spec.b;
                spec.basis(xc, basis_rows[l][j], want_grad ? &deriv_rows[l][j] : nullptr);
                if (l > 0) values[l][j] = xc;
            }
            values[l + 1].assign(nout, 0.0);
            for (int i = 0; i < nout; ++i)
                for (int j = 0; j < nin; ++j) {
                    const auto& c = net.coeffs[net.group(l, i, j)];
                    double acc = 0.0;
                    for (int q = 0; q < nb; ++q) acc += c[q] * basis_rows[l][j][q];
                    values[l + 1][i] += acc;
                }
        }
        const double raw = values[layers][0];
        g.v = sigmoid(raw);
        if (!want_grad) return;

        const double dsig = g.v * (1.0 - g.v);
        g.dv_dtheta.assign(param_count(), 0.0);
        // upstream cotangent per node, starting at the raw output
        std::vector<double> up = {dsig};
        for (int l = layers - 1; l >= 0; --l) {
            const int nin = net.shape[l], nout = net.shape[l + 1];
            std::vector<double> down(nin, 0.0);
            for (int i = 0; i < nout; ++i) {
                const double u = up[i];
                if (u == 0.0) continue;
                for (int j = 0; j < nin; ++j) {
                    const int q = net.group(l, i, j);
                    const auto& c = net.coeffs[q];
                    double* gtheta = &g.dv_dtheta[static_cast<std::size_t>(q) * nb];
                    double dfdx = 0.0;
                    for (int b = 0; b < nb; ++b) {
                        gtheta[b] += u * basis_rows[l][j][b];
                        dfdx += c[b] * deriv_rows[l][j][b];
                    }
                    if (!clamped[l][j]) down[j] += u * dfdx;
                }
            }
            up.swap(down);
        }
        g.dv_dloss = input_clamped ? 0.0 : up[0];
    }

    SefBackend backend_ = SefBackend::ConstantOne;
    Net mlp_;
    KanNetwork kan_;
};

// Smallest hidden width whose 1-hidden-layer MLP parameter count is closest
// to `target` (for the KAN-vs-MLP parity harness).
inline int mlp_width_for_param_count(std::size_t target) {
    // params = in*H + H + H*out + out = 3H + 1 for scalar in/out
    int h = static_cast<int>(std::llround((static_cast<double>(target) - 1.0) / 3.0));
    return h < 1 ? 1 : h;
}

}  // namespace talsc

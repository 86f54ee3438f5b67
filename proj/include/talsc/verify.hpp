#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "talsc/channel.hpp"
#include "talsc/layers.hpp"
#include "talsc/learner.hpp"
#include "talsc/losses.hpp"
#include "talsc/rng.hpp"
#include "talsc/scm.hpp"
#include "talsc/spline.hpp"
#include "talsc/trainer.hpp"

namespace talsc {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;  // observed vs expected on failure
};

struct SuiteResult {
    std::string name;
    bool passed = true;
    std::vector<CheckResult> checks;
    double seconds = 0.0;

    void add(const std::string& check, bool ok, const std::string& detail = "") {
        checks.push_back({check, ok, detail});
        passed = passed && ok;
    }
};

// Test-fixture fault injection: flips the sign of dense-layer parameter
// gradients inside the gradient suite so the suite provably catches a broken
// backward pass.
enum class GradMutation { None, FlipDenseSign };

namespace detail {

inline double rel_err(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
    return std::fabs(a - b) / denom;
}

// Central finite differences of a scalar function of one parameter vector.
inline double fd_partial(const std::function<double()>& f, double& x, double h = 1e-5) {
    const double x0 = x;
    x = x0 + h;
    const double fp = f();
    x = x0 - h;
    const double fm = f();
    x = x0;
    return (fp - fm) / (2.0 * h);
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

inline std::string fail_detail(const std::string& what, double observed, double expected) {
    std::ostringstream os;
    os.precision(10);
    os << what << ": observed " << observed << ", expected " << expected;
    return os.str();
}

}  // namespace detail

// Suite 1: every layer's analytic gradient vs central finite differences,
// plus the composed encoder/normalization and decoder/classifier chains.
inline SuiteResult suite_gradients(std::uint64_t seed = 7,
                                   GradMutation mutation = GradMutation::None,
                                   double tol = 1e-4, int coords_per_layer = 24) {
    detail::Timer timer;
    SuiteResult suite;
    suite.name = "gradients";
    RngStream rng(seed, "verify-grad");

    // scalar readout: weighted sum of outputs with fixed random weights
    auto check_net = [&](const std::string& label, Net& net, const std::vector<int>& in_shape,
                         bool dense_layer_present) {
        Tensor x(in_shape);
        for (double& v : x.data) v = rng.normal(0.0, 1.0);
        std::vector<double> w;
        {
            NetCache c;
            Tensor y0 = net.forward(x, c);
            for (std::size_t i = 0; i < y0.size(); ++i) w.push_back(rng.normal(0.0, 1.0));
        }
        auto value = [&]() {
            Tensor y = net.forward(x);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y.data[i];
            return s;
        };
        NetCache cache;
        Tensor y = net.forward(x, cache);
        Tensor dy(y.shape);
        dy.data = w;
        net.zero_grads();
        Tensor dx = net.backward(dy, cache);

        if (mutation == GradMutation::FlipDenseSign && dense_layer_present)
            for (Tensor* p : net.params())
                for (double& g : p->grad) g = -g;

        double worst = 0.0;
        auto params = net.params();
        std::size_t total = 0;
        for (Tensor* p : params) total += p->size();
        for (int c = 0; c < coords_per_layer && total > 0; ++c) {
            std::size_t pick = rng.below(total);
            for (Tensor* p : params) {
                if (pick >= p->size()) {
                    pick -= p->size();
                    continue;
                }
                const double fd = detail::fd_partial(value, p->data[pick]);
                worst = std::max(worst, detail::rel_err(p->grad[pick], fd));
                break;
            }
        }
        for (int c = 0; c < coords_per_layer; ++c) {
            const std::size_t pick = rng.below(x.size());
            const double fd = detail::fd_partial(value, x.data[pick]);
            worst = std::max(worst, detail::rel_err(dx.data[pick], fd));
        }
        suite.add(label, worst <= tol,
                  worst <= tol ? "" : detail::fail_detail("max relative error", worst, tol));
    };

    {
        Net net;
        net.add(Dense(7, 5, rng));
        check_net("dense", net, {7}, true);
    }
    {
        Net net;
        net.add(Conv2d(2, 3, 3, 2, 1, rng));
        check_net("conv2d", net, {2, 9, 9}, false);
    }
    {
        Net net;
        net.add(ConvTranspose2d(3, 2, 3, 2, 1, 1, rng));
        check_net("conv_transpose2d", net, {3, 5, 5}, false);
    }
    {
        Net net;
        net.add(Dense(6, 6, rng));
        net.add(ReLU());
        check_net("relu_chain", net, {6}, true);
    }
    {
        Net net;
        net.add(Dense(6, 4, rng));
        net.add(Sigmoid());
        check_net("sigmoid_chain", net, {6}, true);
    }
    {
        Net net;
        net.add(Reshape({12}));
        net.add(Dense(12, 3, rng));
        check_net("reshape_chain", net, {3, 2, 2}, true);
    }

    // composed decoder+classifier objective including softmax-CE and MSE
    {
        Topology topo;
        topo.image_h = topo.image_w = 8;
        topo.conv_channels = {3};
        topo.latent_symbols = 6;
        topo.classifier_hidden = 8;
        topo.classes = 4;
        LearnerState st = LearnerState::build(topo, rng);
        Sample s;
        s.image = Tensor({1, 8, 8});
        for (double& v : s.image.data) v = rng.uniform(0.0, 1.0);
        s.label = 2;
        Tensor xhat({topo.latent_reals()});
        for (double& v : xhat.data) v = rng.normal(0.0, 0.5);
        auto value = [&]() {
            return decoder_sample_pass(st, st.decoder(), xhat, s, 0.4, 2.0, false).loss.combined;
        };
        SamplePass pass = decoder_sample_pass(st, st.decoder(), xhat, s, 0.4, 2.0);
        double worst = 0.0;
        auto params = st.decoder().params_flat();
        for (int c = 0; c < 2 * coords_per_layer; ++c) {
            std::size_t pick = rng.below(params.size());
            std::size_t off = 0;
            for (Tensor* p : st.decoder().params()) {
                if (pick - off < p->size()) {
                    const double fd = detail::fd_partial(value, p->data[pick - off]);
                    worst = std::max(worst, detail::rel_err(pass.decoder_grad[pick], fd));
                    break;
                }
                off += p->size();
            }
        }
        for (int c = 0; c < coords_per_layer; ++c) {
            const std::size_t pick = rng.below(xhat.size());
            const double fd = detail::fd_partial(value, xhat.data[pick]);
            worst = std::max(worst, detail::rel_err(pass.dxhat.data[pick], fd));
        }
        suite.add("decoder_classifier_loss", worst <= tol,
                  worst <= tol ? "" : detail::fail_detail("max relative error", worst, tol));
    }

    // encoder + batch power normalization (batch-coupled backward)
    {
        Topology topo;
        topo.image_h = topo.image_w = 8;
        topo.conv_channels = {3};
        topo.latent_symbols = 6;
        LearnerState st = LearnerState::build(topo, rng);
        std::vector<Tensor> batch(3, Tensor({1, 8, 8}));
        for (Tensor& t : batch)
            for (double& v : t.data) v = rng.uniform(0.0, 1.0);
        std::vector<std::vector<double>> w(3, std::vector<double>(topo.latent_reals()));
        for (auto& row : w)
            for (double& v : row) v = rng.normal(0.0, 1.0);
        auto value = [&]() {
            auto xs = forward_encoder(st, batch);
            double s = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i)
                for (std::size_t k = 0; k < xs[i].size(); ++k) s += w[i][k] * xs[i].data[k];
            return s;
        };
        EncodeRecord rec;
        forward_encoder(st, batch, &rec);
        std::vector<Tensor> dxs;
        for (int i = 0; i < 3; ++i) {
            Tensor d({topo.latent_reals()});
            d.data = w[i];
            dxs.push_back(std::move(d));
        }
        st.encoder().zero_grads();
        backward_encoder(st, rec, dxs);
        double worst = 0.0;
        for (int c = 0; c < 2 * coords_per_layer; ++c) {
            auto params = st.encoder().params();
            std::size_t total = 0;
            for (Tensor* p : params) total += p->size();
            std::size_t pick = rng.below(total);
            for (Tensor* p : params) {
                if (pick >= p->size()) {
                    pick -= p->size();
                    continue;
                }
                const double fd = detail::fd_partial(value, p->data[pick]);
                worst = std::max(worst, detail::rel_err(p->grad[pick], fd));
                break;
            }
        }
        suite.add("encoder_power_norm", worst <= tol,
                  worst <= tol ? "" : detail::fail_detail("max relative error", worst, tol));
    }

    // SEF backends: dv/dloss and dv/dtheta against finite differences
    for (const bool kan : {false, true}) {
        RngStream srng(seed, kan ? "verify-sef-kan" : "verify-sef-mlp");
        Scm scm = kan ? Scm::make_kan({1, 4, 1}, SplineSpec{0.0, 10.0, 4, 3}, srng)
                      : Scm::make_mlp(6, srng);
        double worst = 0.0;
        for (int trial = 0; trial < 6; ++trial) {
            const double loss = srng.uniform(0.5, 9.5);
            const Scm::Grad g = scm.eval_with_grad(loss);
            {
                const double h = 1e-5;
                const double fd = (scm.eval(loss + h) - scm.eval(loss - h)) / (2.0 * h);
                worst = std::max(worst, detail::rel_err(g.dv_dloss, fd));
            }
            auto theta = scm.params_flat();
            for (int c = 0; c < 8; ++c) {
                const std::size_t pick = srng.below(theta.size());
                auto f = [&]() {
                    scm.set_params_flat(theta);
                    return scm.eval(loss);
                };
                const double fd = detail::fd_partial(f, theta[pick]);
                scm.set_params_flat(theta);
                worst = std::max(worst, detail::rel_err(g.dv_dtheta[pick], fd));
            }
        }
        suite.add(kan ? "sef_kan" : "sef_mlp", worst <= tol,
                  worst <= tol ? "" : detail::fail_detail("max relative error", worst, tol));
    }

    suite.seconds = timer.seconds();
    return suite;
}

// Suite 2: Eq-18-style closed-form SCM update vs unrolled differentiation on a
// toy net (small parameter count) with a KAN [1,4,1] confidence module.
inline SuiteResult suite_eq18(std::uint64_t seed = 11, double tol = 1e-6) {
    detail::Timer timer;
    SuiteResult suite;
    suite.name = "eq18";
    RngStream rng(seed, "verify-eq18");

    const int dim_in = 5, dim_out = 4, n = 6, m = 3;
    const double alpha = 0.05, beta = 1e-2;
    Net net;
    net.add(Dense(dim_in, dim_out, rng));  // 24 parameters

    std::vector<Tensor> xs(n, Tensor({dim_in})), ts(n, Tensor({dim_out}));
    std::vector<Tensor> mx(m, Tensor({dim_in})), mt(m, Tensor({dim_out}));
    for (auto* group : {&xs, &ts, &mx, &mt})
        for (Tensor& t : *group)
            for (double& v : t.data) v = rng.normal(0.0, 1.0);

    auto loss_and_grad = [&](Net& model, const Tensor& x, const Tensor& t,
                             std::vector<double>* grad) {
        NetCache cache;
        Tensor y = model.forward(x, cache);
        Tensor d;
        const double l = mse(y, t, grad ? &d : nullptr);
        if (grad) {
            model.zero_grads();
            model.backward(d, cache);
            *grad = model.grads_flat();
        }
        return l;
    };

    Scm scm_a = Scm::make_kan({1, 4, 1}, SplineSpec{0.0, 10.0, 4, 3}, rng);
    Scm scm_b = scm_a;

    std::vector<double> losses(n);
    std::vector<std::vector<double>> train_grads(n);
    for (int j = 0; j < n; ++j) losses[j] = loss_and_grad(net, xs[j], ts[j], &train_grads[j]);

    // route A: unrolled chain rule through the temporary update
    std::vector<double> v(n);
    for (int j = 0; j < n; ++j) v[j] = scm_a.eval(losses[j]);
    Net temp = net;
    temp.set_params_flat(temp_update_params(net.params_flat(), train_grads, v, alpha));
    std::vector<std::vector<double>> meta_grads(m);
    std::vector<double> dmeta_dw(net.param_count(), 0.0);
    for (int i = 0; i < m; ++i) {
        loss_and_grad(temp, mx[i], mt[i], &meta_grads[i]);
        for (std::size_t k = 0; k < dmeta_dw.size(); ++k)
            dmeta_dw[k] += meta_grads[i][k] / static_cast<double>(m);
    }
    std::vector<double> dtheta(scm_a.param_count(), 0.0);
    for (int j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < dmeta_dw.size(); ++k) dot += train_grads[j][k] * dmeta_dw[k];
        const double dv = -alpha / n * dot;
        const auto g = scm_a.eval_with_grad(losses[j]);
        for (std::size_t k = 0; k < dtheta.size(); ++k) dtheta[k] += dv * g.dv_dtheta[k];
    }
    scm_a.apply_delta(dtheta, -beta);

    // route B: explicit gradient-inner-product form
    scm_update_closed_form(scm_b, train_grads, losses, meta_grads, alpha, beta);

    const auto pa = scm_a.params_flat(), pb = scm_b.params_flat();
    double worst = 0.0;
    for (std::size_t k = 0; k < pa.size(); ++k)
        worst = std::max(worst, detail::rel_err(pa[k], pb[k]));
    suite.add("unrolled_vs_closed_form", worst <= tol,
              worst <= tol ? "" : detail::fail_detail("max relative error", worst, tol));

    // momentum invalidates the closed form
    bool threw = false;
    try {
        scm_update_closed_form(scm_b, train_grads, losses, meta_grads, alpha, beta, true);
    } catch (const ContractError&) {
        threw = true;
    }
    suite.add("momentum_contract_error", threw, threw ? "" : "expected ContractError");

    suite.seconds = timer.seconds();
    return suite;
}

// Suite 3: encoder update via the receiver feedback tuple equals direct
// end-to-end backpropagation (conj(h)/|h|^2 algebra cancels exactly).
inline SuiteResult suite_feedback(std::uint64_t seed = 13, double tol = 1e-10) {
    detail::Timer timer;
    SuiteResult suite;
    suite.name = "feedback";

    for (const ChannelKind kind :
         {ChannelKind::Awgn, ChannelKind::Rayleigh, ChannelKind::Rician}) {
        RngStream rng(seed, "verify-feedback", static_cast<std::uint64_t>(kind));
        Topology topo;
        topo.image_h = topo.image_w = 8;
        topo.conv_channels = {3};
        topo.latent_symbols = 6;
        LearnerState st = LearnerState::build(topo, rng);
        ChannelConfig ccfg;
        ccfg.kind = kind;
        ccfg.snr_db = 12.0;
        const ChannelRealization r = draw_realization(ccfg, rng, 0);

        std::vector<Tensor> batch(2, Tensor({1, 8, 8}));
        for (Tensor& t : batch)
            for (double& v : t.data) v = rng.uniform(0.0, 1.0);
        EncodeRecord rec;
        std::vector<Tensor> x = forward_encoder(st, batch, &rec);

        // receiver-side cotangents at the equalized-symbol boundary
        std::vector<Tensor> dxhat(2, Tensor({topo.latent_reals()}));
        for (Tensor& t : dxhat)
            for (double& v : t.data) v = rng.normal(0.0, 1.0);

        // path A: protocol tuple, conj(h) applied at the transmitter
        LearnerState st_a = st;
        FeedbackTuple fb;
        fb.realization = r;
        for (const Tensor& d : dxhat) fb.grad_y.push_back(equalize_backward(d, r));
        EncodeRecord rec_a;
        forward_encoder(st_a, batch, &rec_a);
        encoder_feedback(st_a, fb, rec_a, 0.01);

        // path B: monolithic chain; xhat = x + const for fixed noise, so the
        // encoder cotangent is the receiver cotangent unchanged
        LearnerState st_b = st;
        EncodeRecord rec_b;
        forward_encoder(st_b, batch, &rec_b);
        st_b.encoder().zero_grads();
        backward_encoder(st_b, rec_b, dxhat);
        for (Tensor* p : st_b.encoder().params())
            for (std::size_t k = 0; k < p->size(); ++k) p->data[k] -= 0.01 * p->grad[k];

        const auto pa = st_a.encoder().params_flat(), pb = st_b.encoder().params_flat();
        double worst = 0.0;
        for (std::size_t k = 0; k < pa.size(); ++k)
            worst = std::max(worst, std::fabs(pa[k] - pb[k]));
        const std::string label = std::string("identity_") + to_string(kind);
        suite.add(label, worst <= tol,
                  worst <= tol ? "" : detail::fail_detail("max absolute error", worst, tol));
    }

    suite.seconds = timer.seconds();
    return suite;
}

// Suite 4: grid-extension identity, least-squares optimality, and 4->40
// fidelity on nested knots.
inline SuiteResult suite_grid_extension(std::uint64_t seed = 17) {
    detail::Timer timer;
    SuiteResult suite;
    suite.name = "grid-extension";
    RngStream rng(seed, "verify-ge");

    const SplineSpec coarse{0.0, 10.0, 4, 3};
    std::vector<double> xs(257);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = 10.0 * i / (xs.size() - 1.0);

    {
        TransformMatrix tm = grid_transform(coarse, coarse, xs);
        double worst = 0.0;
        for (int i = 0; i < tm.t.rows(); ++i)
            for (int j = 0; j < tm.t.cols(); ++j)
                worst = std::max(worst, std::fabs(tm.t(i, j) - (i == j ? 1.0 : 0.0)));
        suite.add("identity_same_spec", worst <= 1e-8,
                  worst <= 1e-8 ? "" : detail::fail_detail("max deviation from I", worst, 1e-8));
    }

    std::vector<double> theta1(coarse.num_basis());
    for (double& v : theta1) v = rng.normal(0.0, 1.0);

    {
        const SplineSpec mid{0.0, 10.0, 12, 3};
        const auto theta2 = grid_extend(theta1, coarse, mid, xs);
        auto objective = [&](std::span<const double> c2) {
            double s = 0.0;
            for (double x : xs) {
                const double d = mid.eval(c2, x) - coarse.eval(theta1, x);
                s += d * d;
            }
            return s;
        };
        const double base = objective(theta2);
        bool optimal = true;
        for (int trial = 0; trial < 100 && optimal; ++trial) {
            auto perturbed = theta2;
            for (double& v : perturbed) v += rng.normal(0.0, 1e-3);
            if (objective(perturbed) < base - 1e-12) optimal = false;
        }
        suite.add("lsq_optimality_100_perturbations", optimal,
                  optimal ? "" : "a random perturbation beat the least-squares solution");
    }

    {
        const SplineSpec fine{0.0, 10.0, 40, 3};
        const auto theta2 = grid_extend(theta1, coarse, fine, xs);
        double worst = 0.0;
        for (int i = 0; i < 200; ++i) {
            const double x = 10.0 * i / 199.0;
            worst = std::max(worst, std::fabs(fine.eval(theta2, x) - coarse.eval(theta1, x)));
        }
        suite.add("fidelity_nested_4_to_40", worst <= 1e-6,
                  worst <= 1e-6 ? "" : detail::fail_detail("max probe deviation", worst, 1e-6));
    }

    suite.seconds = timer.seconds();
    return suite;
}

// Suite 5: cubic-spline approximation decay on a sin target; log-log slope of
// sup error vs grid size must fall at the smooth-target rate.
inline SuiteResult suite_theorem1() {
    detail::Timer timer;
    SuiteResult suite;
    suite.name = "theorem1";
    const std::vector<int> grids{4, 8, 16, 32, 64};
    DecayResult res =
        spline_decay_table([](double x) { return std::sin(x); }, 0.0, 10.0, 3, grids);
    const bool ok = res.loglog_slope <= -3.5;
    suite.add("sin_decay_slope", ok,
              ok ? "" : detail::fail_detail("log-log slope", res.loglog_slope, -3.5));
    bool monotone = true;
    for (std::size_t i = 1; i < res.rows.size(); ++i)
        if (res.rows[i].sup_error >= res.rows[i - 1].sup_error) monotone = false;
    suite.add("sup_error_strictly_decreasing", monotone,
              monotone ? "" : "sup error failed to decrease with grid refinement");
    suite.seconds = timer.seconds();
    return suite;
}

inline std::vector<SuiteResult> run_verify_suites(const std::string& filter = "") {
    std::vector<SuiteResult> out;
    auto want = [&](const std::string& name) { return filter.empty() || filter == name; };
    if (want("gradients")) out.push_back(suite_gradients());
    if (want("eq18")) out.push_back(suite_eq18());
    if (want("feedback")) out.push_back(suite_feedback());
    if (want("grid-extension")) out.push_back(suite_grid_extension());
    if (want("theorem1")) out.push_back(suite_theorem1());
    return out;
}

}  // namespace talsc

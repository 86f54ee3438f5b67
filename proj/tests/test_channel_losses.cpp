#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "talsc/channel.hpp"
#include "talsc/losses.hpp"
#include "talsc/rng.hpp"

using namespace talsc;

TEST_CASE("snr to noise variance conversion") {
    REQUIRE(snr_to_sigma2(0.0) == Catch::Approx(1.0));
    REQUIRE(snr_to_sigma2(10.0) == Catch::Approx(0.1));
    REQUIRE(snr_to_sigma2(8.0) == Catch::Approx(0.15849).epsilon(1e-4));
}

TEST_CASE("noiseless AWGN is the identity channel") {
    RngStream rng(1, "awgn");
    ChannelRealization r{1.0, 0.0, 0.0, 0};
    std::vector<double> x{0.3, -0.4, 1.1, 0.0};
    auto y = transmit(x, r, rng);
    REQUIRE(y == x);
    auto xhat = equalize(y, r);
    REQUIRE(xhat == x);
}

TEST_CASE("empirical AWGN noise variance matches the SNR formula") {
    RngStream rng(2, "awgn-mc");
    ChannelConfig cfg;
    cfg.kind = ChannelKind::Awgn;
    cfg.snr_db = 8.0;
    const ChannelRealization r = draw_realization(cfg, rng, 0);
    const int n = 1'000'000;  // complex symbols
    std::vector<double> x(2 * n, 0.0);
    auto y = transmit(x, r, rng);
    double var = 0.0;
    for (double v : y) var += v * v;
    var /= n;  // per complex symbol
    REQUIRE(var == Catch::Approx(std::pow(10.0, -0.8)).epsilon(0.01));
}

TEST_CASE("rayleigh fading has unit mean power") {
    RngStream rng(3, "ray");
    ChannelConfig cfg;
    cfg.kind = ChannelKind::Rayleigh;
    double p = 0.0;
    const int n = 100'000;
    for (int i = 0; i < n; ++i) {
        const ChannelRealization r = draw_realization(cfg, rng, static_cast<std::uint64_t>(i));
        p += r.h_re * r.h_re + r.h_im * r.h_im;
    }
    REQUIRE(p / n == Catch::Approx(1.0).epsilon(0.03));
}

TEST_CASE("rician fading has the line-of-sight mean and scatter variance") {
    RngStream rng(4, "rice");
    ChannelConfig cfg;
    cfg.kind = ChannelKind::Rician;
    cfg.rician_r = 8.0;
    const double mu = std::sqrt(8.0 / 9.0);  // 0.9428
    const double sigma2 = 1.0 / 9.0;
    REQUIRE(mu == Catch::Approx(0.9428).epsilon(1e-3));
    REQUIRE(std::sqrt(sigma2) == Catch::Approx(0.3333).epsilon(1e-3));
    const int n = 100'000;
    double mre = 0.0, mim = 0.0;
    std::vector<double> re(n), im(n);
    for (int i = 0; i < n; ++i) {
        const ChannelRealization r = draw_realization(cfg, rng, static_cast<std::uint64_t>(i));
        re[i] = r.h_re;
        im[i] = r.h_im;
        mre += r.h_re;
        mim += r.h_im;
    }
    mre /= n;
    mim /= n;
    REQUIRE(mre == Catch::Approx(mu).epsilon(0.03));
    REQUIRE(std::fabs(mim) < 0.01);
    double var = 0.0;
    for (int i = 0; i < n; ++i)
        var += (re[i] - mre) * (re[i] - mre) + (im[i] - mim) * (im[i] - mim);
    var /= n;
    REQUIRE(var == Catch::Approx(sigma2).epsilon(0.05));
}

TEST_CASE("equalization cancels the fading coefficient without noise") {
    RngStream rng(5, "eq");
    for (int trial = 0; trial < 20; ++trial) {
        ChannelConfig cfg;
        cfg.kind = ChannelKind::Rayleigh;
        const ChannelRealization base = draw_realization(cfg, rng, static_cast<std::uint64_t>(trial));
        ChannelRealization r{base.h_re, base.h_im, 0.0, base.id};
        std::vector<double> x{0.5, -1.2, 0.7, 0.25};
        auto xhat = equalize(transmit(x, r, rng), r);
        for (std::size_t i = 0; i < x.size(); ++i)
            REQUIRE(std::fabs(xhat[i] - x[i]) < 1e-10);
    }
}

TEST_CASE("purely imaginary h recovers x plus rotated noise") {
    RngStream rng(6, "imag");
    ChannelRealization r{0.0, 1.0, 0.25, 0};  // h = i
    std::vector<double> x{1.0, 2.0, -0.5, 0.75};
    auto y = transmit(x, r, rng);
    // recover the noise from y = i*x + n: n = y - i*x
    std::vector<double> n(y.size());
    for (std::size_t c = 0; c < y.size(); c += 2) {
        n[c] = y[c] - (-x[c + 1]);
        n[c + 1] = y[c + 1] - x[c];
    }
    auto xhat = equalize(y, r);
    // expected: x + conj(h)*n = x + (-i)*n
    for (std::size_t c = 0; c < y.size(); c += 2) {
        REQUIRE(xhat[c] == Catch::Approx(x[c] + n[c + 1]).margin(1e-12));
        REQUIRE(xhat[c + 1] == Catch::Approx(x[c + 1] - n[c]).margin(1e-12));
    }
}

TEST_CASE("deep fade raises a dedicated error") {
    ChannelRealization r{1e-13, 0.0, 0.1, 0};
    std::vector<double> y{1.0, 0.0};
    REQUIRE_THROWS_AS(equalize(y, r), DeepFadeError);
}

TEST_CASE("non-finite channel input is rejected") {
    RngStream rng(7, "nf");
    ChannelRealization r{1.0, 0.0, 0.1, 0};
    std::vector<double> x{1.0, std::nan("")};
    REQUIRE_THROWS_AS(transmit(x, r, rng), ValidationError);
}

TEST_CASE("channel cotangents implement multiplication by the conjugate") {
    ChannelRealization r{0.6, -0.8, 0.0, 0};
    Tensor dy({2});
    dy.data = {1.0, 2.0};
    Tensor dx = channel_backward(dy, r);
    // conj(h)*g with h=0.6-0.8i, g=1+2i -> (0.6+0.8i)(1+2i) = -1.0 + 2.0i
    REQUIRE(dx.data[0] == Catch::Approx(-1.0));
    REQUIRE(dx.data[1] == Catch::Approx(2.0));
    // equalize backward times channel backward composes to the identity
    Tensor round = channel_backward(equalize_backward(dy, r), r);
    REQUIRE(round.data[0] == Catch::Approx(dy.data[0]).margin(1e-12));
    REQUIRE(round.data[1] == Catch::Approx(dy.data[1]).margin(1e-12));
}

TEST_CASE("cross entropy of uniform logits is log C") {
    for (int c : {2, 5, 10}) {
        std::vector<double> logits(c, 0.7);
        REQUIRE(softmax_ce(logits, 0) == Catch::Approx(std::log(static_cast<double>(c))));
    }
}

TEST_CASE("perfect reconstruction and classification give zero combined loss") {
    Tensor a({4});
    a.data = {0.1, 0.2, 0.3, 0.4};
    REQUIRE(mse(a, a) == 0.0);
    // a hugely confident correct logit drives CE to ~0
    std::vector<double> logits{50.0, 0.0, 0.0};
    REQUIRE(softmax_ce(logits, 0) < 1e-12);
    const LossBreakdown lb = combine_losses(0.0, 0.0, 0.5, 10.0);
    REQUIRE(lb.combined == 0.0);
}

TEST_CASE("combined loss is the pinned affine combination") {
    const LossBreakdown lb = combine_losses(1.25, 0.3, 0.4, 10.0);
    REQUIRE(std::fabs(lb.combined - ((1.0 - 0.4) * 1.25 + 10.0 * 0.4 * 0.3)) < 1e-12);
    REQUIRE_THROWS_AS(combine_losses(1.0, 1.0, -0.1, 10.0), ValidationError);
    REQUIRE_THROWS_AS(combine_losses(1.0, 1.0, 1.1, 10.0), ValidationError);
}

TEST_CASE("softmax-ce gradient is p minus one-hot") {
    std::vector<double> logits{0.2, -0.1, 0.5};
    std::vector<double> dl;
    softmax_ce(logits, 1, &dl);
    const auto p = softmax(logits);
    REQUIRE(dl[0] == Catch::Approx(p[0]));
    REQUIRE(dl[1] == Catch::Approx(p[1] - 1.0));
    REQUIRE(dl[2] == Catch::Approx(p[2]));
}

TEST_CASE("default lambda equals one minus the compression rate") {
    // 2B = 32 reals over a 144-value source
    REQUIRE(1.0 - 32.0 / 144.0 == Catch::Approx(0.7778).epsilon(1e-3));
}

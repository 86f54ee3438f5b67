#include <catch2/catch_amalgamated.hpp>

#include "talsc/layers.hpp"
#include "talsc/learner.hpp"
#include "talsc/rng.hpp"

using namespace talsc;

namespace {

// central finite differences of a scalar functional of one coordinate
double fd(const std::function<double()>& f, double& x, double h = 1e-5) {
    const double x0 = x;
    x = x0 + h;
    const double fp = f();
    x = x0 - h;
    const double fm = f();
    x = x0;
    return (fp - fm) / (2.0 * h);
}

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

// weighted-sum readout gradient check over all parameters and inputs
void check_layer_gradients(Net& net, const std::vector<int>& in_shape, RngStream& rng,
                           double tol = 1e-4) {
    Tensor x(in_shape);
    for (double& v : x.data) v = rng.normal(0.0, 1.0);
    std::vector<double> w;
    {
        Tensor y0 = net.forward(x);
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
    for (Tensor* p : net.params())
        for (std::size_t k = 0; k < p->size(); ++k)
            REQUIRE(rel_err(p->grad[k], fd(value, p->data[k])) < tol);
    for (std::size_t k = 0; k < x.size(); ++k)
        REQUIRE(rel_err(dx.data[k], fd(value, x.data[k])) < tol);
}

}  // namespace

TEST_CASE("scalar linear layer gradient is the input") {
    Net net;
    Dense d(1, 1);
    net.add(d);
    auto params = net.params();
    params[0]->data[0] = 0.7;  // w
    params[1]->data[0] = 0.0;  // b
    Tensor x({1});
    x.data[0] = 3.25;
    NetCache cache;
    Tensor y = net.forward(x, cache);
    REQUIRE(y.data[0] == Catch::Approx(0.7 * 3.25));
    Tensor dy({1});
    dy.data[0] = 1.0;
    net.zero_grads();
    net.backward(dy, cache);
    REQUIRE(net.params()[0]->grad[0] == Catch::Approx(3.25));
}

TEST_CASE("layer gradients match central finite differences") {
    RngStream rng(101, "layer-fd");
    SECTION("dense") {
        Net net;
        net.add(Dense(5, 4, rng));
        check_layer_gradients(net, {5}, rng);
    }
    SECTION("conv2d") {
        Net net;
        net.add(Conv2d(2, 3, 3, 2, 1, rng));
        check_layer_gradients(net, {2, 7, 7}, rng);
    }
    SECTION("conv transpose") {
        Net net;
        net.add(ConvTranspose2d(3, 2, 3, 2, 1, 1, rng));
        check_layer_gradients(net, {3, 4, 4}, rng);
    }
    SECTION("relu and sigmoid chains") {
        Net net;
        net.add(Dense(6, 5, rng));
        net.add(ReLU());
        net.add(Dense(5, 3, rng));
        net.add(Sigmoid());
        check_layer_gradients(net, {6}, rng);
    }
    SECTION("reshape chain") {
        Net net;
        net.add(Reshape({8}));
        net.add(Dense(8, 2, rng));
        check_layer_gradients(net, {2, 2, 2}, rng);
    }
}

TEST_CASE("backward without recorded forward is a state error") {
    Net net;
    RngStream rng(3, "x");
    net.add(Dense(2, 2, rng));
    Tensor dy({2});
    NetCache empty;
    REQUIRE_THROWS_AS(net.backward(dy, empty), StateError);
}

TEST_CASE("net copies are deep") {
    RngStream rng(5, "copy");
    Net a;
    a.add(Dense(3, 3, rng));
    Net b = a;
    const double before = b.params_flat()[0];
    a.params()[0]->data[0] += 10.0;
    REQUIRE(b.params_flat()[0] == before);
}

TEST_CASE("power normalization yields unit mean symbol power") {
    RngStream rng(17, "pnorm");
    Topology topo;
    topo.image_h = topo.image_w = 8;
    topo.conv_channels = {3};
    topo.latent_symbols = 6;
    LearnerState st = LearnerState::build(topo, rng);
    std::vector<Tensor> batch(4, Tensor({1, 8, 8}));
    for (Tensor& t : batch)
        for (double& v : t.data) v = rng.uniform(0.0, 1.0);
    EncodeRecord rec;
    auto xs = forward_encoder(st, batch, &rec);
    double q = 0.0;
    for (const Tensor& x : xs)
        for (double v : x.data) q += v * v;
    const double n_sym = 4.0 * topo.latent_symbols;
    REQUIRE(q / n_sym == Catch::Approx(1.0).epsilon(1e-6));
    REQUIRE_FALSE(rec.norm.bypassed);
}

TEST_CASE("zero-energy encoder output bypasses normalization") {
    RngStream rng(19, "pnorm0");
    Topology topo;
    topo.image_h = topo.image_w = 8;
    topo.conv_channels = {3};
    topo.latent_symbols = 6;
    LearnerState st = LearnerState::build(topo, rng);
    auto flat = st.encoder().params_flat();
    std::fill(flat.begin(), flat.end(), 0.0);
    st.encoder().set_params_flat(flat);
    std::vector<Tensor> batch(2, Tensor({1, 8, 8}));
    for (Tensor& t : batch)
        for (double& v : t.data) v = rng.uniform(0.0, 1.0);
    EncodeRecord rec;
    auto xs = forward_encoder(st, batch, &rec);
    REQUIRE(rec.norm.bypassed);
    for (const Tensor& x : xs)
        for (double v : x.data) REQUIRE(v == 0.0);
}

TEST_CASE("batch-coupled normalization backward matches finite differences") {
    RngStream rng(23, "pnorm-fd");
    Topology topo;
    topo.image_h = topo.image_w = 8;
    topo.conv_channels = {3};
    topo.latent_symbols = 4;
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
    auto params = st.encoder().params();
    RngStream pick_rng(29, "pick");
    for (int c = 0; c < 40; ++c) {
        std::size_t total = 0;
        for (Tensor* p : params) total += p->size();
        std::size_t pick = pick_rng.below(total);
        for (Tensor* p : params) {
            if (pick >= p->size()) {
                pick -= p->size();
                continue;
            }
            REQUIRE(rel_err(p->grad[pick], fd(value, p->data[pick])) < 1e-4);
            break;
        }
    }
}

TEST_CASE("mirrored decoder restores the source shape") {
    RngStream rng(31, "shape");
    Topology topo;  // defaults: 12x12, conv {4,8}
    LearnerState st = LearnerState::build(topo, rng);
    Tensor img({1, 12, 12});
    for (double& v : img.data) v = rng.uniform(0.0, 1.0);
    auto xs = forward_encoder(st, {img});
    REQUIRE(xs[0].shape == std::vector<int>{topo.latent_reals()});
    Tensor shat = st.decoder().forward(xs[0]);
    REQUIRE(shat.shape == img.shape);
    Tensor logits = st.classifier().forward(shat);
    REQUIRE(logits.shape == std::vector<int>{topo.classes});
}

TEST_CASE("separable two-class data trains the classifier to full accuracy") {
    RngStream rng(37, "sep");
    Topology topo;
    topo.image_h = topo.image_w = 8;
    topo.conv_channels = {3};
    topo.classes = 2;
    topo.classifier_hidden = 8;
    LearnerState st = LearnerState::build(topo, rng);
    std::vector<Sample> train, holdout;
    for (int i = 0; i < 40; ++i) {
        Sample s;
        s.id = i;
        s.label = i % 2;
        s.image = Tensor({1, 8, 8});
        const double base = s.label ? 0.85 : 0.15;
        for (double& v : s.image.data) v = base + rng.normal(0.0, 0.02);
        (i < 30 ? train : holdout).push_back(std::move(s));
    }
    auto res = train_pragmatic_classifier(st, train, holdout, rng, 40, 0.2, 0.99);
    REQUIRE(res.reached_floor);
    REQUIRE(classifier_accuracy(st, holdout) == 1.0);
    REQUIRE(st.classifier_frozen());
    REQUIRE_THROWS_AS(st.set_classifier_params(st.classifier().params_flat()), StateError);
}

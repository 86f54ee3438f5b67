#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "talsc/errors.hpp"
#include "talsc/rng.hpp"
#include "talsc/tensor.hpp"

namespace talsc {

// Fixed layer vocabulary with exact reverse-mode gradients. Forward records
// what backward needs into an explicit cache tensor owned by the caller, so
// many independent per-sample passes can coexist over one parameter set.
class Layer {
public:
    virtual ~Layer() = default;

    // `cache` receives whatever backward needs (usually the input).
    virtual Tensor forward(const Tensor& x, Tensor& cache) const = 0;

    // Accumulates parameter gradients and returns the input cotangent.
    virtual Tensor backward(const Tensor& dy, const Tensor& cache) = 0;

    virtual std::vector<Tensor*> params() { return {}; }
    virtual std::vector<const Tensor*> params() const { return {}; }
    virtual std::unique_ptr<Layer> clone() const = 0;
    virtual const char* kind() const = 0;
};

class Dense final : public Layer {
public:
    Dense(int in, int out) : in_(in), out_(out), w_({out, in}), b_({out}) {
        w_.require_grad();
        b_.require_grad();
    }

    Dense(int in, int out, RngStream& rng) : Dense(in, out) {
        const double lim = std::sqrt(6.0 / (in + out));
        for (double& v : w_.data) v = rng.uniform(-lim, lim);
    }

    static Dense identity(int n) {
        Dense d(n, n);
        for (int i = 0; i < n; ++i) d.w_.data[static_cast<std::size_t>(i) * n + i] = 1.0;
        return d;
    }

    Tensor forward(const Tensor& x, Tensor& cache) const override {
        if (static_cast<int>(x.size()) != in_)
            throw ConfigError("Dense: input size " + std::to_string(x.size()) + " != " +
                              std::to_string(in_));
        cache = x;
        Tensor y({out_});
        for (int o = 0; o < out_; ++o) {
            double acc = b_.data[o];
            const double* wrow = &w_.data[static_cast<std::size_t>(o) * in_];
            for (int i = 0; i < in_; ++i) acc += wrow[i] * x.data[i];
            y.data[o] = acc;
        }
        return y;
    }

    Tensor backward(const Tensor& dy, const Tensor& cache) override {
        Tensor dx(cache.shape);
        for (int o = 0; o < out_; ++o) {
            const double g = dy.data[o];
            b_.grad[o] += g;
            double* wgrow = &w_.grad[static_cast<std::size_t>(o) * in_];
            const double* wrow = &w_.data[static_cast<std::size_t>(o) * in_];
            for (int i = 0; i < in_; ++i) {
                wgrow[i] += g * cache.data[i];
                dx.data[i] += g * wrow[i];
            }
        }
        return dx;
    }

    std::vector<Tensor*> params() override { return {&w_, &b_}; }
    std::vector<const Tensor*> params() const override { return {&w_, &b_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
    const char* kind() const override { return "dense"; }

    Tensor& weight() { return w_; }
    Tensor& bias() { return b_; }

private:
    int in_, out_;
    Tensor w_, b_;
};

// Strided convolution on (c,h,w) tensors.
class Conv2d final : public Layer {
public:
    Conv2d(int in_ch, int out_ch, int k, int stride, int pad, RngStream& rng)
        : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
          w_({out_ch, in_ch, k, k}), b_({out_ch}) {
        w_.require_grad();
        b_.require_grad();
        const double lim = std::sqrt(6.0 / (in_ch * k * k + out_ch * k * k));
        for (double& v : w_.data) v = rng.uniform(-lim, lim);
    }

    int out_extent(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

    Tensor forward(const Tensor& x, Tensor& cache) const override {
        if (x.shape.size() != 3 || x.shape[0] != in_ch_)
            throw ConfigError("Conv2d: expected (c,h,w) input with c=" + std::to_string(in_ch_));
        cache = x;
        const int h = x.shape[1], w = x.shape[2];
        Tensor y({out_ch_, out_extent(h), out_extent(w)});
        const int ho = y.shape[1], wo = y.shape[2];
        for (int co = 0; co < out_ch_; ++co)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = b_.data[co];
                    for (int ci = 0; ci < in_ch_; ++ci)
                        for (int ky = 0; ky < k_; ++ky) {
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += wt(co, ci, ky, kx) * x.at(ci, iy, ix);
                            }
                        }
                    y.at(co, oy, ox) = acc;
                }
        return y;
    }

    Tensor backward(const Tensor& dy, const Tensor& cache) override {
        const int h = cache.shape[1], w = cache.shape[2];
        Tensor dx(cache.shape);
        const int ho = dy.shape[1], wo = dy.shape[2];
        for (int co = 0; co < out_ch_; ++co)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const double g = dy.at(co, oy, ox);
                    b_.grad[co] += g;
                    for (int ci = 0; ci < in_ch_; ++ci)
                        for (int ky = 0; ky < k_; ++ky) {
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix < 0 || ix >= w) continue;
                                wg(co, ci, ky, kx) += g * cache.at(ci, iy, ix);
                                dx.at(ci, iy, ix) += g * wt(co, ci, ky, kx);
                            }
                        }
                }
        return dx;
    }

    std::vector<Tensor*> params() override { return {&w_, &b_}; }
    std::vector<const Tensor*> params() const override { return {&w_, &b_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }
    const char* kind() const override { return "conv2d"; }

private:
    double& wt(int co, int ci, int ky, int kx) {
        return w_.data[((static_cast<std::size_t>(co) * in_ch_ + ci) * k_ + ky) * k_ + kx];
    }
    double wt(int co, int ci, int ky, int kx) const {
        return w_.data[((static_cast<std::size_t>(co) * in_ch_ + ci) * k_ + ky) * k_ + kx];
    }
    double& wg(int co, int ci, int ky, int kx) {
        return w_.grad[((static_cast<std::size_t>(co) * in_ch_ + ci) * k_ + ky) * k_ + kx];
    }

    int in_ch_, out_ch_, k_, stride_, pad_;
    Tensor w_, b_;
};

// Transposed convolution; output extent (h-1)*stride - 2*pad + k + out_pad.
class ConvTranspose2d final : public Layer {
public:
    ConvTranspose2d(int in_ch, int out_ch, int k, int stride, int pad, int out_pad, RngStream& rng)
        : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad), out_pad_(out_pad),
          w_({in_ch, out_ch, k, k}), b_({out_ch}) {
        w_.require_grad();
        b_.require_grad();
        const double lim = std::sqrt(6.0 / (in_ch * k * k + out_ch * k * k));
        for (double& v : w_.data) v = rng.uniform(-lim, lim);
    }

    int out_extent(int in) const { return (in - 1) * stride_ - 2 * pad_ + k_ + out_pad_; }

    Tensor forward(const Tensor& x, Tensor& cache) const override {
        if (x.shape.size() != 3 || x.shape[0] != in_ch_)
            throw ConfigError("ConvTranspose2d: expected (c,h,w) input with c=" +
                              std::to_string(in_ch_));
        cache = x;
        const int h = x.shape[1], w = x.shape[2];
        Tensor y({out_ch_, out_extent(h), out_extent(w)});
        const int ho = y.shape[1], wo = y.shape[2];
        for (int co = 0; co < out_ch_; ++co)
            for (double& v : yrow(y, co)) v = b_.data[co];
        for (int ci = 0; ci < in_ch_; ++ci)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix) {
                    const double xv = x.at(ci, iy, ix);
                    for (int co = 0; co < out_ch_; ++co)
                        for (int ky = 0; ky < k_; ++ky) {
                            const int oy = iy * stride_ - pad_ + ky;
                            if (oy < 0 || oy >= ho) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int ox = ix * stride_ - pad_ + kx;
                                if (ox < 0 || ox >= wo) continue;
                                y.at(co, oy, ox) += xv * wt(ci, co, ky, kx);
                            }
                        }
                }
        return y;
    }

    Tensor backward(const Tensor& dy, const Tensor& cache) override {
        const int h = cache.shape[1], w = cache.shape[2];
        const int ho = dy.shape[1], wo = dy.shape[2];
        Tensor dx(cache.shape);
        for (int co = 0; co < out_ch_; ++co)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) b_.grad[co] += dy.at(co, oy, ox);
        for (int ci = 0; ci < in_ch_; ++ci)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix) {
                    const double xv = cache.at(ci, iy, ix);
                    double acc = 0.0;
                    for (int co = 0; co < out_ch_; ++co)
                        for (int ky = 0; ky < k_; ++ky) {
                            const int oy = iy * stride_ - pad_ + ky;
                            if (oy < 0 || oy >= ho) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int ox = ix * stride_ - pad_ + kx;
                                if (ox < 0 || ox >= wo) continue;
                                const double g = dy.at(co, oy, ox);
                                wg(ci, co, ky, kx) += xv * g;
                                acc += g * wt(ci, co, ky, kx);
                            }
                        }
                    dx.at(ci, iy, ix) = acc;
                }
        return dx;
    }

    std::vector<Tensor*> params() override { return {&w_, &b_}; }
    std::vector<const Tensor*> params() const override { return {&w_, &b_}; }
    std::unique_ptr<Layer> clone() const override {
        return std::make_unique<ConvTranspose2d>(*this);
    }
    const char* kind() const override { return "convtranspose2d"; }

private:
    static std::span<double> yrow(Tensor& y, int co) {
        const std::size_t plane = static_cast<std::size_t>(y.shape[1]) * y.shape[2];
        return {y.data.data() + co * plane, plane};
    }
    double& wt(int ci, int co, int ky, int kx) {
        return w_.data[((static_cast<std::size_t>(ci) * out_ch_ + co) * k_ + ky) * k_ + kx];
    }
    double wt(int ci, int co, int ky, int kx) const {
        return w_.data[((static_cast<std::size_t>(ci) * out_ch_ + co) * k_ + ky) * k_ + kx];
    }
    double& wg(int ci, int co, int ky, int kx) {
        return w_.grad[((static_cast<std::size_t>(ci) * out_ch_ + co) * k_ + ky) * k_ + kx];
    }

    int in_ch_, out_ch_, k_, stride_, pad_, out_pad_;
    Tensor w_, b_;
};

class ReLU final : public Layer {
public:
    Tensor forward(const Tensor& x, Tensor& cache) const override {
        cache = x;
        Tensor y = x;
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
        return y;
    }
    Tensor backward(const Tensor& dy, const Tensor& cache) override {
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (cache.data[i] <= 0.0) dx.data[i] = 0.0;
        return dx;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
    const char* kind() const override { return "relu"; }
};

class Sigmoid final : public Layer {
public:
    Tensor forward(const Tensor& x, Tensor& cache) const override {
        Tensor y = x;
        for (double& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
        cache = y;  // output is enough for the backward pass
        return y;
    }
    Tensor backward(const Tensor& dy, const Tensor& cache) override {
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) {
            const double s = cache.data[i];
            dx.data[i] *= s * (1.0 - s);
        }
        return dx;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Sigmoid>(*this); }
    const char* kind() const override { return "sigmoid"; }
};

// Shape adapter between dense and conv stages. No parameters.
class Reshape final : public Layer {
public:
    explicit Reshape(std::vector<int> target) : target_(std::move(target)) {}
    Tensor forward(const Tensor& x, Tensor& cache) const override {
        if (x.size() != Tensor::count(target_))
            throw ConfigError("Reshape: element count mismatch");
        cache = Tensor();  // only the source shape is needed
        cache.shape = x.shape;
        Tensor y = x;
        y.shape = target_;
        return y;
    }
    Tensor backward(const Tensor& dy, const Tensor& cache) override {
        Tensor dx = dy;
        dx.shape = cache.shape;
        return dx;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Reshape>(*this); }
    const char* kind() const override { return "reshape"; }

private:
    std::vector<int> target_;
};

// Recorded forward pass for one input; required by Net::backward.
struct NetCache {
    std::vector<Tensor> layer_caches;
    bool valid = false;
};

class Net {
public:
    Net() = default;
    Net(const Net& o) { *this = o; }
    Net& operator=(const Net& o) {
        layers_.clear();
        for (const auto& l : o.layers_) layers_.push_back(l->clone());
        return *this;
    }
    Net(Net&&) = default;
    Net& operator=(Net&&) = default;

    template <typename L>
    void add(L layer) {
        layers_.push_back(std::make_unique<L>(std::move(layer)));
    }
    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    Tensor forward(const Tensor& x, NetCache& cache) const {
        cache.layer_caches.assign(layers_.size(), Tensor());
        Tensor cur = x;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            cur = layers_[i]->forward(cur, cache.layer_caches[i]);
        cache.valid = true;
        return cur;
    }

    Tensor forward(const Tensor& x) const {
        NetCache scratch;
        return forward(x, scratch);
    }

    Tensor backward(const Tensor& dy, const NetCache& cache) {
        if (!cache.valid || cache.layer_caches.size() != layers_.size())
            throw StateError("Net::backward without a matching recorded forward");
        Tensor cur = dy;
        for (std::size_t i = layers_.size(); i-- > 0;)
            cur = layers_[i]->backward(cur, cache.layer_caches[i]);
        return cur;
    }

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out;
        for (auto& l : layers_)
            for (Tensor* p : l->params()) out.push_back(p);
        return out;
    }
    std::vector<const Tensor*> params() const {
        std::vector<const Tensor*> out;
        for (const auto& l : layers_)
            for (const Tensor* p : l->params()) out.push_back(p);
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const Tensor* p : params()) n += p->size();
        return n;
    }

    void zero_grads() {
        for (Tensor* p : params()) p->zero_grad();
    }

    std::vector<double> params_flat() const {
        std::vector<double> out;
        out.reserve(param_count());
        for (const Tensor* p : params()) out.insert(out.end(), p->data.begin(), p->data.end());
        return out;
    }

    std::vector<double> grads_flat() const {
        std::vector<double> out;
        out.reserve(param_count());
        for (const Tensor* p : params()) out.insert(out.end(), p->grad.begin(), p->grad.end());
        return out;
    }

    void set_params_flat(const std::vector<double>& flat) {
        std::size_t off = 0;
        for (Tensor* p : params()) {
            if (off + p->size() > flat.size()) throw ConfigError("set_params_flat: short vector");
            std::copy(flat.begin() + off, flat.begin() + off + p->size(), p->data.begin());
            off += p->size();
        }
        if (off != flat.size()) throw ConfigError("set_params_flat: size mismatch");
    }

    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace talsc

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "talsc/dataset.hpp"
#include "talsc/errors.hpp"
#include "talsc/layers.hpp"
#include "talsc/losses.hpp"
#include "talsc/rng.hpp"
#include "talsc/tensor.hpp"

namespace talsc {

// Semantic codec topology: a stride-2 conv stack into a dense projection onto
// 2B reals (B complex symbols), mirrored by the decoder. The conv stack is
// configurable (2 layers of 3x3 by default, 4 layers of 6x6 reaches the
// paper-scale shape).
struct Topology {
    int image_ch = 1, image_h = 12, image_w = 12;
    std::vector<int> conv_channels{4, 8};
    int kernel = 3;
    int latent_symbols = 16;  // B
    int classifier_hidden = 32;
    int classes = 10;

    int image_values() const { return image_ch * image_h * image_w; }
    int latent_reals() const { return 2 * latent_symbols; }
    double compression_rate() const {
        return static_cast<double>(latent_reals()) / image_values();
    }
    // lambda = 1 - compression rate
    double default_lambda() const {
        const double l = 1.0 - compression_rate();
        return l < 0.0 ? 0.0 : l;
    }

    int conv_pad() const { return kernel % 2 == 0 ? (kernel - 2) / 2 : (kernel - 1) / 2; }

    // spatial sizes after each stride-2 conv
    std::vector<std::pair<int, int>> stage_sizes() const {
        std::vector<std::pair<int, int>> sizes{{image_h, image_w}};
        for (std::size_t i = 0; i < conv_channels.size(); ++i) {
            const auto [h, w] = sizes.back();
            const int ho = (h + 2 * conv_pad() - kernel) / 2 + 1;
            const int wo = (w + 2 * conv_pad() - kernel) / 2 + 1;
            if (ho < 1 || wo < 1) throw ConfigError("Topology: image too small for conv stack");
            sizes.emplace_back(ho, wo);
        }
        return sizes;
    }
};

// How the encoder output was scaled to unit mean symbol power.
struct PowerNorm {
    double scale = 1.0;
    double sum_sq = 0.0;     // sum of squared reals over the batch
    double num_symbols = 0;  // complex symbol count over the batch
    bool bypassed = false;   // all-zero pre-normalization output
};

// Recorded batch forward through the encoder, including normalization.
struct EncodeRecord {
    std::vector<NetCache> caches;
    std::vector<Tensor> raw;  // pre-normalization outputs
    PowerNorm norm;
    bool valid = false;
};

class LearnerState {
public:
    LearnerState() = default;

    static LearnerState build(const Topology& topo, RngStream& rng) {
        LearnerState st;
        st.topo_ = topo;
        const auto sizes = topo.stage_sizes();
        const int pad = topo.conv_pad();
        // encoder: conv stack + dense projection
        int ch = topo.image_ch;
        for (std::size_t i = 0; i < topo.conv_channels.size(); ++i) {
            st.encoder_.add(Conv2d(ch, topo.conv_channels[i], topo.kernel, 2, pad, rng));
            st.encoder_.add(ReLU());
            ch = topo.conv_channels[i];
        }
        const auto [fh, fw] = sizes.back();
        const int feat = ch * fh * fw;
        st.encoder_.add(Reshape({feat}));
        st.encoder_.add(Dense(feat, topo.latent_reals(), rng));
        // decoder: dense + mirrored transposed-conv stack, linear output
        st.decoder_.add(Dense(topo.latent_reals(), feat, rng));
        st.decoder_.add(ReLU());
        st.decoder_.add(Reshape({ch, fh, fw}));
        for (std::size_t i = topo.conv_channels.size(); i-- > 0;) {
            const int out_ch = i == 0 ? topo.image_ch : topo.conv_channels[i - 1];
            const auto [ih, iw] = sizes[i + 1];
            const auto [oh, ow] = sizes[i];
            const int base = (ih - 1) * 2 - 2 * pad + topo.kernel;
            const int out_pad = oh - base;
            if (out_pad < 0 || out_pad > 1 || ow - ((iw - 1) * 2 - 2 * pad + topo.kernel) != out_pad)
                throw ConfigError("Topology: transposed conv cannot reproduce stage size");
            st.decoder_.add(ConvTranspose2d(topo.conv_channels[i], out_ch, topo.kernel, 2, pad,
                                            out_pad, rng));
            if (i != 0) st.decoder_.add(ReLU());
        }
        // pragmatic classifier: 2 dense layers on the flattened image
        st.classifier_.add(Reshape({topo.image_values()}));
        st.classifier_.add(Dense(topo.image_values(), topo.classifier_hidden, rng));
        st.classifier_.add(ReLU());
        st.classifier_.add(Dense(topo.classifier_hidden, topo.classes, rng));
        return st;
    }

    const Topology& topology() const { return topo_; }
    Net& encoder() { return encoder_; }
    const Net& encoder() const { return encoder_; }
    Net& decoder() { return decoder_; }
    const Net& decoder() const { return decoder_; }
    Net& classifier() {
        return classifier_;
    }
    const Net& classifier() const { return classifier_; }

    bool classifier_frozen() const { return frozen_; }
    void freeze_classifier() { frozen_ = true; }

    void set_classifier_params(const std::vector<double>& flat) {
        if (frozen_) throw StateError("classifier parameters are frozen");
        classifier_.set_params_flat(flat);
    }

private:
    Topology topo_;
    Net encoder_, decoder_, classifier_;
    bool frozen_ = false;
};

// Batch encoder forward with power normalization. The normalization scale is
// computed over the whole batch (one fading block = one batch), so sample
// outputs are coupled through it; the backward pass accounts for that.
inline std::vector<Tensor> forward_encoder(const LearnerState& state,
                                           const std::vector<Tensor>& batch,
                                           EncodeRecord* record = nullptr) {
    if (batch.empty()) throw ValidationError("forward_encoder: empty batch");
    EncodeRecord local;
    EncodeRecord& rec = record ? *record : local;
    rec.caches.assign(batch.size(), NetCache{});
    rec.raw.clear();
    for (std::size_t i = 0; i < batch.size(); ++i)
        rec.raw.push_back(state.encoder().forward(batch[i], rec.caches[i]));
    double sum_sq = 0.0;
    for (const Tensor& t : rec.raw)
        for (double v : t.data) sum_sq += v * v;
    const double num_symbols = batch.size() * state.topology().latent_symbols;
    PowerNorm norm;
    norm.sum_sq = sum_sq;
    norm.num_symbols = num_symbols;
    if (sum_sq == 0.0) {
        norm.bypassed = true;  // degenerate zero-energy output passes through
        norm.scale = 1.0;
    } else {
        norm.scale = std::sqrt(num_symbols / sum_sq);
    }
    rec.norm = norm;
    rec.valid = true;
    std::vector<Tensor> out = rec.raw;
    for (Tensor& t : out)
        for (double& v : t.data) v *= norm.scale;
    return out;
}

// Backprop the normalized-output cotangents through the normalization and the
// encoder stack, accumulating encoder parameter gradients.
// y_k = s * x_k with s = sqrt(N / sum x^2)  =>  dx_k = s*g_k - (s*x_k/Q) * <g, x>
inline void backward_encoder(LearnerState& state, const EncodeRecord& rec,
                             const std::vector<Tensor>& dnorm) {
    if (!rec.valid) throw StateError("backward_encoder: no recorded forward");
    if (dnorm.size() != rec.raw.size())
        throw StateError("backward_encoder: cotangent batch size mismatch");
    double dot = 0.0;
    if (!rec.norm.bypassed) {
        for (std::size_t i = 0; i < dnorm.size(); ++i)
            for (std::size_t k = 0; k < dnorm[i].size(); ++k)
                dot += dnorm[i].data[k] * rec.raw[i].data[k];
    }
    const double s = rec.norm.scale;
    for (std::size_t i = 0; i < dnorm.size(); ++i) {
        Tensor draw = dnorm[i];
        if (!rec.norm.bypassed) {
            for (std::size_t k = 0; k < draw.size(); ++k)
                draw.data[k] = s * dnorm[i].data[k] -
                               s * rec.raw[i].data[k] / rec.norm.sum_sq * dot;
        }
        state.encoder().backward(draw, rec.caches[i]);
    }
}

inline Tensor forward_decoder(const LearnerState& state, const Tensor& xhat,
                              NetCache* cache = nullptr) {
    if (static_cast<int>(xhat.size()) != state.topology().latent_reals())
        throw ConfigError("forward_decoder: latent size mismatch");
    NetCache local;
    return state.decoder().forward(xhat, cache ? *cache : local);
}

// Task loss of Eq-style combination: (1-lambda)*CE(softmax(phi(shat)), z) +
// gamma*lambda*MSE(shat, s).
inline LossBreakdown pragmatic_loss(const LearnerState& state, const Tensor& shat,
                                    const Tensor& s, const std::vector<double>& one_hot,
                                    double lambda, double gamma) {
    if (static_cast<int>(one_hot.size()) != state.topology().classes)
        throw ValidationError("pragmatic_loss: label length mismatch");
    const int cls = one_hot_index(one_hot);
    Tensor logits = state.classifier().forward(shat);
    const double ce = softmax_ce(logits.data, cls);
    const double m = mse(shat, s);
    return combine_losses(ce, m, lambda, gamma);
}

struct ClassifierTrainResult {
    double train_accuracy = 0.0;
    double holdout_accuracy = 0.0;
    bool reached_floor = false;
    int epochs_run = 0;
};

inline double classifier_accuracy(const LearnerState& state, const std::vector<Sample>& samples) {
    if (samples.empty()) return 0.0;
    int hits = 0;
    for (const auto& s : samples) {
        Tensor logits = state.classifier().forward(s.image);
        if (argmax(logits.data) == s.label) ++hits;
    }
    return static_cast<double>(hits) / samples.size();
}

// Pre-trains the pragmatic classifier on clean data with plain SGD and
// freezes it once the holdout accuracy floor is met.
inline ClassifierTrainResult train_pragmatic_classifier(
    LearnerState& state, const std::vector<Sample>& train, const std::vector<Sample>& holdout,
    RngStream& rng, int max_epochs = 60, double lr = 0.2, double floor = 0.9) {
    if (train.empty()) throw ValidationError("train_pragmatic_classifier: empty training split");
    if (state.classifier_frozen()) throw StateError("classifier already frozen");
    Net& net = state.classifier();
    ClassifierTrainResult res;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.gen());
        for (std::size_t i : order) {
            NetCache cache;
            Tensor logits = net.forward(train[i].image, cache);
            std::vector<double> dlogits;
            softmax_ce(logits.data, train[i].label, &dlogits);
            Tensor dl({static_cast<int>(dlogits.size())});
            dl.data = dlogits;
            net.zero_grads();
            net.backward(dl, cache);
            for (Tensor* p : net.params())
                for (std::size_t k = 0; k < p->size(); ++k) p->data[k] -= lr * p->grad[k];
        }
        res.epochs_run = epoch + 1;
        const auto& eval_set = holdout.empty() ? train : holdout;
        res.holdout_accuracy = classifier_accuracy(state, eval_set);
        if (res.holdout_accuracy >= floor) {
            res.reached_floor = true;
            break;
        }
    }
    res.train_accuracy = classifier_accuracy(state, train);
    state.freeze_classifier();
    return res;
}

}  // namespace talsc

#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "talsc/channel.hpp"
#include "talsc/errors.hpp"
#include "talsc/kb.hpp"
#include "talsc/learner.hpp"
#include "talsc/losses.hpp"
#include "talsc/scm.hpp"

namespace talsc {

enum class InnerScope { DecoderOnly, FullLearner };

struct TrainConfig {
    double alpha = 0.01;   // learner step size
    double beta = 1e-3;    // SCM step size
    int batch_n = 64;      // |M_t|
    int meta_m = 32;       // |B_t|
    double lambda = 0.5;
    double gamma = 10.0;
    InnerScope inner_scope = InnerScope::DecoderOnly;
    double momentum = 0.0;  // 0 = vanilla SGD (required by the closed-form oracle)
};

struct StepRecord {
    int t = 0;
    std::vector<double> losses;       // per sampled KB item
    std::vector<double> v;            // significance before the SCM update
    std::vector<double> v_prime;      // recalculated significance
    double meta_loss = 0.0;
    double grad_norm_encoder = 0.0;
    double grad_norm_decoder = 0.0;
    double grad_norm_scm = 0.0;
    std::uint64_t channel_id = 0;
    bool aborted = false;
    std::string note;
};

// Receiver-to-transmitter feedback for the encoder update. The paper's tuple
// is (grad_y, y); h rides along because the transmitter needs the CSI to
// chain through the channel and the paper leaves its provenance open.
struct FeedbackTuple {
    std::vector<Tensor> grad_y;  // per sample, already scaled by v'/n
    std::vector<Tensor> y;
    ChannelRealization realization;
};

// One sample's receiver-side pass: losses at the current decoder, per-sample
// decoder gradient, and the cotangent at the equalized-symbol boundary.
struct SamplePass {
    LossBreakdown loss;
    std::vector<double> decoder_grad;  // flattened d loss / d omega2
    Tensor dxhat;                      // d loss / d xhat
};

// Forward + backward through decoder and frozen classifier for one sample.
inline SamplePass decoder_sample_pass(LearnerState& state, Net& decoder, const Tensor& xhat,
                                      const Sample& src, double lambda, double gamma,
                                      bool want_grads = true) {
    SamplePass out;
    NetCache dec_cache;
    Tensor shat = decoder.forward(xhat, dec_cache);
    NetCache cls_cache;
    Tensor logits = state.classifier().forward(shat, cls_cache);

    std::vector<double> dlogits;
    const double ce = softmax_ce(logits.data, src.label, want_grads ? &dlogits : nullptr);
    Tensor dmse;
    const double m = mse(shat, src.image, want_grads ? &dmse : nullptr);
    out.loss = combine_losses(ce, m, lambda, gamma);
    if (!want_grads) return out;

    Tensor dl({static_cast<int>(dlogits.size())});
    for (std::size_t i = 0; i < dlogits.size(); ++i) dl.data[i] = (1.0 - lambda) * dlogits[i];
    state.classifier().zero_grads();  // frozen; gradients only pass through
    Tensor dshat = state.classifier().backward(dl, cls_cache);
    for (std::size_t i = 0; i < dshat.size(); ++i) dshat.data[i] += gamma * lambda * dmse.data[i];

    decoder.zero_grads();
    out.dxhat = decoder.backward(dshat, dec_cache);
    out.decoder_grad = decoder.grads_flat();
    return out;
}

// Transmit one encoded batch and equalize at the receiver.
struct TransmittedBatch {
    std::vector<Tensor> x;      // normalized channel inputs
    std::vector<Tensor> y;      // channel outputs
    std::vector<Tensor> xhat;   // equalized symbols
    EncodeRecord enc;
    ChannelRealization realization;
};

inline TransmittedBatch transmit_batch(LearnerState& state, const std::vector<Tensor>& images,
                                       const ChannelRealization& realization,
                                       RngStream& noise_rng) {
    TransmittedBatch tb;
    tb.realization = realization;
    tb.x = forward_encoder(state, images, &tb.enc);
    for (const Tensor& x : tb.x) {
        Tensor y({static_cast<int>(x.size())});
        y.data = transmit(x.data, realization, noise_rng);
        Tensor xh = y;
        xh.data = equalize(y.data, realization);
        tb.y.push_back(std::move(y));
        tb.xhat.push_back(std::move(xh));
    }
    return tb;
}

// Eq-style temporary update: omega2* = omega2 - (alpha/n) sum v_i * g_i.
inline std::vector<double> temp_update_params(std::span<const double> params,
                                              std::span<const std::vector<double>> grads,
                                              std::span<const double> v, double alpha) {
    std::vector<double> out(params.begin(), params.end());
    const double scale = alpha / static_cast<double>(grads.size());
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t k = 0; k < out.size(); ++k) out[k] -= scale * v[i] * grads[i][k];
    return out;
}

// Closed-form SCM update (gradient-inner-product form). Serves as the oracle
// for the unrolled path; valid only under vanilla SGD inner updates.
//   Theta += (alpha*beta/n) * sum_j (1/m sum_i G_ij) * dV(L_j)/dTheta
//   G_ij = <g_meta_i at omega*, g_train_j at omega>
inline std::vector<double> scm_update_closed_form(
    Scm& scm, std::span<const std::vector<double>> train_grads,
    std::span<const double> train_losses, std::span<const std::vector<double>> meta_grads,
    double alpha, double beta, bool momentum_enabled = false) {
    if (momentum_enabled)
        throw ContractError("closed-form SCM update requires a vanilla-SGD inner update");
    const std::size_t n = train_grads.size(), m = meta_grads.size();
    if (n == 0 || m == 0) throw ValidationError("scm_update_closed_form: empty batch");
    std::vector<double> delta(scm.param_count(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double coeff = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t k = 0; k < train_grads[j].size(); ++k)
                dot += meta_grads[i][k] * train_grads[j][k];
            coeff += dot;
        }
        coeff /= static_cast<double>(m);
        const auto g = scm.eval_with_grad(train_losses[j]);
        const double s = alpha * beta / static_cast<double>(n) * coeff;
        for (std::size_t k = 0; k < delta.size(); ++k) delta[k] += s * g.dv_dtheta[k];
    }
    auto theta = scm.params_flat();
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += delta[k];
    scm.set_params_flat(theta);
    return delta;
}

// Applies the feedback tuple at the transmitter: the cotangent at the channel
// input is conj(h) * grad_y, then flows through normalization and encoder.
inline void encoder_feedback(LearnerState& state, const FeedbackTuple& fb,
                             const EncodeRecord& enc, double alpha, double momentum = 0.0,
                             std::vector<double>* velocity = nullptr) {
    if (!enc.valid) throw StateError("encoder_feedback: stale forward recording");
    std::vector<Tensor> dx;
    dx.reserve(fb.grad_y.size());
    for (const Tensor& gy : fb.grad_y) dx.push_back(channel_backward(gy, fb.realization));
    state.encoder().zero_grads();
    backward_encoder(state, enc, dx);
    auto params = state.encoder().params();
    if (momentum > 0.0) {
        if (!velocity) throw StateError("encoder_feedback: momentum requires a velocity buffer");
        if (velocity->empty()) velocity->assign(state.encoder().param_count(), 0.0);
        std::size_t off = 0;
        for (Tensor* p : params)
            for (std::size_t k = 0; k < p->size(); ++k, ++off) {
                (*velocity)[off] = momentum * (*velocity)[off] + p->grad[k];
                p->data[k] -= alpha * (*velocity)[off];
            }
    } else {
        for (Tensor* p : params)
            for (std::size_t k = 0; k < p->size(); ++k) p->data[k] -= alpha * p->grad[k];
    }
}

// The bi-level training loop. Owns the learner, the SCM, optional momentum
// state, and the observed-loss buffer that feeds grid extension.
class Trainer {
public:
    Trainer(LearnerState learner, Scm scm, TrainConfig cfg, ChannelConfig channel,
            RngStream batch_rng, RngStream channel_rng)
        : learner_(std::move(learner)), scm_(std::move(scm)), cfg_(cfg), channel_(channel),
          batch_rng_(std::move(batch_rng)), channel_rng_(std::move(channel_rng)) {}

    LearnerState& learner() { return learner_; }
    const LearnerState& learner() const { return learner_; }
    Scm& scm() { return scm_; }
    const Scm& scm() const { return scm_; }
    const TrainConfig& config() const { return cfg_; }
    int steps_done() const { return step_count_; }

    // Last observed task losses, the operating distribution for grid
    // extension (uniform fallback happens in extend_grid_now).
    const std::deque<double>& loss_buffer() const { return loss_buffer_; }

    void extend_grid_now(const SplineSpec& target, int uniform_fallback_samples = 512) {
        std::vector<double> xs(loss_buffer_.begin(), loss_buffer_.end());
        const int need = target.num_basis();
        const SplineSpec& src = scm_.spline_spec();
        auto uniform = [&](std::vector<double>& out) {
            out.resize(uniform_fallback_samples);
            for (int i = 0; i < uniform_fallback_samples; ++i)
                out[i] = src.a + (src.b - src.a) * i / (uniform_fallback_samples - 1.0);
        };
        if (static_cast<int>(xs.size()) < std::max(need, 32)) uniform(xs);
        try {
            scm_.extend_grid(target, xs);
        } catch (const SolverError&) {
            // Observed losses too concentrated to span the target basis;
            // redo the fit on uniform domain coverage instead.
            uniform(xs);
            scm_.extend_grid(target, xs);
        }
    }

    // One full Algorithm-1 step over explicit index sets (callers that need
    // reproducible batches pass them in; step() samples them).
    StepRecord step_with_batches(KnowledgeBase& kb, const MetaSet& meta,
                                 const std::vector<std::size_t>& m_t,
                                 const std::vector<std::size_t>& b_t) {
        StepRecord rec;
        rec.t = step_count_;
        const std::size_t n = m_t.size(), m = b_t.size();
        if (n == 0) throw ValidationError("step: empty KB batch");
        const bool use_scm = scm_.backend() != SefBackend::ConstantOne;
        if (use_scm && m == 0) throw ValidationError("step: empty meta batch");

        // Stage 0: transmit the KB batch through one fading block.
        const ChannelRealization realization =
            draw_realization(channel_, channel_rng_, static_cast<std::uint64_t>(step_count_));
        rec.channel_id = realization.id;
        std::vector<Tensor> images;
        images.reserve(n);
        for (std::size_t idx : m_t) images.push_back(kb.entries[idx].sample.image);
        TransmittedBatch tb;
        try {
            tb = transmit_batch(learner_, images, realization, channel_rng_);
        } catch (const DeepFadeError& e) {
            rec.aborted = true;
            rec.note = e.what();
            ++step_count_;
            return rec;
        }

        // Stage 1: per-sample losses and gradients at the current learner.
        std::vector<SamplePass> passes(n);
        std::vector<Scm::Grad> sef(n);
        bool finite = true;
        for (std::size_t j = 0; j < n; ++j) {
            passes[j] = decoder_sample_pass(learner_, learner_.decoder(), tb.xhat[j],
                                            kb.entries[m_t[j]].sample, cfg_.lambda, cfg_.gamma);
            if (!std::isfinite(passes[j].loss.combined)) finite = false;
        }
        if (!finite) {
            rec.aborted = true;
            rec.note = "non-finite task loss";
            ++step_count_;
            return rec;
        }
        for (std::size_t j = 0; j < n; ++j) {
            rec.losses.push_back(passes[j].loss.combined);
            loss_buffer_.push_back(passes[j].loss.combined);
            if (loss_buffer_.size() > kLossBufferCap) loss_buffer_.pop_front();
            sef[j] = use_scm ? scm_.eval_with_grad(passes[j].loss.combined) : Scm::Grad{1.0, 0.0, {}};
            rec.v.push_back(sef[j].v);
        }

        std::vector<std::vector<double>> train_grads(n);
        for (std::size_t j = 0; j < n; ++j) train_grads[j] = std::move(passes[j].decoder_grad);
        const std::vector<double> omega2 = learner_.decoder().params_flat();

        if (use_scm) {
            // Stage 2: temporary inner update omega*(Theta^t). Decoder-only by
            // default; full scope also steps the encoder with per-sample
            // feedback-path gradients.
            std::vector<double> v_now(n);
            for (std::size_t j = 0; j < n; ++j) v_now[j] = sef[j].v;
            Net temp_decoder = learner_.decoder();
            temp_decoder.set_params_flat(
                temp_update_params(omega2, train_grads, v_now, cfg_.alpha));

            const bool full_scope = cfg_.inner_scope == InnerScope::FullLearner;
            std::vector<std::vector<double>> enc_grads;
            LearnerState temp_state;
            if (full_scope) {
                enc_grads.resize(n);
                for (std::size_t j = 0; j < n; ++j) {
                    std::vector<Tensor> dnorm;
                    dnorm.reserve(n);
                    for (std::size_t i = 0; i < n; ++i)
                        dnorm.emplace_back(Tensor({static_cast<int>(tb.x[i].size())}));
                    dnorm[j] = channel_backward(
                        equalize_backward(passes[j].dxhat, realization), realization);
                    learner_.encoder().zero_grads();
                    backward_encoder(learner_, tb.enc, dnorm);
                    enc_grads[j] = learner_.encoder().grads_flat();
                }
                learner_.encoder().zero_grads();
                temp_state = learner_;
                temp_state.encoder().set_params_flat(temp_update_params(
                    learner_.encoder().params_flat(), enc_grads, v_now, cfg_.alpha));
            }

            // Stage 3: meta-loss through the updated learner, SCM update with
            // the gradient flowing through the inner step.
            std::vector<Tensor> meta_images;
            for (std::size_t idx : b_t) meta_images.push_back(meta.samples[idx].image);
            TransmittedBatch mb = transmit_batch(full_scope ? temp_state : learner_,
                                                 meta_images, realization, channel_rng_);
            std::vector<double> dmeta_dw(omega2.size(), 0.0);
            std::vector<Tensor> dnorm_meta;
            double meta_loss = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                SamplePass mp = decoder_sample_pass(learner_, temp_decoder, mb.xhat[i],
                                                   meta.samples[b_t[i]], cfg_.lambda, cfg_.gamma);
                meta_loss += mp.loss.combined;
                for (std::size_t k = 0; k < dmeta_dw.size(); ++k)
                    dmeta_dw[k] += mp.decoder_grad[k] / static_cast<double>(m);
                if (full_scope) {
                    Tensor dn =
                        channel_backward(equalize_backward(mp.dxhat, realization), realization);
                    for (double& g : dn.data) g *= 1.0 / static_cast<double>(m);
                    dnorm_meta.push_back(std::move(dn));
                }
            }
            rec.meta_loss = meta_loss / static_cast<double>(m);
            std::vector<double> dmeta_denc;
            if (full_scope) {
                temp_state.encoder().zero_grads();
                backward_encoder(temp_state, mb.enc, dnorm_meta);
                dmeta_denc = temp_state.encoder().grads_flat();
                temp_state.encoder().zero_grads();
            }

            // d meta / d v_j = -(alpha/n) <g_j, d meta / d omega*>
            std::vector<double> dtheta(scm_.param_count(), 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                double dot = 0.0;
                for (std::size_t k = 0; k < omega2.size(); ++k)
                    dot += train_grads[j][k] * dmeta_dw[k];
                if (full_scope)
                    for (std::size_t k = 0; k < dmeta_denc.size(); ++k)
                        dot += enc_grads[j][k] * dmeta_denc[k];
                const double dv = -cfg_.alpha / static_cast<double>(n) * dot;
                for (std::size_t k = 0; k < dtheta.size(); ++k)
                    dtheta[k] += dv * sef[j].dv_dtheta[k];
            }
            double gnorm = 0.0;
            for (double d : dtheta) gnorm += d * d;
            rec.grad_norm_scm = std::sqrt(gnorm);
            scm_.apply_delta(dtheta, -cfg_.beta);
        } else {
            // Baseline: report the unweighted meta-loss at the current learner.
            if (m > 0) {
                std::vector<Tensor> meta_images;
                for (std::size_t idx : b_t) meta_images.push_back(meta.samples[idx].image);
                TransmittedBatch mb =
                    transmit_batch(learner_, meta_images, realization, channel_rng_);
                double meta_loss = 0.0;
                for (std::size_t i = 0; i < m; ++i)
                    meta_loss += decoder_sample_pass(learner_, learner_.decoder(), mb.xhat[i],
                                                     meta.samples[b_t[i]], cfg_.lambda,
                                                     cfg_.gamma, false)
                                     .loss.combined;
                rec.meta_loss = meta_loss / static_cast<double>(m);
            }
        }

        // Stage 4: recalculate significance with Theta^{t+1}; final decoder
        // update reuses the stage-1 losses and gradients.
        std::vector<double> v_prime(n);
        for (std::size_t j = 0; j < n; ++j) {
            v_prime[j] = use_scm ? scm_.eval(rec.losses[j]) : 1.0;
            rec.v_prime.push_back(v_prime[j]);
            kb.entries[m_t[j]].significance = v_prime[j];
        }
        std::vector<double> dec_grad(omega2.size(), 0.0);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < dec_grad.size(); ++k)
                dec_grad[k] += v_prime[j] / static_cast<double>(n) * train_grads[j][k];
        apply_decoder_update(dec_grad);
        double dn = 0.0;
        for (double d : dec_grad) dn += d * d;
        rec.grad_norm_decoder = std::sqrt(dn);

        // Encoder feedback: grad_y restricted to sample i is (v'_i/n) d L_i/d y_i.
        FeedbackTuple fb;
        fb.realization = realization;
        fb.y = tb.y;
        for (std::size_t j = 0; j < n; ++j) {
            Tensor gy = equalize_backward(passes[j].dxhat, realization);
            for (double& g : gy.data) g *= v_prime[j] / static_cast<double>(n);
            fb.grad_y.push_back(std::move(gy));
        }
        encoder_feedback(learner_, fb, tb.enc, cfg_.alpha, cfg_.momentum, &enc_velocity_);
        double en = 0.0;
        for (const Tensor* p : learner_.encoder().params())
            for (double g : p->grad) en += g * g;
        rec.grad_norm_encoder = std::sqrt(en);

        ++step_count_;
        return rec;
    }

    StepRecord step(KnowledgeBase& kb, const MetaSet& meta) {
        if (static_cast<std::size_t>(cfg_.batch_n) > kb.size())
            throw ValidationError("step: batch size exceeds KB size");
        const auto m_t = sample_batch(kb.size(), cfg_.batch_n, batch_rng_);
        std::vector<std::size_t> b_t;
        if (scm_.backend() != SefBackend::ConstantOne || !meta.samples.empty()) {
            const std::size_t m = std::min<std::size_t>(cfg_.meta_m, meta.samples.size());
            if (m > 0) b_t = sample_batch(meta.samples.size(), m, batch_rng_);
        }
        return step_with_batches(kb, meta, m_t, b_t);
    }

private:
    void apply_decoder_update(const std::vector<double>& grad) {
        auto params = learner_.decoder().params_flat();
        if (cfg_.momentum > 0.0) {
            if (dec_velocity_.empty()) dec_velocity_.assign(grad.size(), 0.0);
            for (std::size_t k = 0; k < params.size(); ++k) {
                dec_velocity_[k] = cfg_.momentum * dec_velocity_[k] + grad[k];
                params[k] -= cfg_.alpha * dec_velocity_[k];
            }
        } else {
            for (std::size_t k = 0; k < params.size(); ++k) params[k] -= cfg_.alpha * grad[k];
        }
        learner_.decoder().set_params_flat(params);
    }

    static constexpr std::size_t kLossBufferCap = 4096;

    LearnerState learner_;
    Scm scm_;
    TrainConfig cfg_;
    ChannelConfig channel_;
    RngStream batch_rng_, channel_rng_;
    std::deque<double> loss_buffer_;
    std::vector<double> dec_velocity_, enc_velocity_;
    int step_count_ = 0;
};

}  // namespace talsc

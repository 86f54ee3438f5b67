#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "talsc/checkpoint.hpp"
#include "talsc/config.hpp"
#include "talsc/dataset.hpp"
#include "talsc/errors.hpp"
#include "talsc/kb.hpp"
#include "talsc/learner.hpp"
#include "talsc/metrics.hpp"
#include "talsc/scm.hpp"
#include "talsc/trainer.hpp"

namespace talsc {

// Fixed shortest-roundtrip float formatting so result files are byte-stable
// across runs of the same build.
inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

struct EvalResult {
    int step = 0;
    double sra = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> f1;
    double ms_ssim_mean = 0.0;
    double ms_ssim_minority = 0.0;
    double meta_loss = 0.0;
};

struct ExperimentResult {
    std::vector<EvalResult> evals;
    ClassifierTrainResult phi;
    double final_spearman = 0.0;        // rank corr of (loss, v) over the KB
    std::vector<double> meta_loss_history;  // one entry per non-aborted step
    std::vector<double> final_losses;   // per KB entry, order matches KB
    std::vector<double> final_v;
    std::filesystem::path outdir;

    const EvalResult& final_eval() const {
        if (evals.empty()) throw StateError("ExperimentResult: no evaluations recorded");
        return evals.back();
    }
};

// The shared, bias-injected world both comparison modes train against.
struct ExperimentWorld {
    KnowledgeBase kb;
    MetaSet meta;
    std::vector<Sample> eval_set;
    std::vector<Sample> phi_train, phi_holdout;
    int minority_class = 0;  // class with the fewest KB entries
};

inline Topology topology_from_config(const ExperimentConfig& cfg) {
    Topology t;
    t.image_ch = cfg.data.image_ch;
    t.image_h = cfg.data.image_h;
    t.image_w = cfg.data.image_w;
    t.conv_channels = cfg.learner.conv_channels;
    t.kernel = cfg.learner.kernel;
    t.latent_symbols = cfg.learner.latent_symbols;
    t.classifier_hidden = cfg.learner.classifier_hidden;
    t.classes = cfg.data.classes;
    return t;
}

inline ExperimentWorld build_world(const ExperimentConfig& cfg) {
    if (cfg.data.image_h != cfg.data.image_w)
        throw ConfigError("toy data generation requires square images");
    ExperimentWorld w;
    RngStream data_rng(cfg.seed, "data");
    Dataset all = make_toy_images(cfg.data.classes,
                                  cfg.data.per_class + cfg.data.eval_per_class + cfg.meta.per_class,
                                  cfg.data.image_h, data_rng);

    // carve the held-out evaluation split first, then the metadata split
    RngStream split_rng(cfg.seed, "split");
    auto [eval_meta, rest0] = split_meta(all, cfg.data.eval_per_class, split_rng);
    w.eval_set = std::move(eval_meta.samples);
    auto [meta, clean] = split_meta(rest0, cfg.meta.per_class, split_rng);
    w.meta = std::move(meta);

    RngStream kb_rng(cfg.seed, "kb");
    if (cfg.bias.kind == "flip") {
        w.kb = apply_flip(clean, FlipSpec{cfg.bias.fnr, cfg.data.classes}, kb_rng);
    } else if (cfg.bias.kind == "imbalance") {
        w.kb = apply_imbalance(
            clean, ImbalanceSpec{cfg.bias.factor, cfg.data.per_class, cfg.data.classes}, kb_rng);
    } else {
        w.kb = kb_from_clean(clean);
    }

    std::vector<int> counts(cfg.data.classes, 0);
    for (const auto& e : w.kb.entries) counts[e.sample.label]++;
    w.minority_class = 0;
    for (int c = 1; c < cfg.data.classes; ++c)
        if (counts[c] < counts[w.minority_class]) w.minority_class = c;

    // the pragmatic classifier trains on clean source data only
    w.phi_train = clean.samples;
    w.phi_holdout = w.eval_set;
    return w;
}

inline Scm build_scm(const ExperimentConfig& cfg, RunMode mode, RngStream& rng) {
    if (mode == RunMode::Baseline || cfg.scm.kind == ScmKind::None) return Scm::constant_one();
    if (cfg.scm.kind == ScmKind::Kan) return Scm::make_kan(cfg.scm.kan_shape, cfg.scm_spline(), rng);
    return Scm::make_mlp(cfg.scm.hidden, rng);
}

inline EvalResult evaluate(int step, LearnerState& learner, Scm& scm,
                           const ExperimentWorld& w, const ExperimentConfig& cfg) {
    EvalResult ev;
    ev.step = step;
    RngStream eval_rng(cfg.seed, "eval", static_cast<std::uint64_t>(step));
    const ChannelRealization r = draw_realization(cfg.channel, eval_rng, 0);

    std::vector<Tensor> images;
    for (const Sample& s : w.eval_set) images.push_back(s.image);
    TransmittedBatch tb = transmit_batch(learner, images, r, eval_rng);

    std::vector<int> pred, truth;
    double ssim_sum = 0.0, ssim_min_sum = 0.0;
    int minority_n = 0;
    for (std::size_t i = 0; i < w.eval_set.size(); ++i) {
        Tensor shat = learner.decoder().forward(tb.xhat[i]);
        Tensor logits = learner.classifier().forward(shat);
        pred.push_back(argmax(logits.data));
        truth.push_back(w.eval_set[i].label);
        const double ss = ms_ssim(shat, w.eval_set[i].image);
        ssim_sum += ss;
        if (w.eval_set[i].label == w.minority_class) {
            ssim_min_sum += ss;
            ++minority_n;
        }
    }
    const ConfusionMatrix cm = confusion(pred, truth, cfg.data.classes);
    ev.sra = cm.trace_ratio();
    ev.f1 = f1_per_class(cm);
    ev.macro_f1 = macro_f1(cm);
    ev.ms_ssim_mean = ssim_sum / static_cast<double>(w.eval_set.size());
    ev.ms_ssim_minority = minority_n ? ssim_min_sum / minority_n : 0.0;
    (void)scm;
    return ev;
}

inline void write_sef_probe_csv(const Scm& scm, const std::filesystem::path& path,
                                double lo, double hi, int probes = 200) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open " + path.string());
    f << "loss,v\n";
    for (int i = 0; i < probes; ++i) {
        const double x = lo + (hi - lo) * i / (probes - 1.0);
        f << fmt_g(x) << "," << fmt_g(scm.eval(x)) << "\n";
    }
}

inline void write_metrics_csv(const std::vector<EvalResult>& evals, int classes,
                              const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open " + path.string());
    f << "step,sra,macro_f1";
    for (int c = 0; c < classes; ++c) f << ",f1_class_" << c;
    f << ",ms_ssim_mean,ms_ssim_minority,meta_loss\n";
    for (const EvalResult& e : evals) {
        f << e.step << "," << fmt_g(e.sra) << "," << fmt_g(e.macro_f1);
        for (double v : e.f1) f << "," << fmt_g(v);
        f << "," << fmt_g(e.ms_ssim_mean) << "," << fmt_g(e.ms_ssim_minority) << ","
          << fmt_g(e.meta_loss) << "\n";
    }
}

// Per-KB-entry loss and significance under the current model: the material
// for rank-correlation diagnostics and the final snapshot.
inline void final_kb_eval(LearnerState& learner, Scm& scm, KnowledgeBase& kb,
                          const ExperimentConfig& cfg, std::vector<double>& losses,
                          std::vector<double>& v_out) {
    RngStream eval_rng(cfg.seed, "finaleval");
    const ChannelRealization r = draw_realization(cfg.channel, eval_rng, 0);
    std::vector<Tensor> images;
    for (const auto& e : kb.entries) images.push_back(e.sample.image);
    TransmittedBatch tb = transmit_batch(learner, images, r, eval_rng);
    losses.clear();
    v_out.clear();
    for (std::size_t i = 0; i < kb.entries.size(); ++i) {
        SamplePass p = decoder_sample_pass(learner, learner.decoder(), tb.xhat[i],
                                           kb.entries[i].sample, cfg.train.lambda,
                                           cfg.train.gamma, false);
        losses.push_back(p.loss.combined);
        v_out.push_back(scm.backend() == SefBackend::ConstantOne ? 1.0
                                                                 : scm.eval(p.loss.combined));
        kb.entries[i].significance = v_out.back();
    }
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, RunMode mode,
                                       const std::filesystem::path& outdir,
                                       const ExperimentWorld* shared_world = nullptr) {
    namespace fs = std::filesystem;
    if (mode == RunMode::Both) throw ConfigError("run_experiment: resolve mode before calling");
    fs::create_directories(outdir);
    fs::create_directories(outdir / "checkpoints");

    ExperimentWorld local_world;
    const ExperimentWorld* wp = shared_world;
    if (!wp) {
        local_world = build_world(cfg);
        wp = &local_world;
    }
    ExperimentWorld w = *wp;  // KB significance evolves per run

    RngStream init_rng(cfg.seed, "init");
    LearnerState learner = LearnerState::build(topology_from_config(cfg), init_rng);
    RngStream phi_rng(cfg.seed, "phi");
    ClassifierTrainResult phi = train_pragmatic_classifier(
        learner, w.phi_train, w.phi_holdout, phi_rng, cfg.phi.epochs, cfg.phi.lr,
        cfg.phi.acc_floor);

    RngStream scm_rng(cfg.seed, "scm");
    Scm scm = build_scm(cfg, mode, scm_rng);
    Trainer trainer(std::move(learner), std::move(scm), cfg.train, cfg.channel,
                    RngStream(cfg.seed, "batch"), RngStream(cfg.seed, "channel"));

    ExperimentResult result;
    result.outdir = outdir;
    result.phi = phi;

    std::ofstream jsonl(outdir / "step_records.jsonl");
    if (!jsonl) throw ValidationError("cannot open step_records.jsonl");
    const bool kan_extend = mode != RunMode::Baseline && cfg.scm.kind == ScmKind::Kan &&
                            cfg.scm.extend_grid > 0 && cfg.scm.extend_step >= 0;

    EvalResult ev = evaluate(0, trainer.learner(), trainer.scm(), w, cfg);
    result.evals.push_back(ev);
    write_sef_probe_csv(trainer.scm(), outdir / "sef_epoch_0.csv", cfg.scm.domain_a,
                        cfg.scm.domain_b);

    for (int t = 0; t < cfg.steps; ++t) {
        if (kan_extend && t == cfg.scm.extend_step) {
            SplineSpec target{cfg.scm.domain_a, cfg.scm.domain_b, cfg.scm.extend_grid,
                              cfg.scm.order};
            trainer.extend_grid_now(target);
        }
        StepRecord rec = trainer.step(w.kb, w.meta);
        if (!rec.aborted) result.meta_loss_history.push_back(rec.meta_loss);
        nlohmann::json j{{"t", rec.t},
                         {"meta_loss", rec.meta_loss},
                         {"grad_norm_encoder", rec.grad_norm_encoder},
                         {"grad_norm_decoder", rec.grad_norm_decoder},
                         {"grad_norm_scm", rec.grad_norm_scm},
                         {"channel_id", rec.channel_id},
                         {"aborted", rec.aborted}};
        if (!rec.losses.empty()) {
            double mean = 0.0;
            for (double l : rec.losses) mean += l;
            j["mean_loss"] = mean / static_cast<double>(rec.losses.size());
        }
        if (!rec.note.empty()) j["note"] = rec.note;
        jsonl << j.dump() << "\n";

        if ((t + 1) % cfg.eval_every == 0 || t + 1 == cfg.steps) {
            EvalResult e = evaluate(t + 1, trainer.learner(), trainer.scm(), w, cfg);
            e.meta_loss = rec.meta_loss;
            result.evals.push_back(e);
            write_sef_probe_csv(trainer.scm(),
                                outdir / ("sef_epoch_" + std::to_string(t + 1) + ".csv"),
                                cfg.scm.domain_a, cfg.scm.domain_b);
        }
    }

    final_kb_eval(trainer.learner(), trainer.scm(), w.kb, cfg, result.final_losses,
                  result.final_v);
    if (trainer.scm().backend() != SefBackend::ConstantOne)
        result.final_spearman = spearman(result.final_losses, result.final_v);
    {
        std::ofstream f(outdir / "final_eval.csv");
        f << "id,label,shadow_label,loss,v\n";
        for (std::size_t i = 0; i < w.kb.entries.size(); ++i) {
            const KbEntry& e = w.kb.entries[i];
            f << e.sample.id << "," << e.sample.label << "," << e.shadow_label << ","
              << fmt_g(result.final_losses[i]) << "," << fmt_g(result.final_v[i]) << "\n";
        }
    }
    export_kb_csv(w.kb, outdir / "kb_snapshot.csv");
    write_metrics_csv(result.evals, cfg.data.classes, outdir / "metrics.csv");

    if (cfg.bias.kind == "flip") {
        std::vector<bool> corrupted;
        for (const auto& e : w.kb.entries)
            corrupted.push_back(e.sample.label != e.shadow_label);
        write_histogram_csv(loss_histograms(result.final_losses, corrupted),
                            outdir / "loss_histogram.csv");
    }

    Checkpoint ckpt;
    auto collect = [](const Net& net) {
        std::vector<Tensor> ts;
        for (const Tensor* p : const_cast<Net&>(net).params()) ts.push_back(*p);
        return ts;
    };
    ckpt.groups["encoder"] = collect(trainer.learner().encoder());
    ckpt.groups["decoder"] = collect(trainer.learner().decoder());
    ckpt.groups["classifier"] = collect(trainer.learner().classifier());
    if (trainer.scm().param_count() > 0) {
        Tensor theta({static_cast<int>(trainer.scm().param_count())});
        theta.data = trainer.scm().params_flat();
        ckpt.groups["scm"] = {theta};
    }
    save_checkpoint(ckpt, (outdir / "checkpoints" / "final.ckpt").string());
    return result;
}

// Runs the requested comparison; Both produces talsc/ and baseline/ subruns
// plus a delta summary.
inline std::vector<ExperimentResult> run_experiment_modes(const ExperimentConfig& cfg,
                                                          const std::filesystem::path& outdir) {
    std::vector<ExperimentResult> out;
    if (cfg.mode != RunMode::Both) {
        out.push_back(run_experiment(cfg, cfg.mode, outdir));
        return out;
    }
    const ExperimentWorld w = build_world(cfg);
    out.push_back(run_experiment(cfg, RunMode::Talsc, outdir / "talsc", &w));
    out.push_back(run_experiment(cfg, RunMode::Baseline, outdir / "baseline", &w));
    std::ofstream f(outdir / "delta_summary.csv");
    if (!f) throw ValidationError("cannot open delta_summary.csv");
    f << "metric,talsc,baseline,delta\n";
    const EvalResult& a = out[0].final_eval();
    const EvalResult& b = out[1].final_eval();
    f << "sra," << fmt_g(a.sra) << "," << fmt_g(b.sra) << "," << fmt_g(a.sra - b.sra) << "\n";
    f << "macro_f1," << fmt_g(a.macro_f1) << "," << fmt_g(b.macro_f1) << ","
      << fmt_g(a.macro_f1 - b.macro_f1) << "\n";
    f << "ms_ssim_mean," << fmt_g(a.ms_ssim_mean) << "," << fmt_g(b.ms_ssim_mean) << ","
      << fmt_g(a.ms_ssim_mean - b.ms_ssim_mean) << "\n";
    return out;
}

}  // namespace talsc

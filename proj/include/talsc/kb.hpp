#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "talsc/dataset.hpp"
#include "talsc/errors.hpp"
#include "talsc/rng.hpp"

namespace talsc {

// Biased empirical pool. The shadow label keeps the pre-corruption truth for
// diagnostics only; training never reads it.
struct KbEntry {
    Sample sample;
    double significance = 1.0;  // v_i, updated between training steps
    int shadow_label = 0;
};

struct KnowledgeBase {
    std::vector<KbEntry> entries;
    int classes = 0;

    std::size_t size() const { return entries.size(); }
};

// Symmetric flipping-pattern: keep with prob 1-p, else uniform over the C-1
// wrong classes.
struct FlipSpec {
    double p = 0.0;
    int classes = 0;

    std::vector<std::vector<double>> matrix() const {
        if (classes < 2) throw ValidationError("FlipSpec: need at least 2 classes");
        if (p < 0.0 || p >= 1.0) throw ValidationError("FlipSpec: p must be in [0,1)");
        std::vector<std::vector<double>> m(classes, std::vector<double>(classes, p / (classes - 1)));
        for (int i = 0; i < classes; ++i) m[i][i] = 1.0 - p;
        return m;
    }
};

// Geometric class-size schedule [N, N/f^(1/(C-1)), ..., N/f].
struct ImbalanceSpec {
    double factor = 1.0;
    int max_per_class = 0;  // N
    int classes = 0;

    std::vector<int> counts() const {
        if (classes < 1) throw ValidationError("ImbalanceSpec: need at least 1 class");
        if (factor < 1.0) throw ValidationError("ImbalanceSpec: factor must be >= 1");
        std::vector<int> out(classes);
        for (int k = 0; k < classes; ++k) {
            const double expo = classes > 1 ? static_cast<double>(k) / (classes - 1) : 0.0;
            const double target = max_per_class / std::pow(factor, expo);
            out[k] = std::max(1, static_cast<int>(std::floor(target + 0.5)));  // round-half-up
        }
        return out;
    }
};

struct MetaSet {
    std::vector<Sample> samples;
    int classes = 0;
    std::vector<int> per_class_counts;
};

inline KnowledgeBase kb_from_clean(const Dataset& ds) {
    KnowledgeBase kb;
    kb.classes = ds.classes;
    for (const auto& s : ds.samples) kb.entries.push_back({s, 1.0, s.label});
    return kb;
}

inline KnowledgeBase apply_flip(const Dataset& clean, const FlipSpec& spec, RngStream& rng) {
    (void)spec.matrix();  // validates p and C
    KnowledgeBase kb;
    kb.classes = spec.classes;
    for (const auto& s : clean.samples) {
        KbEntry e{s, 1.0, s.label};
        if (rng.uniform(0.0, 1.0) < spec.p) {
            // uniform over the C-1 wrong classes
            int offset = 1 + static_cast<int>(rng.below(spec.classes - 1));
            e.sample.label = (s.label + offset) % spec.classes;
        }
        kb.entries.push_back(std::move(e));
    }
    return kb;
}

inline KnowledgeBase apply_imbalance(const Dataset& clean, const ImbalanceSpec& spec,
                                     RngStream& rng) {
    const auto counts = spec.counts();
    std::vector<std::vector<std::size_t>> by_class(spec.classes);
    for (std::size_t i = 0; i < clean.samples.size(); ++i)
        by_class[clean.samples[i].label].push_back(i);
    for (int c = 0; c < spec.classes; ++c)
        if (static_cast<int>(by_class[c].size()) < counts[c])
            throw ValidationError("apply_imbalance: class " + std::to_string(c) + " has " +
                                  std::to_string(by_class[c].size()) + " samples, needs " +
                                  std::to_string(counts[c]));
    KnowledgeBase kb;
    kb.classes = spec.classes;
    for (int c = 0; c < spec.classes; ++c) {
        auto idx = by_class[c];
        std::shuffle(idx.begin(), idx.end(), rng.gen());
        for (int k = 0; k < counts[c]; ++k) {
            const Sample& s = clean.samples[idx[k]];
            kb.entries.push_back({s, 1.0, s.label});
        }
    }
    return kb;
}

// Removes m clean samples per class into the metadata pool; identity-disjoint
// remainder is returned alongside.
inline std::pair<MetaSet, Dataset> split_meta(const Dataset& clean, int per_class,
                                              RngStream& rng) {
    if (per_class < 0) throw ValidationError("split_meta: negative per-class count");
    std::vector<std::vector<std::size_t>> by_class(clean.classes);
    for (std::size_t i = 0; i < clean.samples.size(); ++i)
        by_class[clean.samples[i].label].push_back(i);
    for (int c = 0; c < clean.classes; ++c)
        if (static_cast<int>(by_class[c].size()) < per_class)
            throw ValidationError("split_meta: class " + std::to_string(c) +
                                  " has fewer than m clean samples");
    std::vector<bool> taken(clean.samples.size(), false);
    MetaSet meta;
    meta.classes = clean.classes;
    meta.per_class_counts.assign(clean.classes, per_class);
    for (int c = 0; c < clean.classes; ++c) {
        auto idx = by_class[c];
        std::shuffle(idx.begin(), idx.end(), rng.gen());
        for (int k = 0; k < per_class; ++k) {
            meta.samples.push_back(clean.samples[idx[k]]);
            taken[idx[k]] = true;
        }
    }
    Dataset remainder;
    remainder.classes = clean.classes;
    remainder.channels = clean.channels;
    remainder.height = clean.height;
    remainder.width = clean.width;
    for (std::size_t i = 0; i < clean.samples.size(); ++i)
        if (!taken[i]) remainder.samples.push_back(clean.samples[i]);
    return {std::move(meta), std::move(remainder)};
}

// Uniform sample without replacement; reproducible under a seeded stream.
inline std::vector<std::size_t> sample_batch(std::size_t pool_size, std::size_t n,
                                             RngStream& rng) {
    if (n > pool_size) throw ValidationError("sample_batch: request exceeds pool size");
    std::vector<std::size_t> idx(pool_size);
    std::iota(idx.begin(), idx.end(), 0);
    // partial Fisher-Yates
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + rng.below(pool_size - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    return idx;
}

inline void export_kb_csv(const KnowledgeBase& kb, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("export_kb_csv: cannot open " + path.string());
    f << "id,label,shadow_label,v\n";
    for (const auto& e : kb.entries)
        f << e.sample.id << "," << e.sample.label << "," << e.shadow_label << ","
          << e.significance << "\n";
}

}  // namespace talsc

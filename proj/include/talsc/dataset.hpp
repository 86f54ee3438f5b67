#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "talsc/errors.hpp"
#include "talsc/rng.hpp"
#include "talsc/tensor.hpp"

namespace talsc {

// One source item: image tensor plus label, with a stable identity so pools
// can be checked for disjointness after splitting.
struct Sample {
    int id = 0;
    Tensor image;  // (c,h,w), values in [0,1]
    int label = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    int classes = 0;
    int channels = 1, height = 0, width = 0;

    std::size_t size() const { return samples.size(); }
};

// Synthetic class-coded textures: per-class oriented sinusoid gratings with a
// class-dependent blob, plus per-sample phase jitter and pixel noise. Small
// enough for fast end-to-end runs, separable enough for a dense classifier.
inline Dataset make_toy_images(int classes, int per_class, int size, RngStream& rng,
                               double noise = 0.08) {
    if (classes < 2 || per_class < 1 || size < 4)
        throw ConfigError("make_toy_images: need classes>=2, per_class>=1, size>=4");
    Dataset ds;
    ds.classes = classes;
    ds.channels = 1;
    ds.height = ds.width = size;
    int next_id = 0;
    for (int c = 0; c < classes; ++c) {
        const double theta = std::numbers::pi * c / classes;
        const double freq = 1.5 + 0.5 * (c % 4);
        const double cx = 0.2 + 0.6 * ((c * 7) % classes) / std::max(1, classes - 1);
        const double cy = 0.2 + 0.6 * ((c * 3) % classes) / std::max(1, classes - 1);
        for (int s = 0; s < per_class; ++s) {
            Sample sm;
            sm.id = next_id++;
            sm.label = c;
            sm.image = Tensor({1, size, size});
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double u = static_cast<double>(x) / size;
                    const double v = static_cast<double>(y) / size;
                    const double t = u * std::cos(theta) + v * std::sin(theta);
                    double val = 0.5 + 0.35 * std::sin(2.0 * std::numbers::pi * freq * t + phase);
                    const double d2 = (u - cx) * (u - cx) + (v - cy) * (v - cy);
                    val += 0.3 * std::exp(-d2 / 0.02);
                    val += rng.normal(0.0, noise);
                    sm.image.at(0, y, x) = std::clamp(val, 0.0, 1.0);
                }
            ds.samples.push_back(std::move(sm));
        }
    }
    return ds;
}

// Gaussian blobs as flat (1,1,dim) "images"; classifier smoke/unit data.
inline Dataset make_blobs(int classes, int per_class, int dim, double spread, RngStream& rng) {
    Dataset ds;
    ds.classes = classes;
    ds.channels = 1;
    ds.height = 1;
    ds.width = dim;
    int next_id = 0;
    std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
    for (auto& c : centers)
        for (double& v : c) v = rng.uniform(-1.0, 1.0);
    for (int c = 0; c < classes; ++c)
        for (int s = 0; s < per_class; ++s) {
            Sample sm;
            sm.id = next_id++;
            sm.label = c;
            sm.image = Tensor({1, 1, dim});
            for (int d = 0; d < dim; ++d)
                sm.image.data[d] = centers[c][d] + rng.normal(0.0, spread);
            ds.samples.push_back(std::move(sm));
        }
    return ds;
}

// Flat binary toy-dataset container: header, f32 image rows, u8 labels.
inline void save_flat_dataset(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("save_flat_dataset: cannot open " + path.string());
    const std::uint32_t n = static_cast<std::uint32_t>(ds.samples.size());
    const std::uint32_t dim = static_cast<std::uint32_t>(ds.channels * ds.height * ds.width);
    const std::uint32_t meta[5] = {n, dim, static_cast<std::uint32_t>(ds.classes),
                                   static_cast<std::uint32_t>(ds.channels),
                                   static_cast<std::uint32_t>(ds.height)};
    f.write(reinterpret_cast<const char*>(meta), sizeof(meta));
    std::vector<float> row(dim);
    for (const auto& s : ds.samples) {
        for (std::uint32_t i = 0; i < dim; ++i) row[i] = static_cast<float>(s.image.data[i]);
        f.write(reinterpret_cast<const char*>(row.data()), dim * sizeof(float));
    }
    for (const auto& s : ds.samples) {
        const std::uint8_t lab = static_cast<std::uint8_t>(s.label);
        f.write(reinterpret_cast<const char*>(&lab), 1);
    }
}

inline Dataset load_flat_dataset(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("load_flat_dataset: cannot open " + path.string());
    std::uint32_t meta[5];
    f.read(reinterpret_cast<char*>(meta), sizeof(meta));
    if (!f) throw ValidationError("load_flat_dataset: truncated header");
    Dataset ds;
    const std::uint32_t n = meta[0], dim = meta[1];
    ds.classes = static_cast<int>(meta[2]);
    ds.channels = static_cast<int>(meta[3]);
    ds.height = static_cast<int>(meta[4]);
    if (ds.channels <= 0 || ds.height <= 0 || dim % (meta[3] * meta[4]) != 0)
        throw ValidationError("load_flat_dataset: bad header");
    ds.width = static_cast<int>(dim / (meta[3] * meta[4]));
    std::vector<float> row(dim);
    for (std::uint32_t i = 0; i < n; ++i) {
        Sample s;
        s.id = static_cast<int>(i);
        s.image = Tensor({ds.channels, ds.height, ds.width});
        f.read(reinterpret_cast<char*>(row.data()), dim * sizeof(float));
        for (std::uint32_t j = 0; j < dim; ++j) s.image.data[j] = row[j];
        ds.samples.push_back(std::move(s));
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint8_t lab = 0;
        f.read(reinterpret_cast<char*>(&lab), 1);
        ds.samples[i].label = lab;
    }
    if (!f) throw ValidationError("load_flat_dataset: truncated body");
    return ds;
}

// CIFAR-10 batch binary: 10000 records of 1 label byte + 3072 pixel bytes.
inline Dataset load_cifar10_batch(const std::filesystem::path& path, int max_records = -1) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("load_cifar10_batch: cannot open " + path.string());
    Dataset ds;
    ds.classes = 10;
    ds.channels = 3;
    ds.height = ds.width = 32;
    std::vector<std::uint8_t> rec(3073);
    int id = 0;
    while (f.read(reinterpret_cast<char*>(rec.data()), rec.size())) {
        Sample s;
        s.id = id++;
        s.label = rec[0];
        s.image = Tensor({3, 32, 32});
        for (std::size_t i = 0; i < 3072; ++i) s.image.data[i] = rec[1 + i] / 255.0;
        ds.samples.push_back(std::move(s));
        if (max_records > 0 && id >= max_records) break;
    }
    if (ds.samples.empty()) throw ValidationError("load_cifar10_batch: no records");
    return ds;
}

}  // namespace talsc

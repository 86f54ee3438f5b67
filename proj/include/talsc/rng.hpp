#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace talsc {

// All randomness in a run derives from one root seed through named substreams,
// so e.g. the KB bias realization is identical across sweep points that share
// a seed regardless of how much randomness other subsystems consumed.
class RngStream {
public:
    RngStream(std::uint64_t root_seed, std::string_view name, std::uint64_t index = 0)
        : gen_(mix(root_seed, name, index)) {}

    std::mt19937_64& gen() { return gen_; }

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(gen_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(gen_);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
        return d(gen_);
    }

    // Child stream, for per-batch substreams.
    RngStream fork(std::string_view name, std::uint64_t index = 0) {
        return RngStream(gen_(), name, index);
    }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    static std::uint64_t mix(std::uint64_t root, std::string_view name, std::uint64_t index) {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the stream name
        for (unsigned char c : name) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return splitmix(splitmix(root ^ h) ^ index);
    }

    std::mt19937_64 gen_;
};

}  // namespace talsc

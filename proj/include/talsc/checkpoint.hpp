#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "talsc/errors.hpp"
#include "talsc/tensor.hpp"

namespace talsc {

// On-disk snapshot format: magic, then named groups of shaped f64 arrays.
// Little-endian throughout; loading validates magic and lengths.
inline constexpr char kCheckpointMagic[8] = {'T', 'A', 'L', 'S', 'C', '0', '0', '1'};

struct Checkpoint {
    // group name -> ordered tensors (parameter order is the Net order)
    std::map<std::string, std::vector<Tensor>> groups;
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw ValidationError("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline void write_f64(std::ostream& os, double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw ValidationError("checkpoint: truncated file");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &u, 8);
    return d;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    if (n > (1u << 20)) throw ValidationError("checkpoint: implausible string length");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw ValidationError("checkpoint: truncated file");
    return s;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("checkpoint: cannot open for writing: " + path);
    os.write(kCheckpointMagic, 8);
    detail::write_u32(os, static_cast<std::uint32_t>(ckpt.groups.size()));
    for (const auto& [name, tensors] : ckpt.groups) {
        detail::write_string(os, name);
        detail::write_u32(os, static_cast<std::uint32_t>(tensors.size()));
        for (const Tensor& t : tensors) {
            detail::write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
            for (int d : t.shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
            for (double d : t.data) detail::write_f64(os, d);
        }
    }
    if (!os) throw ValidationError("checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("checkpoint: cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw ValidationError("checkpoint: bad magic in " + path);
    Checkpoint ckpt;
    const std::uint32_t ngroups = detail::read_u32(is);
    for (std::uint32_t g = 0; g < ngroups; ++g) {
        const std::string name = detail::read_string(is);
        const std::uint32_t nt = detail::read_u32(is);
        std::vector<Tensor> tensors;
        for (std::uint32_t i = 0; i < nt; ++i) {
            const std::uint32_t rank = detail::read_u32(is);
            if (rank > 8) throw ValidationError("checkpoint: implausible tensor rank");
            std::vector<int> shape(rank);
            for (std::uint32_t d = 0; d < rank; ++d)
                shape[d] = static_cast<int>(detail::read_u32(is));
            Tensor t(shape);
            for (double& v : t.data) v = detail::read_f64(is);
            tensors.push_back(std::move(t));
        }
        ckpt.groups.emplace(name, std::move(tensors));
    }
    return ckpt;
}

}  // namespace talsc

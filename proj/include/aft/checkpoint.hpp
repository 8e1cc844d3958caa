#pragma once

// Versioned text checkpoint: named tensors with shapes, tied to the run
// configuration through its hash. Loading validates version, hash, the
// parameter name set, and every shape before touching any values.

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aft/params.hpp"

namespace aft {

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const ParamStore& params,
                            std::uint64_t config_hash) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "AFT-CHECKPOINT v" << kCheckpointVersion << "\n";
    os << "config_hash " << config_hash << "\n";
    os << "tensors " << params.count() << "\n";
    os << std::setprecision(17);
    for (const auto& [name, t] : params) {
        os << name;
        os << " " << t.rank();
        for (auto d : t.shape()) os << " " << d;
        os << "\n";
        const auto& v = t.data();
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
        os << "\n";
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

// Loads values into an already-constructed parameter store; every stored
// name/shape must match the store exactly.
inline std::uint64_t load_checkpoint(const std::string& path, ParamStore& params) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string header;
    if (!std::getline(is, header) || header != "AFT-CHECKPOINT v1")
        throw std::runtime_error("checkpoint: unsupported header: " + header);
    std::string key;
    std::uint64_t hash = 0;
    std::size_t count = 0;
    is >> key >> hash;
    if (key != "config_hash") throw std::runtime_error("checkpoint: missing config_hash");
    is >> key >> count;
    if (key != "tensors") throw std::runtime_error("checkpoint: missing tensor count");
    if (count != params.count())
        throw std::runtime_error("checkpoint: tensor count mismatch: file has " +
                                 std::to_string(count) + ", model expects " +
                                 std::to_string(params.count()));
    std::map<std::string, std::vector<double>> loaded;
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        std::size_t rank = 0;
        if (!(is >> name >> rank)) throw std::runtime_error("checkpoint: truncated file");
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            if (!(is >> d)) throw std::runtime_error("checkpoint: truncated shape for " + name);
            n *= d;
        }
        if (!params.contains(name))
            throw std::runtime_error("checkpoint: unknown parameter " + name);
        if (params.get(name).shape() != shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        std::vector<double> v(n);
        for (auto& x : v)
            if (!(is >> x)) throw std::runtime_error("checkpoint: truncated values for " + name);
        loaded.emplace(std::move(name), std::move(v));
    }
    for (auto& [name, t] : params) {
        auto it = loaded.find(name);
        if (it == loaded.end())
            throw std::runtime_error("checkpoint: missing parameter " + name);
        t.data() = std::move(it->second);
    }
    return hash;
}

}  // namespace aft

#pragma once

// Named parameter registry. Ordered by name so optimizer sweeps, gradient
// snapshots, and checkpoints are deterministic.

#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aft/tensor.hpp"

namespace aft {

class ParamStore {
public:
    Tensor add(const std::string& name, Tensor t) {
        if (!params_.emplace(name, t).second)
            throw std::invalid_argument("ParamStore: duplicate parameter " + name);
        return t;
    }

    // Uniform(-limit, limit) with limit = sqrt(6/(fan_in+fan_out)).
    Tensor add_xavier(const std::string& name, std::size_t rows, std::size_t cols,
                      std::mt19937_64& rng) {
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        std::uniform_real_distribution<double> dist(-limit, limit);
        std::vector<double> data(rows * cols);
        for (auto& x : data) x = dist(rng);
        return add(name, Tensor::param({rows, cols}, std::move(data)));
    }

    Tensor add_zeros(const std::string& name, Shape shape) {
        return add(name, Tensor::zeros(std::move(shape), /*requires_grad=*/true));
    }

    Tensor add_const_vec(const std::string& name, std::size_t n, double fill) {
        return add(name, Tensor::param({n}, std::vector<double>(n, fill)));
    }

    Tensor get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end())
            throw std::out_of_range("ParamStore: unknown parameter " + name);
        return it->second;
    }

    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    std::size_t count() const { return params_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : params_) n += t.size();
        return n;
    }

    void zero_grads() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Tensor> params_;
};

}  // namespace aft

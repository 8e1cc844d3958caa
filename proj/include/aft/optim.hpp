#pragma once

// Adam with bias correction, plus a central-difference gradient checker.

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "aft/params.hpp"
#include "aft/tensor.hpp"

namespace aft {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment
};

// One bias-corrected Adam update for a single parameter tensor. t is the
// 1-based step count.
inline void adam_step(Tensor& param, const std::vector<double>& grad, AdamState& state,
                      const AdamConfig& cfg, std::size_t t) {
    if (t < 1) throw std::invalid_argument("adam_step: step count must be >= 1");
    const std::size_t n = param.size();
    if (grad.size() != n) throw ShapeError("adam_step: grad size does not match param");
    if (state.m.empty()) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    if (state.m.size() != n || state.v.size() != n)
        throw ShapeError("adam_step: state size does not match param");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    auto& data = param.data();
    for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore& params) {
        ++t_;
        for (auto& [name, p] : params) adam_step(p, p.grad(), states_[name], cfg_, t_);
    }

    std::size_t step_count() const { return t_; }

private:
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::map<std::string, AdamState> states_;
};

struct GradReport {
    double max_relative_error = 0.0;
    std::map<std::string, double> per_parameter_errors;
    double epsilon = 0.0;
};

// Compares reverse-mode gradients against central differences. forward must
// rebuild the computation from the current parameter values and return a
// scalar. Relative error: |analytic - numeric| / max(1, |numeric|).
inline GradReport grad_check(const std::function<Tensor()>& forward,
                             std::vector<std::pair<std::string, Tensor>> params,
                             double eps = 1e-6) {
    if (!(eps > 0.0 && eps <= 1e-3))
        throw std::invalid_argument("grad_check: eps must be in (0, 1e-3]");
    for (auto& [name, p] : params) p.zero_grad();
    Tensor loss = forward();
    if (loss.size() != 1) throw std::invalid_argument("grad_check: forward must return a scalar");
    if (!loss.all_finite()) throw std::runtime_error("grad_check: non-finite forward output");
    backward(loss);

    GradReport report;
    report.epsilon = eps;
    for (auto& [name, p] : params) {
        const std::vector<double> analytic = p.grad();
        double worst = 0.0;
        auto& data = p.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + eps;
            const double up = forward()[0];
            data[i] = saved - eps;
            const double down = forward()[0];
            data[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw std::runtime_error("grad_check: non-finite forward output");
            const double numeric = (up - down) / (2.0 * eps);
            const double rel =
                std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, rel);
        }
        report.per_parameter_errors[name] = worst;
        report.max_relative_error = std::max(report.max_relative_error, worst);
    }
    return report;
}

inline GradReport grad_check(const std::function<Tensor()>& forward, ParamStore& params,
                             double eps = 1e-6) {
    std::vector<std::pair<std::string, Tensor>> list;
    for (auto& [name, p] : params) list.emplace_back(name, p);
    return grad_check(forward, std::move(list), eps);
}

}  // namespace aft

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tscam/autograd.hpp"

namespace tscam {

struct AdamWConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 5e-4;
};

// AdamW with decoupled weight decay: the decay term lr*wd*theta is applied
// alongside the bias-corrected adaptive step, both from the pre-step value.
template <typename T>
class AdamW {
public:
    AdamW(std::vector<std::pair<std::string, Var<T>>> params, AdamWConfig config)
        : params_(std::move(params)), config_(config) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto& [name, var] : params_) {
            (void)name;
            m_.emplace_back(var->value.shape());
            v_.emplace_back(var->value.shape());
        }
    }

    void step() { step(config_.lr); }

    void step(double lr_now) {
        ++t_;
        const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        const T beta1 = static_cast<T>(config_.beta1);
        const T beta2 = static_cast<T>(config_.beta2);
        const T one_m_b1 = static_cast<T>(1.0 - config_.beta1);
        const T one_m_b2 = static_cast<T>(1.0 - config_.beta2);
        const T inv_bc1 = static_cast<T>(1.0 / bc1);
        const T inv_bc2 = static_cast<T>(1.0 / bc2);
        const T lr = static_cast<T>(lr_now);
        const T eps = static_cast<T>(config_.eps);
        const T wd = static_cast<T>(config_.weight_decay);

        for (std::size_t p = 0; p < params_.size(); ++p) {
            auto& [name, var] = params_[p];
            Tensor<T>& m = m_[p];
            Tensor<T>& v = v_[p];
            Tensor<T>& theta = var->value;
            const Tensor<T>& g = var->grad;
            for (index_t i = 0; i < theta.size(); ++i) {
                const T gi = g[i];
                if (!std::isfinite(static_cast<double>(gi))) {
                    throw DivergenceError("non-finite gradient in parameter '" + name + "'");
                }
                m[i] = beta1 * m[i] + one_m_b1 * gi;
                v[i] = beta2 * v[i] + one_m_b2 * gi * gi;
                const T mhat = m[i] * inv_bc1;
                const T vhat = v[i] * inv_bc2;
                theta[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * theta[i]);
            }
        }
    }

    void zero_grad() {
        for (auto& [name, var] : params_) {
            (void)name;
            for (T& g : var->grad.values()) {
                g = T(0);
            }
        }
    }

    index_t step_count() const { return t_; }
    void set_step_count(index_t t) { t_ = t; }

    const AdamWConfig& config() const { return config_; }
    const std::vector<std::pair<std::string, Var<T>>>& params() const { return params_; }

    Tensor<T>& moment1(std::size_t i) { return m_[i]; }
    Tensor<T>& moment2(std::size_t i) { return v_[i]; }
    const Tensor<T>& moment1(std::size_t i) const { return m_[i]; }
    const Tensor<T>& moment2(std::size_t i) const { return v_[i]; }

private:
    std::vector<std::pair<std::string, Var<T>>> params_;
    AdamWConfig config_;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
    index_t t_ = 0;
};

}  // namespace tscam

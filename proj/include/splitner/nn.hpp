#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "splitner/rng.hpp"
#include "splitner/tensor.hpp"

namespace splitner {

enum class Init {
    kZero,
    kOne,
    kEmbedding,  // uniform(-0.1, 0.1)
    kGlorot,     // uniform(+-sqrt(6/(fan_in+fan_out)))
};

// Named parameter tensors. Creation draws initial values from a store-owned RNG,
// so a fixed seed plus a fixed creation order reproduces the model exactly.
// Iteration (names(), for_each, checkpointing) is in sorted name order.
template <typename T>
class ParamStore {
public:
    explicit ParamStore(uint64_t seed) : rng_(seed) {}

    Tensor<T>& get(const std::string& name, const std::vector<int>& shape, Init how) {
        auto it = params_.find(name);
        if (it != params_.end()) {
            if (it->second.shape != shape)
                throw std::runtime_error("param " + name + " requested with shape " +
                                         shape_to_string(shape) + " but exists as " +
                                         shape_str(it->second));
            return it->second;
        }
        Tensor<T> t(shape);
        initialize(t, how);
        return params_.emplace(name, std::move(t)).first->second;
    }

    bool has(const std::string& name) const { return params_.count(name) > 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::runtime_error("unknown param " + name);
        return it->second;
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::runtime_error("unknown param " + name);
        return it->second;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(params_.size());
        for (const auto& [k, _] : params_) out.push_back(k);
        return out;
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& [_, t] : params_) n += t.numel();
        return n;
    }

    void zero_grads() {
        for (auto& [_, t] : params_)
            if (!t.grad.empty()) std::fill(t.grad.begin(), t.grad.end(), T(0));
    }

    template <typename Fn>
    void for_each(Fn&& fn) {
        for (auto& [name, t] : params_) fn(name, t);
    }
    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const auto& [name, t] : params_) fn(name, t);
    }

private:
    static std::string shape_to_string(const std::vector<int>& s) {
        std::string r = "[";
        for (size_t i = 0; i < s.size(); ++i) r += (i ? "x" : "") + std::to_string(s[i]);
        return r + "]";
    }

    void initialize(Tensor<T>& t, Init how) {
        switch (how) {
            case Init::kZero:
                break;
            case Init::kOne:
                std::fill(t.data.begin(), t.data.end(), T(1));
                break;
            case Init::kEmbedding:
                for (auto& e : t.data) e = static_cast<T>(rng_.uniform(-0.1, 0.1));
                break;
            case Init::kGlorot: {
                // fan_in = product of all dims but the last; for rank-3 conv
                // weights [k x cin x cout] the receptive field scales fan_out too.
                int64_t fan_in = t.numel() / t.shape.back();
                int64_t fan_out = t.shape.back();
                if (t.shape.size() == 3) fan_out *= t.shape[0];
                const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
                for (auto& e : t.data) e = static_cast<T>(rng_.uniform(-limit, limit));
                break;
            }
        }
    }

    std::map<std::string, Tensor<T>> params_;
    Rng rng_;
};

struct OptimizerConfig {
    enum class Kind { kAdam, kSgd };
    Kind kind = Kind::kAdam;
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Applies one update to every parameter that accumulated a gradient, then
// clears the gradients. A non-finite gradient aborts the step with the tensor
// named, rather than silently corrupting the weights.
template <typename T>
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    void step(ParamStore<T>& params) {
        ++t_;
        params.for_each([this](const std::string& name, Tensor<T>& p) {
            if (p.grad.empty()) return;
            for (const T gval : p.grad)
                if (!std::isfinite(static_cast<double>(gval)))
                    throw std::runtime_error("non-finite gradient in " + name);
            if (cfg_.kind == OptimizerConfig::Kind::kSgd) {
                const T lr = static_cast<T>(cfg_.lr);
                for (size_t i = 0; i < p.data.size(); ++i) p.data[i] -= lr * p.grad[i];
            } else {
                auto& m = slot(moment1_, name, p);
                auto& v = slot(moment2_, name, p);
                const double b1 = cfg_.beta1, b2 = cfg_.beta2;
                const double corr1 = 1.0 - std::pow(b1, t_);
                const double corr2 = 1.0 - std::pow(b2, t_);
                const double lr = cfg_.lr;
                for (size_t i = 0; i < p.data.size(); ++i) {
                    const double gv = static_cast<double>(p.grad[i]);
                    m[i] = b1 * m[i] + (1.0 - b1) * gv;
                    v[i] = b2 * v[i] + (1.0 - b2) * gv * gv;
                    const double mhat = m[i] / corr1;
                    const double vhat = v[i] / corr2;
                    p.data[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
                }
            }
            std::fill(p.grad.begin(), p.grad.end(), T(0));
        });
    }

    int64_t steps() const { return t_; }

private:
    std::vector<double>& slot(std::map<std::string, std::vector<double>>& store,
                              const std::string& name, const Tensor<T>& p) {
        auto it = store.find(name);
        if (it == store.end())
            it = store.emplace(name, std::vector<double>(p.data.size(), 0.0)).first;
        return it->second;
    }

    OptimizerConfig cfg_;
    int64_t t_ = 0;
    std::map<std::string, std::vector<double>> moment1_, moment2_;
};

}  // namespace splitner

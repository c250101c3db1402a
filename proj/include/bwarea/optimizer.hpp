// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bwarea/random.hpp"
#include "bwarea/tensor.hpp"

namespace bwarea {

class NonFiniteError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Named, ordered collection of learnable tensors for one model.
template <typename T>
class ParameterStore {
   public:
    explicit ParameterStore(std::string prefix = {}) : prefix_(std::move(prefix)) {}

    // Handles alias the stored tensors, so copying a store would share
    // parameters between models. Models copy values explicitly instead.
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;
    ParameterStore(ParameterStore&&) noexcept = default;
    ParameterStore& operator=(ParameterStore&&) noexcept = default;

    const std::string& prefix() const { return prefix_; }

    Tensor<T> create(const std::string& name, Shape shape) {
        const std::string full = prefix_.empty() ? name : prefix_ + "." + name;
        if (params_.count(full)) throw std::logic_error("duplicate parameter " + full);
        auto t = Tensor<T>::zeros(std::move(shape), true);
        params_.emplace(full, t);
        return t;
    }

    Tensor<T> create_normal(const std::string& name, Shape shape, double stddev, Rng& rng) {
        auto t = create(name, std::move(shape));
        for (auto& v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
        return t;
    }

    Tensor<T> create_uniform(const std::string& name, Shape shape, double lo, double hi, Rng& rng) {
        auto t = create(name, std::move(shape));
        for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    Tensor<T> create_constant(const std::string& name, Shape shape, T value) {
        auto t = create(name, std::move(shape));
        for (auto& v : t.values()) v = value;
        return t;
    }

    const Tensor<T>& get(const std::string& full_name) const {
        auto it = params_.find(full_name);
        if (it == params_.end()) throw std::out_of_range("no parameter named " + full_name);
        return it->second;
    }

    bool contains(const std::string& full_name) const { return params_.count(full_name) != 0; }
    const std::map<std::string, Tensor<T>>& items() const { return params_; }
    std::size_t count() const { return params_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : params_) n += t.size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, t] : params_) const_cast<Tensor<T>&>(t).zero_grad();
    }

    /// Copies values from a store with identical names and shapes.
    void copy_values_from(const ParameterStore& other) {
        if (other.params_.size() != params_.size()) throw std::invalid_argument("parameter inventories differ");
        for (auto& [name, t] : params_) {
            const auto& src = other.get(name);
            if (src.shape() != t.shape()) throw DimensionError("shape mismatch copying " + name);
            auto dst = t;
            std::copy(src.values().begin(), src.values().end(), dst.values().begin());
        }
    }

    /// FNV-1a over names and raw value bytes; used to prove a model was not
    /// mutated by a training stage.
    std::uint64_t checksum() const {
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&h](const void* p, std::size_t n) {
            const auto* bytes = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= bytes[i];
                h *= 1099511628211ULL;
            }
        };
        for (const auto& [name, t] : params_) {
            mix(name.data(), name.size());
            mix(t.data(), t.size() * sizeof(T));
        }
        return h;
    }

   private:
    std::string prefix_;
    std::map<std::string, Tensor<T>> params_;
};

template <typename T>
using StoreList = std::vector<ParameterStore<T>*>;

/// Global L2 norm of all gradients; rescales them when above max_norm
/// (max_norm <= 0 disables clipping). Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const StoreList<T>& stores, double max_norm) {
    double ss = 0;
    for (auto* s : stores)
        for (const auto& [_, t] : s->items())
            if (t.has_grad())
                for (T g : t.grad()) ss += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(ss);
    if (max_norm > 0 && norm > max_norm && std::isfinite(norm)) {
        const T factor = static_cast<T>(max_norm / (norm + 1e-12));
        for (auto* s : stores)
            for (const auto& [_, t] : s->items())
                if (t.has_grad()) {
                    auto tt = t;
                    for (auto& g : tt.grad()) g *= factor;
                }
    }
    return norm;
}

struct AdamConfig {
    double learning_rate = 4e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam with moment buffers keyed by parameter name.
template <typename T>
class Adam {
   public:
    struct Moments {
        std::vector<T> first;
        std::vector<T> second;
    };

    explicit Adam(AdamConfig config = {}) : config_(config) {
        if (!(config_.learning_rate > 0)) throw std::invalid_argument("Adam learning rate must be positive");
    }

    const AdamConfig& config() const { return config_; }
    void set_learning_rate(double lr) { config_.learning_rate = lr; }
    std::uint64_t step_count() const { return step_count_; }
    const std::map<std::string, Moments>& moments() const { return moments_; }
    std::map<std::string, Moments>& moments() { return moments_; }
    void set_step_count(std::uint64_t n) { step_count_ = n; }

    /// Applies one update to every parameter of the given stores and clears
    /// their gradients. Parameters without an accumulated gradient see g = 0.
    void step(const StoreList<T>& stores) {
        for (auto* s : stores)
            for (const auto& [name, t] : s->items())
                if (t.has_grad() && !all_finite<T>(t.grad()))
                    throw NonFiniteError("non-finite gradient in parameter " + name);

        ++step_count_;
        const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
        const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
        for (auto* s : stores) {
            for (const auto& [name, param] : s->items()) {
                auto p = param;
                auto& mom = moments_[name];
                if (mom.first.size() != p.size()) {
                    mom.first.assign(p.size(), T(0));
                    mom.second.assign(p.size(), T(0));
                }
                const bool has = p.has_grad();
                const T* g = has ? p.grad().data() : nullptr;
                auto w = p.values();
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const T gi = has ? g[i] : T(0);
                    mom.first[i] = b1 * mom.first[i] + (T(1) - b1) * gi;
                    mom.second[i] = b2 * mom.second[i] + (T(1) - b2) * gi * gi;
                    const double mhat = static_cast<double>(mom.first[i]) / bc1;
                    const double vhat = static_cast<double>(mom.second[i]) / bc2;
                    w[i] -= static_cast<T>(config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon));
                }
                p.zero_grad();
            }
        }
    }

   private:
    AdamConfig config_;
    std::uint64_t step_count_ = 0;
    std::map<std::string, Moments> moments_;
};

}  // namespace bwarea

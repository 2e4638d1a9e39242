#pragma once

// Adam with bias correction. Steps only trainable parameters; persistent
// state (spectral-norm vectors) passes through untouched.

#include <cstdint>
#include <vector>

#include "fewfont/params.hpp"

namespace fewfont {

template <typename T>
class Adam {
  public:
    Adam() = default;
    Adam(T lr, T beta1, T beta2, T eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(const ParamSet<T>& ps) {
        m_.clear();
        v_.clear();
        for (const auto& p : ps.items) {
            m_.push_back(p.trainable ? Tensor<T>::zeros(p.value.shape) : Tensor<T>());
            v_.push_back(p.trainable ? Tensor<T>::zeros(p.value.shape) : Tensor<T>());
        }
        t_ = 0;
    }

    // grads aligned with ps.items; empty tensors are skipped.
    void step(ParamSet<T>& ps, const std::vector<Tensor<T>>& grads) {
        if (grads.size() != ps.size() || m_.size() != ps.size())
            throw ValueError("adam: gradient/parameter mismatch");
        t_++;
        T bc1 = T(1) - std::pow(beta1_, T(t_));
        T bc2 = T(1) - std::pow(beta2_, T(t_));
        for (std::size_t i = 0; i < ps.size(); i++) {
            auto& p = ps.items[i];
            const auto& g = grads[i];
            if (!p.trainable || g.empty()) continue;
            Tensor<T>& m = m_[i];
            Tensor<T>& v = v_[i];
            for (std::size_t j = 0; j < g.size(); j++) {
                m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
                T mhat = m[j] / bc1;
                T vhat = v[j] / bc2;
                p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    int64_t steps() const { return t_; }

  private:
    T lr_ = T(1e-3), beta1_ = T(0.9), beta2_ = T(0.999), eps_ = T(1e-8);
    int64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace fewfont

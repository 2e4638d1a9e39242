#pragma once

#include <string>
#include <vector>

#include "fewfont/errors.hpp"
#include "fewfont/rng.hpp"
#include "fewfont/tape.hpp"

namespace fewfont {

// A named learnable (or persistent) tensor. Parameters live outside tapes;
// each forward pass binds them as leaves that alias the same storage.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    bool trainable = true;
};

template <typename T>
struct ParamSet {
    std::vector<Param<T>> items;

    int add(std::string name, Tensor<T> v, bool trainable = true) {
        items.push_back(Param<T>{std::move(name), std::move(v), trainable});
        return int(items.size()) - 1;
    }
    Param<T>& operator[](int h) { return items[std::size_t(h)]; }
    const Param<T>& operator[](int h) const { return items[std::size_t(h)]; }
    std::size_t size() const { return items.size(); }

    int find(const std::string& name) const {
        for (std::size_t i = 0; i < items.size(); i++)
            if (items[i].name == name) return int(i);
        return -1;
    }
};

// Leaf ids aligned with ParamSet indices. Trainable params get gradients
// when with_grad is set; persistent state (spectral-norm vectors) never does.
template <typename T>
std::vector<typename Tape<T>::Id> bind_params(Tape<T>& tape, const ParamSet<T>& ps,
                                              bool with_grad) {
    std::vector<typename Tape<T>::Id> ids;
    ids.reserve(ps.size());
    for (const auto& p : ps.items) ids.push_back(tape.leaf(p.value, with_grad && p.trainable));
    return ids;
}

// Kaiming-normal initialization: zero mean, variance 2/fan_in.
template <typename T>
Tensor<T> kaiming_normal(Shape shape, int fan_in, Rng& rng) {
    if (fan_in <= 0) throw ValueError("kaiming_normal: fan_in must be positive");
    Tensor<T> t(std::move(shape));
    double std = std::sqrt(2.0 / double(fan_in));
    for (std::size_t i = 0; i < t.size(); i++) t[i] = T(rng.normal() * std);
    return t;
}

// fan_in from a weight shape: conv [Co,Ci,K,K] -> Ci*K*K, linear [out,in] -> in.
inline int fan_in_of(const Shape& s) {
    if (s.size() < 2) throw ValueError("fan_in_of: weight must have rank >= 2");
    int f = 1;
    for (std::size_t i = 1; i < s.size(); i++) f *= s[i];
    return f;
}

template <typename T>
Tensor<T> kaiming_init(Shape shape, Rng& rng) {
    int f = fan_in_of(shape);
    return kaiming_normal<T>(std::move(shape), f, rng);
}

}  // namespace fewfont

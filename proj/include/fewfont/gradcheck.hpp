#pragma once

// Central finite-difference verification of reverse-mode gradients.
// f builds a forward pass on the given tape from the input leaf and returns
// a scalar node. The relative error per element uses an absolute floor so
// near-zero gradients are compared absolutely instead of blowing up.

#include <functional>

#include "fewfont/tape.hpp"

namespace fewfont {

template <typename T>
using ScalarFn = std::function<typename Tape<T>::Id(Tape<T>&, typename Tape<T>::Id)>;

template <typename T>
T grad_check(const ScalarFn<T>& f, const Tensor<T>& x, T eps = T(1e-5)) {
    if (!(eps > T(0))) throw ValueError("grad_check: eps must be positive");

    Tape<T> tape;
    tape.check_finite = true;
    auto xid = tape.leaf(x.clone(), true);
    auto out = f(tape, xid);
    if (tape.val(out).size() != 1) throw ValueError("grad_check: f must produce a scalar");
    tape.backward(out);
    Tensor<T> analytic = tape.grad_of(xid).empty() ? Tensor<T>::zeros(x.shape)
                                                   : tape.grad_of(xid).clone();

    auto eval = [&](const Tensor<T>& pt) {
        Tape<T> t;
        auto id = t.leaf(pt, false);
        return t.val(f(t, id))[0];
    };

    Tensor<T> work = x.clone();
    T max_rel = 0;
    for (std::size_t i = 0; i < work.size(); i++) {
        T orig = work[i];
        T h = eps * std::max(T(1), std::fabs(orig));
        work[i] = orig + h;
        T fp = eval(work);
        work[i] = orig - h;
        T fm = eval(work);
        work[i] = orig;
        T numeric = (fp - fm) / (2 * h);
        T a = analytic[i];
        T rel = std::fabs(a - numeric) /
                std::max(std::max(std::fabs(a), std::fabs(numeric)), T(1e-3));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace fewfont

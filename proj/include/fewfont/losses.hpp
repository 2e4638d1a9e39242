#pragma once

// GAN and reconstruction losses. The discriminator minimizes the hinge
// form max(0, 1 - D(real)) + max(0, 1 + D(fake)) with the fake term
// averaged over the generated branches; the generator minimizes the
// negated mean fake logit over both branches. The pixel loss is the sum
// of the two branch-wise mean absolute errors against the target.

#include <vector>

#include "fewfont/tape.hpp"

namespace fewfont {

template <typename T>
typename Tape<T>::Id hinge_real(Tape<T>& t, typename Tape<T>::Id logit) {
    return t.relu(t.add_const(t.scale(logit, T(-1)), T(1)));  // max(0, 1 - x)
}

template <typename T>
typename Tape<T>::Id hinge_fake(Tape<T>& t, typename Tape<T>::Id logit) {
    return t.relu(t.add_const(logit, T(1)));  // max(0, 1 + x)
}

template <typename T>
typename Tape<T>::Id adv_loss_d(Tape<T>& t, typename Tape<T>::Id logit_real,
                                const std::vector<typename Tape<T>::Id>& logits_fake) {
    if (logits_fake.empty()) throw ValueError("adv_loss_d: no fake logits");
    auto fake = hinge_fake(t, logits_fake[0]);
    for (std::size_t i = 1; i < logits_fake.size(); i++)
        fake = t.add(fake, hinge_fake(t, logits_fake[i]));
    fake = t.scale(fake, T(1) / T(logits_fake.size()));
    return t.add(hinge_real(t, logit_real), fake);
}

template <typename T>
typename Tape<T>::Id adv_loss_g(Tape<T>& t,
                                const std::vector<typename Tape<T>::Id>& logits_fake) {
    if (logits_fake.empty()) throw ValueError("adv_loss_g: no fake logits");
    auto sum = logits_fake[0];
    for (std::size_t i = 1; i < logits_fake.size(); i++) sum = t.add(sum, logits_fake[i]);
    return t.scale(sum, T(-1) / T(logits_fake.size()));
}

// mean|main - target| + mean|sr - target|
template <typename T>
typename Tape<T>::Id l1_loss(Tape<T>& t, typename Tape<T>::Id main_out,
                             typename Tape<T>::Id sr_out, typename Tape<T>::Id target) {
    auto a = t.mean_all(t.abs(t.sub(main_out, target)));
    auto b = t.mean_all(t.abs(t.sub(sr_out, target)));
    return t.add(a, b);
}

}  // namespace fewfont

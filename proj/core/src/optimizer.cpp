#include "artadapter/optimizer.hpp"

#include <cmath>

namespace artadapter {

AdamW::AdamW(std::vector<ParamGroup> groups, scalar_t beta1, scalar_t beta2, scalar_t eps,
             scalar_t weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ArgumentError("adam betas must lie in [0, 1)");
    if (eps <= 0.0) throw ArgumentError("adam eps must be positive");
    if (weight_decay < 0.0) throw ArgumentError("weight decay must be non-negative");
    for (ParamGroup& g : groups) {
        if (!(g.lr > 0.0)) throw ArgumentError("learning rate must be positive");
        Group group;
        group.lr = g.lr;
        for (Var& p : g.params) {
            Slot s;
            s.m = Tensor::zeros(p->value.shape());
            s.v = Tensor::zeros(p->value.shape());
            s.param = std::move(p);
            group.slots.push_back(std::move(s));
        }
        groups_.push_back(std::move(group));
    }
}

void AdamW::step() {
    ++step_count_;
    const scalar_t bc1 = 1.0 - std::pow(beta1_, static_cast<scalar_t>(step_count_));
    const scalar_t bc2 = 1.0 - std::pow(beta2_, static_cast<scalar_t>(step_count_));
    for (Group& g : groups_) {
        for (Slot& s : g.slots) {
            Node& n = *s.param;
            if (n.grad.empty()) continue;
            Tensor& p = n.value;
            const Tensor& grad = n.grad;
            for (int64_t i = 0; i < p.numel(); ++i) {
                const scalar_t gi = grad.at(i);
                s.m.at(i) = beta1_ * s.m.at(i) + (1.0 - beta1_) * gi;
                s.v.at(i) = beta2_ * s.v.at(i) + (1.0 - beta2_) * gi * gi;
                const scalar_t mhat = s.m.at(i) / bc1;
                const scalar_t vhat = s.v.at(i) / bc2;
                p.at(i) -= g.lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p.at(i));
            }
        }
    }
}

void AdamW::zero_grad() {
    for (Group& g : groups_)
        for (Slot& s : g.slots) s.param->zero_grad();
}

}  // namespace artadapter

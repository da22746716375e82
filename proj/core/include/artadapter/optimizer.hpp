#pragma once

#include <cstdint>
#include <vector>

#include "artadapter/adaptation.hpp"

namespace artadapter {

// AdamW with decoupled weight decay over per-learning-rate parameter groups.
// Parameters whose gradient was never materialized in a step are skipped
// entirely (no moment update, no decay), so frozen or unused tensors stay
// bit-identical.
class AdamW {
  public:
    AdamW(std::vector<ParamGroup> groups, scalar_t beta1 = 0.9, scalar_t beta2 = 0.999,
          scalar_t eps = 1e-8, scalar_t weight_decay = 0.01);

    void step();
    void zero_grad();
    int64_t step_count() const { return step_count_; }

  private:
    struct Slot {
        Var param;
        Tensor m, v;
    };
    struct Group {
        std::vector<Slot> slots;
        scalar_t lr;
    };
    std::vector<Group> groups_;
    scalar_t beta1_, beta2_, eps_, weight_decay_;
    int64_t step_count_ = 0;
};

}  // namespace artadapter

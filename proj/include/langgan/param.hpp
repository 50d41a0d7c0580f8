// Named parameter blocks with gradient accumulators and Adam updates.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "langgan/tensor.hpp"

namespace langgan {

struct ParamBlock {
    std::string name;
    Tensor2 value;
    Tensor2 grad;

    ParamBlock() = default;
    ParamBlock(std::string n, size_t rows, size_t cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

    void zero_grad() { grad.zero(); }
};

// Non-owning ordered view over a model's trainable blocks.
struct ParamSet {
    std::vector<ParamBlock*> blocks;

    void add(ParamBlock& b) { blocks.push_back(&b); }
    void zero_grads() {
        for (auto* b : blocks) b->zero_grad();
    }
    ParamBlock* find(const std::string& name) const {
        for (auto* b : blocks)
            if (b->name == name) return b;
        return nullptr;
    }
};

struct AdamState {
    Tensor2 m;
    Tensor2 v;
    long step = 0;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-3;
};

// One bias-corrected Adam update. The gradient is augmented with
// l2_weight * value before the moment updates, and cleared afterwards.
inline void adam_step(ParamBlock& param, AdamState& state, double l2_weight) {
    if (state.m.size() == 0) {
        state.m = Tensor2(param.value.rows, param.value.cols);
        state.v = Tensor2(param.value.rows, param.value.cols);
    }
    detail::require(state.m.same_shape(param.value) && state.v.same_shape(param.value),
                    "adam_step: state shape mismatch");
    state.step += 1;
    double b1 = state.beta1, b2 = state.beta2;
    double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t i = 0; i < param.value.size(); ++i) {
        double g = param.grad.data[i] + l2_weight * param.value.data[i];
        state.m.data[i] = b1 * state.m.data[i] + (1.0 - b1) * g;
        state.v.data[i] = b2 * state.v.data[i] + (1.0 - b2) * g * g;
        double mhat = state.m.data[i] / corr1;
        double vhat = state.v.data[i] / corr2;
        param.value.data[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    param.zero_grad();
}

// Keeps one AdamState per block name; applies adam_step over a ParamSet.
class AdamOptimizer {
  public:
    AdamOptimizer() = default;
    AdamOptimizer(double lr, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamSet& params, double l2_weight = 0.0) {
        for (auto* b : params.blocks) {
            AdamState& st = states_[b->name];
            if (st.m.size() == 0) {
                st.beta1 = beta1_;
                st.beta2 = beta2_;
                st.epsilon = eps_;
                st.learning_rate = lr_;
            }
            adam_step(*b, st, l2_weight);
        }
    }

    AdamState& state(const std::string& name) { return states_[name]; }

  private:
    double lr_ = 1e-3;
    double beta1_ = 0.5;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::map<std::string, AdamState> states_;
};

}  // namespace langgan

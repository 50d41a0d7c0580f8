// Central finite-difference verification of analytic gradients.
#pragma once

#include <functional>

#include "langgan/param.hpp"

namespace langgan {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// loss_fn(want_grad): returns the loss; when want_grad is true it must also
// accumulate analytic gradients into the blocks (which are zeroed first here).
// The loss must be deterministic for fixed parameter values.
inline GradCheckResult finite_difference_check(const std::function<double(bool)>& loss_fn,
                                               std::span<ParamBlock* const> blocks,
                                               double step = 1e-5) {
    for (auto* b : blocks) b->zero_grad();
    double base = loss_fn(true);
    if (!std::isfinite(base)) throw NumericError("finite_difference_check: non-finite loss");

    std::vector<Tensor2> analytic;
    analytic.reserve(blocks.size());
    for (auto* b : blocks) analytic.push_back(b->grad);

    GradCheckResult result;
    for (size_t bi = 0; bi < blocks.size(); ++bi) {
        ParamBlock& blk = *blocks[bi];
        for (size_t k = 0; k < blk.value.size(); ++k) {
            double saved = blk.value.data[k];
            blk.value.data[k] = saved + step;
            double up = loss_fn(false);
            blk.value.data[k] = saved - step;
            double down = loss_fn(false);
            blk.value.data[k] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NumericError("finite_difference_check: non-finite perturbed loss");
            double numeric = (up - down) / (2.0 * step);
            double a = analytic[bi].data[k];
            double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            double rel = std::abs(a - numeric) / denom;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = blk.name;
                result.worst_index = k;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace langgan

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sumix/autodiff.hpp"
#include "sumix/rng.hpp"
#include "sumix/tensor.hpp"

namespace sumix::test {

inline Tensor random_tensor(std::vector<long> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> normal(0.0, scale);
    for (long i = 0; i < t.size(); ++i) t[i] = normal(rng);
    return t;
}

inline Tensor random_uniform(std::vector<long> shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> uni(lo, hi);
    for (long i = 0; i < t.size(); ++i) t[i] = uni(rng);
    return t;
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central-difference gradient check of a scalar graph over a set of leaf
// tensors. `build` must construct the graph afresh from current leaf
// values on every call.
struct GradCheck {
    std::vector<Tensor> leaves;
    std::function<ad::Value(const std::vector<ad::Value>&)> build;

    double eval() const {
        ad::NoGradGuard ng;
        std::vector<ad::Value> vs;
        for (const auto& t : leaves) vs.push_back(ad::Value::leaf(t));
        return build(vs).val()[0];
    }

    // max relative error between analytic and finite-difference entries
    double max_rel_err(double h = 1e-6) {
        std::vector<ad::Value> vs;
        for (const auto& t : leaves) vs.push_back(ad::Value::leaf(t, true));
        ad::Value y = build(vs);
        ad::backward(y);

        double worst = 0.0;
        for (std::size_t li = 0; li < leaves.size(); ++li) {
            for (long i = 0; i < leaves[li].size(); ++i) {
                const double keep = leaves[li][i];
                const double step = h * std::max(1.0, std::abs(keep));
                leaves[li][i] = keep + step;
                const double fp = eval();
                leaves[li][i] = keep - step;
                const double fm = eval();
                leaves[li][i] = keep;
                const double fd = (fp - fm) / (2.0 * step);
                const double an = vs[li].has_grad() ? vs[li].grad()[i] : 0.0;
                worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
            }
        }
        return worst;
    }
};

}  // namespace sumix::test

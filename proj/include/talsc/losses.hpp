#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "talsc/errors.hpp"
#include "talsc/tensor.hpp"

namespace talsc {

// Combined task loss (1-lambda)*CE + gamma*lambda*MSE.
struct LossBreakdown {
    double ce = 0.0;
    double mse = 0.0;
    double combined = 0.0;
    double lambda = 0.0;
    double gamma = 1.0;
};

inline std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

// Lowest index wins ties.
inline int argmax(const std::vector<double>& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

// Returns the index of the single 1 in a one-hot vector.
inline int one_hot_index(const std::vector<double>& z) {
    int idx = -1;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i] == 1.0) {
            if (idx >= 0) throw ValidationError("label is not one-hot: multiple ones");
            idx = static_cast<int>(i);
        } else if (z[i] != 0.0) {
            throw ValidationError("label is not one-hot: entry not in {0,1}");
        }
    }
    if (idx < 0) throw ValidationError("label is not one-hot: no one set");
    return idx;
}

// Softmax cross entropy; dlogits is softmax(p) - onehot.
inline double softmax_ce(const std::vector<double>& logits, int true_class,
                         std::vector<double>* dlogits = nullptr) {
    if (true_class < 0 || true_class >= static_cast<int>(logits.size()))
        throw ValidationError("softmax_ce: class index out of range");
    std::vector<double> p = softmax(logits);
    const double loss = -std::log(std::max(p[true_class], 1e-300));
    if (dlogits) {
        *dlogits = p;
        (*dlogits)[true_class] -= 1.0;
    }
    return loss;
}

// Mean squared error over all elements; dA = 2*(a-b)/N.
inline double mse(const Tensor& a, const Tensor& b, Tensor* da = nullptr) {
    check_same_shape(a, b, "mse");
    double acc = 0.0;
    const double n = static_cast<double>(a.size());
    if (da) *da = Tensor(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
        if (da) da->data[i] = 2.0 * d / n;
    }
    return acc / n;
}

inline LossBreakdown combine_losses(double ce, double mse_val, double lambda, double gamma) {
    if (lambda < 0.0 || lambda > 1.0) throw ValidationError("lambda must be in [0,1]");
    if (gamma <= 0.0) throw ValidationError("gamma must be positive");
    LossBreakdown lb;
    lb.ce = ce;
    lb.mse = mse_val;
    lb.lambda = lambda;
    lb.gamma = gamma;
    lb.combined = (1.0 - lambda) * ce + gamma * lambda * mse_val;
    return lb;
}

}  // namespace talsc

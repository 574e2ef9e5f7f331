#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lids/layers.hpp"
#include "lids/tensor.hpp"

namespace lids {

struct LossError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One positive multiplier per class, indexed by label.
struct ClassWeights {
    std::vector<double> weights;

    static ClassWeights uniform(std::size_t classes) {
        return {std::vector<double>(classes, 1.0)};
    }
};

// w_c = N / (C * n_c); the sample-weighted mean weight is exactly 1.
inline ClassWeights inverse_frequency_weights(const std::vector<std::size_t>& counts) {
    if (counts.size() < 2)
        throw LossError("inverse_frequency_weights: need at least 2 classes");
    std::size_t total = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0)
            throw LossError("inverse_frequency_weights: class " + std::to_string(i) +
                            " has zero samples; drop or merge it before weighting");
        total += counts[i];
    }
    ClassWeights w;
    w.weights.resize(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
        w.weights[i] = double(total) / (double(counts.size()) * double(counts[i]));
    return w;
}

template <class T>
struct LossResult {
    double loss = 0;
    TensorT<T> grad;  // wrt the loss input (probabilities for BCE, logits for CE)
};

// Binary cross-entropy over sigmoid probabilities, per-sample class weights.
// Probabilities are clamped to [1e-7, 1-1e-7] before the logs.
template <class T>
LossResult<T> weighted_bce(const TensorT<T>& prob, const std::vector<int>& target,
                           const ClassWeights& w) {
    const std::size_t B = prob.dim(0);
    if (prob.rank() != 2 || prob.dim(1) != 1)
        throw ShapeError("weighted_bce: prob must be [B,1]");
    if (target.size() != B) throw ShapeError("weighted_bce: target length mismatch");
    if (w.weights.size() != 2) throw LossError("weighted_bce: need 2 class weights");

    constexpr double eps = 1e-7;
    LossResult<T> res;
    res.grad = TensorT<T>({B, 1});
    double sum = 0;
    for (std::size_t b = 0; b < B; ++b) {
        const int y = target[b];
        if (y != 0 && y != 1) throw LossError("weighted_bce: target must be 0/1");
        double p = static_cast<double>(prob[b]);
        p = std::min(std::max(p, eps), 1.0 - eps);
        const double wb = w.weights[y];
        sum += -wb * (y ? std::log(p) : std::log(1.0 - p));
        // d/dp of -w*[y ln p + (1-y) ln(1-p)] / B
        res.grad[b] = static_cast<T>(wb * (y ? -1.0 / p : 1.0 / (1.0 - p)) / double(B));
    }
    res.loss = sum / double(B);
    return res;
}

// Softmax + NLL over logits; per-sample scale w[y]; gradient wrt logits.
template <class T>
LossResult<T> weighted_categorical_ce(const TensorT<T>& logits,
                                      const std::vector<int>& target,
                                      const ClassWeights& w) {
    if (logits.rank() != 2) throw ShapeError("weighted_categorical_ce: logits must be [B,C]");
    const std::size_t B = logits.dim(0), C = logits.dim(1);
    if (C < 2) throw LossError("weighted_categorical_ce: need C >= 2");
    if (target.size() != B) throw ShapeError("weighted_categorical_ce: target length mismatch");
    if (w.weights.size() != C) throw LossError("weighted_categorical_ce: weight count != C");

    TensorT<T> probs = activation_forward(logits, Activation::softmax);
    LossResult<T> res;
    res.grad = TensorT<T>({B, C});
    double sum = 0;
    for (std::size_t b = 0; b < B; ++b) {
        const int y = target[b];
        if (y < 0 || std::size_t(y) >= C)
            throw LossError("weighted_categorical_ce: target " + std::to_string(y) +
                            " out of range [0," + std::to_string(C) + ")");
        const double wb = w.weights[y];
        const double p = std::max(static_cast<double>(probs.at2(b, y)), 1e-30);
        sum += -wb * std::log(p);
        for (std::size_t c = 0; c < C; ++c) {
            const double onehot = (std::size_t(y) == c) ? 1.0 : 0.0;
            res.grad.at2(b, c) =
                static_cast<T>(wb * (static_cast<double>(probs.at2(b, c)) - onehot) / double(B));
        }
    }
    res.loss = sum / double(B);
    return res;
}

}  // namespace lids

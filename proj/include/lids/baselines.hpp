#pragma once

#include <cstdint>
#include <vector>

#include "lids/dataset.hpp"
#include "lids/layers.hpp"
#include "lids/loss.hpp"
#include "lids/model.hpp"

// Reference classifiers for the comparison rows: logistic regression
// (mini-batch gradient descent on the shared cross-entropy losses) and
// exact brute-force KNN.

namespace lids {

struct LogRegModel {
    DenseParamsT<float> dense;  // [C_out, 42]; C_out = 1 binary, C multiclass
    bool binary = true;
    bool trained = false;
};

struct LogRegConfig {
    std::size_t epochs = 20;
    std::size_t batch = 256;
    double lr = 0.05;
    std::uint64_t seed = 0;
    Weighting weighting = Weighting::uniform;
};

// features [N,F,1] or [N,F]; labels from the dataset per `binary`.
LogRegModel logreg_fit(const EncodedDataset& train, bool binary, const LogRegConfig& cfg);
std::vector<int> logreg_predict(const LogRegModel& model, const Tensor& features,
                                double threshold = 0.5);

struct KnnIndex {
    Tensor features;  // [N, F]
    std::vector<int> labels;
    std::size_t k = 5;
    std::size_t num_classes = 2;
};

KnnIndex knn_build(const EncodedDataset& train, bool binary, std::size_t k);
std::vector<int> knn_predict(const KnnIndex& index, const Tensor& features);

}  // namespace lids

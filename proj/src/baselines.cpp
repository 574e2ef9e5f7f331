#include "lids/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "lids/adam.hpp"
#include "lids/kernels.hpp"

namespace lids {

namespace {

// [N,F,1] or [N,F] -> [N,F]
Tensor flatten_features(const Tensor& features) {
    if (features.rank() == 2) return features;
    if (features.rank() == 3 && features.dim(2) == 1)
        return Tensor({features.dim(0), features.dim(1)}, features.data);
    throw ShapeError("baselines: features must be [N,F] or [N,F,1]");
}

}  // namespace

LogRegModel logreg_fit(const EncodedDataset& train, bool binary, const LogRegConfig& cfg) {
    if (cfg.epochs < 1) throw TrainError("logreg_fit: epochs must be >= 1");
    Tensor x = flatten_features(train.features);
    const std::size_t N = x.dim(0), F = x.dim(1);
    const std::vector<int>& labels = binary ? train.label_binary : train.label_multi;
    const std::size_t C = binary ? 2 : unsw_class_names().size();

    ClassWeights weights = ClassWeights::uniform(C);
    if (cfg.weighting == Weighting::inverse_frequency) {
        std::vector<std::size_t> counts(C, 0);
        for (int y : labels) ++counts[std::size_t(y)];
        std::vector<std::size_t> present, present_idx;
        for (std::size_t c = 0; c < C; ++c)
            if (counts[c]) { present.push_back(counts[c]); present_idx.push_back(c); }
        if (present.size() >= 2) {
            auto w = inverse_frequency_weights(present);
            for (std::size_t k = 0; k < present.size(); ++k)
                weights.weights[present_idx[k]] = w.weights[k];
        }
    }

    LogRegModel model;
    model.binary = binary;
    const std::size_t O = binary ? 1 : C;
    std::mt19937 rng(std::uint32_t(cfg.seed));
    model.dense.weights = Tensor({O, F});
    model.dense.bias = Tensor({O});
    glorot_fill(model.dense.weights, F, O, rng);

    AdamState adam;
    adam.lr = cfg.lr;
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t begin = 0; begin < N; begin += cfg.batch) {
            const std::size_t end = std::min(begin + cfg.batch, N);
            Tensor batch({end - begin, F});
            std::vector<int> y(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                std::copy(x.ptr() + order[i] * F, x.ptr() + (order[i] + 1) * F,
                          batch.ptr() + (i - begin) * F);
                y[i - begin] = labels[order[i]];
            }
            DenseCache<float> cache;
            Tensor logits = dense_forward(batch, model.dense, &cache);
            Tensor grad_logits;
            if (binary) {
                Tensor prob = activation_forward(logits, Activation::sigmoid);
                auto res = weighted_bce(prob, y, weights);
                grad_logits = activation_backward(res.grad, logits, prob, Activation::sigmoid);
            } else {
                grad_logits = weighted_categorical_ce(logits, y, weights).grad;
            }
            auto [gin, grads] = dense_backward(grad_logits, model.dense, cache);
            (void)gin;
            adam_step<float>({&model.dense.weights, &model.dense.bias},
                             {&grads.weights, &grads.bias}, adam);
        }
    }
    model.trained = true;
    return model;
}

std::vector<int> logreg_predict(const LogRegModel& model, const Tensor& features,
                                double threshold) {
    if (!model.trained) throw TrainError("logreg_predict: model not trained");
    Tensor x = flatten_features(features);
    Tensor logits = dense_forward(x, model.dense);
    const std::size_t N = logits.dim(0), O = logits.dim(1);
    std::vector<int> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        if (model.binary) {
            out[i] = double(sigmoid_fn(logits[i])) >= threshold ? 1 : 0;
        } else {
            std::size_t arg = 0;
            for (std::size_t c = 1; c < O; ++c)
                if (logits.at2(i, c) > logits.at2(i, arg)) arg = c;
            out[i] = int(arg);
        }
    }
    return out;
}

KnnIndex knn_build(const EncodedDataset& train, bool binary, std::size_t k) {
    KnnIndex idx;
    idx.features = flatten_features(train.features);
    idx.labels = binary ? train.label_binary : train.label_multi;
    idx.num_classes = binary ? 2 : unsw_class_names().size();
    if (idx.labels.empty()) throw DataError("knn_build: empty index");
    if (k < 1 || k > idx.labels.size())
        throw DataError("knn_build: k must be in [1, N]");
    idx.k = k;
    return idx;
}

std::vector<int> knn_predict(const KnnIndex& index, const Tensor& features) {
    if (index.labels.empty()) throw DataError("knn_predict: empty index");
    Tensor q = flatten_features(features);
    const std::size_t N = index.labels.size(), F = index.features.dim(1);
    if (q.dim(1) != F) throw ShapeError("knn_predict: feature width mismatch");
    const std::size_t Q = q.dim(0), k = index.k;

    // |a-b|^2 = |a|^2 - 2 a.b + |b|^2 ; |b|^2 precomputed per index row
    std::vector<float> norms(N);
    for (std::size_t i = 0; i < N; ++i) {
        const float* row = index.features.ptr() + i * F;
        norms[i] = kernels::dot(row, row, F);
    }

    std::vector<int> out(Q);
    std::vector<std::pair<float, std::size_t>> dist(N);
    for (std::size_t qi = 0; qi < Q; ++qi) {
        const float* qrow = q.ptr() + qi * F;
        for (std::size_t i = 0; i < N; ++i) {
            const float* row = index.features.ptr() + i * F;
            dist[i] = {norms[i] - 2.0f * kernels::dot(row, qrow, F), i};
        }
        std::partial_sort(dist.begin(), dist.begin() + std::ptrdiff_t(k), dist.end());
        std::vector<std::size_t> votes(index.num_classes, 0);
        for (std::size_t j = 0; j < k; ++j) ++votes[std::size_t(index.labels[dist[j].second])];
        std::size_t best = 0;  // vote ties break toward the smallest class index
        for (std::size_t c = 1; c < votes.size(); ++c)
            if (votes[c] > votes[best]) best = c;
        out[qi] = int(best);
    }
    return out;
}

}  // namespace lids

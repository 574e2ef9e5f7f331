#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lids/dataset.hpp"
#include "lids/layers.hpp"
#include "lids/loss.hpp"
#include "lids/tensor.hpp"

// The CNN-BiLSTM stack: input [B,42,1] -> Conv1D(F,K,relu) -> MaxPool(pool)
// -> BiLSTM(H) -> final-state concat [2H] -> Dense(head).

namespace lids {

struct ModelFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Head { binary, multiclass };

struct ModelConfig {
    std::size_t conv_filters = 32;
    std::size_t conv_kernel = 3;
    Padding padding = Padding::same;
    std::size_t pool = 2;
    std::size_t hidden = 16;
    Head head = Head::binary;
    double dropout = 0.0;
    std::size_t input_len = 42;
    std::size_t input_channels = 1;

    std::size_t head_width() const { return head == Head::binary ? 1 : 10; }
    void validate() const;
};

enum class Weighting { uniform, inverse_frequency };

struct TrainConfig {
    std::size_t epochs = 15;
    std::size_t batch = 256;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    Weighting weighting = Weighting::uniform;
    bool deterministic = false;
    double validation_fraction = 0.0;
};

struct ModelParams {
    Conv1DParamsT<float> conv;
    BiLstmParamsT<float> bilstm;
    DenseParamsT<float> dense;
};

struct EpochStats {
    double train_loss = 0;
    double val_loss = 0;
    double val_accuracy = 0;
    double seconds = 0;
};

struct TrainingHistory {
    std::vector<EpochStats> epochs;
};

struct TrainedModel {
    ModelConfig config;
    ModelParams params;
    EncoderState encoder;
    std::vector<std::string> class_names;
    // training metadata
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    double final_loss = 0;
};

// Closed-form trainable parameter count for a config.
std::size_t param_count(const ModelConfig& cfg);
// Enumerated count of stored scalars.
std::size_t param_count(const ModelParams& params);

ModelParams build(const ModelConfig& cfg, std::uint64_t seed);

std::pair<TrainedModel, TrainingHistory> fit(const ModelConfig& cfg,
                                             const ModelParams& init,
                                             const EncodedDataset& train,
                                             const EncoderState& encoder,
                                             const TrainConfig& tc);

// [N,1] sigmoid probabilities or [N,10] softmax rows.
Tensor predict_proba(const TrainedModel& model, const Tensor& features);
std::vector<int> predict_labels(const TrainedModel& model, const Tensor& features,
                                double threshold = 0.5);

// Model file: "LIDS" magic, u16 LE version, u32 LE header length, JSON header
// (config, encoder, class map, metadata, layer manifest with shapes/offsets),
// LE float32 scalars in manifest order, trailing CRC32 (LE) of all prior bytes.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

// Manifest-ordered walk over every parameter tensor (name, tensor).
std::vector<std::pair<std::string, const Tensor*>> param_manifest(const ModelParams& p);
std::vector<std::pair<std::string, Tensor*>> param_manifest(ModelParams& p);

// Human-readable layer/param summary used by `inspect`.
std::string describe_model(const TrainedModel& model, bool as_json);

}  // namespace lids

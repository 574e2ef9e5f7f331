#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lids/tensor.hpp"

// UNSW-NB15 ingestion: CSV loading, train-fitted vocabularies and min-max
// statistics, transformation to [N,42,1] tensors, and split utilities.

namespace lids {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class FeatureKind { numeric, categorical };

struct FeatureSchema {
    struct Feature {
        std::string name;
        FeatureKind kind;
    };
    std::vector<Feature> features;  // exactly 42, fixed order

    // The official train/test CSV feature set (proto/service/state categorical).
    static const FeatureSchema& unsw_nb15();
    std::size_t index_of(const std::string& name) const;  // -1 exception on miss
};

// Table I categories; index 0 is Normal, the rest follow table order.
const std::vector<std::string>& unsw_class_names();
int class_index(const std::string& attack_cat);  // throws DataError on unknown

// Row-parsed CSV content, column-per-feature.
struct RawRecords {
    std::size_t n = 0;
    // Parallel to FeatureSchema order; numeric features fill `numeric`,
    // categorical fill `categorical`, the other vector stays empty.
    std::vector<std::vector<double>> numeric;
    std::vector<std::vector<std::string>> categorical;
    std::vector<std::string> attack_cat;  // empty when the file carries no labels
    std::vector<int> label;
    bool has_labels = false;
};

RawRecords load_csv(const std::string& path);

struct EncoderState {
    struct CatVocab {
        // string -> index, 1-based by descending train frequency; 0 = unknown
        std::map<std::string, int> index;
    };
    struct Range {
        double min = 0, max = 0;
        bool log1p = false;  // applied before the range was computed
    };
    // Parallel to schema order; vocab only populated for categorical features.
    std::vector<CatVocab> vocabs;
    std::vector<Range> ranges;
    bool fitted = false;
};

EncoderState fit_encoders(const RawRecords& train);

struct EncodedDataset {
    Tensor features;  // [N, 42, 1]
    std::vector<int> label_binary;
    std::vector<int> label_multi;
    std::string provenance;

    std::size_t size() const { return label_binary.size(); }
};

EncodedDataset transform(const RawRecords& records, const EncoderState& state,
                         const std::string& provenance);

std::pair<EncodedDataset, EncodedDataset> split_random_stratified(
    const EncodedDataset& ds, double test_fraction, std::uint64_t seed);

EncodedDataset subsample_fraction(const EncodedDataset& ds, double fraction,
                                  std::uint64_t seed, bool stratified);

EncodedDataset concat(const EncodedDataset& a, const EncodedDataset& b,
                      const std::string& provenance);

// Counts per class; binary=true gives {normal, attack}.
std::vector<std::size_t> class_distribution(const EncodedDataset& ds, bool binary);

// Cache file: 4-byte magic, u32 LE header length, JSON header (schema kinds,
// encoder state, provenance, counts), raw LE float32 features, then one byte
// per record for each label array. Byte-exact across reruns.
void save_encoded(const EncodedDataset& ds, const EncoderState& state,
                  const std::string& path);
std::pair<EncodedDataset, EncoderState> load_encoded(const std::string& path);

// JSON (de)serialization of the encoder, shared with the model file header.
std::string encoder_to_json(const EncoderState& state);
EncoderState encoder_from_json(const std::string& json);

}  // namespace lids

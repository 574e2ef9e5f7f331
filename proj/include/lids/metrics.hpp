#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lids {

struct MetricsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Rows = actual, columns = predicted.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::uint64_t> counts;  // classes x classes, row-major
    std::vector<std::string> class_names;

    std::uint64_t& at(std::size_t actual, std::size_t predicted) {
        return counts[actual * classes + predicted];
    }
    std::uint64_t at(std::size_t actual, std::size_t predicted) const {
        return counts[actual * classes + predicted];
    }
    std::uint64_t total() const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& actual,
                                 const std::vector<int>& predicted,
                                 std::size_t classes,
                                 std::vector<std::string> class_names = {});

struct PerClassMetrics {
    std::string name;
    double precision = 0, recall = 0, f1 = 0;
    std::uint64_t support = 0;
    bool zero_flagged = false;  // a denominator was zero; metric reported as 0
};

struct MetricsReport {
    std::string model_name;
    // headline metrics: binary = attack class; multiclass = weighted averages
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    bool zero_flagged = false;
    std::vector<PerClassMetrics> per_class;  // multiclass only
    double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
    double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0;
    double train_s = 0, predict_s = 0;
    ConfusionMatrix cm;
};

// Positive class = attack (index 1).
MetricsReport binary_metrics(const ConfusionMatrix& cm);
MetricsReport multiclass_metrics(const ConfusionMatrix& cm);

enum class ReportFormat { text, json };
std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format);

}  // namespace lids

#include "lids/metrics.hpp"

#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"

using nlohmann::json;

namespace lids {

std::uint64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t(0));
}

ConfusionMatrix confusion_matrix(const std::vector<int>& actual,
                                 const std::vector<int>& predicted,
                                 std::size_t classes,
                                 std::vector<std::string> class_names) {
    if (actual.empty()) throw MetricsError("confusion_matrix: empty input");
    if (actual.size() != predicted.size())
        throw MetricsError("confusion_matrix: actual/predicted length mismatch");
    ConfusionMatrix cm;
    cm.classes = classes;
    cm.counts.assign(classes * classes, 0);
    cm.class_names = std::move(class_names);
    if (cm.class_names.empty())
        for (std::size_t c = 0; c < classes; ++c)
            cm.class_names.push_back("class_" + std::to_string(c));
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (actual[i] < 0 || std::size_t(actual[i]) >= classes ||
            predicted[i] < 0 || std::size_t(predicted[i]) >= classes)
            throw MetricsError("confusion_matrix: label out of range at index " +
                               std::to_string(i));
        ++cm.at(std::size_t(actual[i]), std::size_t(predicted[i]));
    }
    return cm;
}

namespace {

// 0-with-flag on zero denominators, never NaN
double ratio(double num, double den, bool& flag) {
    if (den == 0) { flag = true; return 0.0; }
    return num / den;
}

double f1_of(double p, double r, bool& flag) {
    if (p + r == 0) { flag = true; return 0.0; }
    return 2 * p * r / (p + r);
}

}  // namespace

MetricsReport binary_metrics(const ConfusionMatrix& cm) {
    if (cm.classes != 2) throw MetricsError("binary_metrics: matrix must be 2x2");
    const double tn = double(cm.at(0, 0)), fp = double(cm.at(0, 1));
    const double fn = double(cm.at(1, 0)), tp = double(cm.at(1, 1));
    MetricsReport r;
    r.cm = cm;
    r.accuracy = ratio(tp + tn, tp + tn + fp + fn, r.zero_flagged);
    r.recall = ratio(tp, tp + fn, r.zero_flagged);
    r.precision = ratio(tp, tp + fp, r.zero_flagged);
    r.f1 = f1_of(r.precision, r.recall, r.zero_flagged);
    return r;
}

MetricsReport multiclass_metrics(const ConfusionMatrix& cm) {
    if (cm.classes < 2) throw MetricsError("multiclass_metrics: need >= 2 classes");
    MetricsReport r;
    r.cm = cm;
    const double total = double(cm.total());
    double trace = 0;
    for (std::size_t c = 0; c < cm.classes; ++c) trace += double(cm.at(c, c));
    r.accuracy = ratio(trace, total, r.zero_flagged);

    double wsum = 0;
    for (std::size_t c = 0; c < cm.classes; ++c) {
        PerClassMetrics pc;
        pc.name = cm.class_names[c];
        double tp = double(cm.at(c, c)), fp = 0, fn = 0;
        for (std::size_t k = 0; k < cm.classes; ++k) {
            if (k == c) continue;
            fp += double(cm.at(k, c));
            fn += double(cm.at(c, k));
        }
        pc.support = 0;
        for (std::size_t k = 0; k < cm.classes; ++k) pc.support += cm.at(c, k);
        pc.precision = ratio(tp, tp + fp, pc.zero_flagged);
        pc.recall = ratio(tp, tp + fn, pc.zero_flagged);
        pc.f1 = f1_of(pc.precision, pc.recall, pc.zero_flagged);

        r.macro_precision += pc.precision / double(cm.classes);
        r.macro_recall += pc.recall / double(cm.classes);
        r.macro_f1 += pc.f1 / double(cm.classes);
        r.weighted_precision += pc.precision * double(pc.support);
        r.weighted_recall += pc.recall * double(pc.support);
        r.weighted_f1 += pc.f1 * double(pc.support);
        r.zero_flagged = r.zero_flagged || pc.zero_flagged;
        wsum += double(pc.support);
        r.per_class.push_back(std::move(pc));
    }
    if (wsum > 0) {
        r.weighted_precision /= wsum;
        r.weighted_recall /= wsum;
        r.weighted_f1 /= wsum;
    }
    // headline = weighted averages (macro also carried)
    r.precision = r.weighted_precision;
    r.recall = r.weighted_recall;
    r.f1 = r.weighted_f1;
    return r;
}

namespace {

json report_json(const MetricsReport& r) {
    json j;
    if (!r.model_name.empty()) j["model"] = r.model_name;
    j["accuracy"] = r.accuracy;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    j["zero_flagged"] = r.zero_flagged;
    j["timing"] = {{"train_s", r.train_s}, {"predict_s", r.predict_s}};
    if (!r.per_class.empty()) {
        json pcs = json::array();
        for (const auto& pc : r.per_class)
            pcs.push_back({{"name", pc.name},
                           {"precision", pc.precision},
                           {"recall", pc.recall},
                           {"f1", pc.f1},
                           {"support", pc.support},
                           {"zero_flagged", pc.zero_flagged}});
        j["per_class"] = pcs;
        j["macro"] = {{"precision", r.macro_precision},
                      {"recall", r.macro_recall},
                      {"f1", r.macro_f1}};
        j["weighted"] = {{"precision", r.weighted_precision},
                         {"recall", r.weighted_recall},
                         {"f1", r.weighted_f1}};
    }
    if (r.cm.classes) {
        json rows = json::array();
        for (std::size_t a = 0; a < r.cm.classes; ++a) {
            json row = json::array();
            for (std::size_t p = 0; p < r.cm.classes; ++p) row.push_back(r.cm.at(a, p));
            rows.push_back(row);
        }
        j["confusion_matrix"] = {{"classes", r.cm.class_names}, {"rows_actual", rows}};
    }
    return j;
}

std::string pct(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v * 100.0 << "%";
    return os.str();
}

std::string secs(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << v;
    return os.str();
}

}  // namespace

std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format) {
    if (reports.empty()) throw MetricsError("render_report: no reports");
    if (format == ReportFormat::json) {
        json j = json::array();
        for (const auto& r : reports) j.push_back(report_json(r));
        return j.dump(2);
    }
    std::ostringstream os;
    // Column order mirrors the binary comparison table:
    // accuracy, recall, precision, F1, train time, predict time, total time.
    os << std::left << std::setw(22) << "model" << std::right << std::setw(10) << "accuracy"
       << std::setw(10) << "recall" << std::setw(11) << "precision" << std::setw(10) << "f1"
       << std::setw(10) << "train(s)" << std::setw(12) << "predict(s)"
       << std::setw(10) << "total(s)" << "\n";
    for (const auto& r : reports) {
        os << std::left << std::setw(22) << (r.model_name.empty() ? "model" : r.model_name)
           << std::right << std::setw(10) << pct(r.accuracy) << std::setw(10) << pct(r.recall)
           << std::setw(11) << pct(r.precision) << std::setw(10) << pct(r.f1)
           << std::setw(10) << secs(r.train_s) << std::setw(12) << secs(r.predict_s)
           << std::setw(10) << secs(r.train_s + r.predict_s) << "\n";
    }
    for (const auto& r : reports) {
        if (r.per_class.empty() && !r.cm.classes) continue;
        os << "\n" << (r.model_name.empty() ? "model" : r.model_name) << ":\n";
        if (!r.per_class.empty()) {
            os << std::left << std::setw(18) << "  class" << std::right << std::setw(11)
               << "precision" << std::setw(10) << "recall" << std::setw(10) << "f1"
               << std::setw(10) << "support" << "\n";
            for (const auto& pc : r.per_class)
                os << "  " << std::left << std::setw(16) << pc.name << std::right
                   << std::setw(11) << pct(pc.precision) << std::setw(10) << pct(pc.recall)
                   << std::setw(10) << pct(pc.f1) << std::setw(10) << pc.support << "\n";
            os << "  macro avg:    " << pct(r.macro_precision) << " / " << pct(r.macro_recall)
               << " / " << pct(r.macro_f1) << "\n"
               << "  weighted avg: " << pct(r.weighted_precision) << " / "
               << pct(r.weighted_recall) << " / " << pct(r.weighted_f1) << "\n";
        }
        if (r.cm.classes) {
            os << "  confusion matrix (rows = actual):\n";
            for (std::size_t a = 0; a < r.cm.classes; ++a) {
                os << "    " << std::left << std::setw(16) << r.cm.class_names[a] << std::right;
                for (std::size_t p = 0; p < r.cm.classes; ++p)
                    os << std::setw(9) << r.cm.at(a, p);
                os << "\n";
            }
        }
    }
    return os.str();
}

}  // namespace lids

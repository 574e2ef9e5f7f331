// lids: train, evaluate, and inspect the CNN-BiLSTM flow classifier.
//
// Commands: prepare, train, evaluate, predict, inspect. Configuration comes
// from an optional JSON file (--config) with command-line flags taking
// precedence. Exit codes: 0 success, 2 usage/config error, 3 data or model
// integrity error, 4 training abort.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "lids/baselines.hpp"
#include "lids/dataset.hpp"
#include "lids/kernels.hpp"
#include "lids/metrics.hpp"
#include "lids/model.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIntegrity = 3;
constexpr int kExitTraining = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SplitKind { official, random_fraction, subsample };

struct SplitPolicy {
    SplitKind kind = SplitKind::official;
    double fraction = 0.0;
};

SplitPolicy parse_split(const std::string& text) {
    SplitPolicy s;
    if (text == "official") return s;
    auto with_fraction = [&](const std::string& prefix, SplitKind kind) -> bool {
        if (text.rfind(prefix, 0) != 0) return false;
        s.kind = kind;
        try {
            s.fraction = std::stod(text.substr(prefix.size()));
        } catch (const std::exception&) {
            throw UsageError("--split: bad fraction in '" + text + "'");
        }
        if (!(s.fraction > 0.0 && s.fraction < 1.0))
            throw UsageError("--split: fraction must be in (0,1), got '" + text + "'");
        return true;
    };
    if (with_fraction("random:", SplitKind::random_fraction)) return s;
    if (with_fraction("subsample:", SplitKind::subsample)) return s;
    throw UsageError("--split: expected official, random:F, or subsample:F, got '" +
                     text + "'");
}

// Everything a command can take, merged from the config file and flags.
struct RunConfig {
    lids::ModelConfig model;
    lids::TrainConfig train;
    SplitPolicy split;
    std::string train_data, test_data, input, model_path, out;
    std::string format = "text";
    std::size_t threads = 1;
};

const char* kKnownKeys[] = {
    "conv_filters", "conv_kernel", "padding", "pool",     "hidden",
    "head",         "dropout",     "epochs",  "batch",    "lr",
    "seed",         "weighting",   "deterministic",       "split",
    "train_data",   "test_data",   "input",   "model",    "out",
    "format",       "threads",     "validation_fraction",
};

lids::Head parse_head(const std::string& v) {
    if (v == "binary") return lids::Head::binary;
    if (v == "multiclass") return lids::Head::multiclass;
    throw UsageError("head must be binary or multiclass, got '" + v + "'");
}

lids::Weighting parse_weighting(const std::string& v) {
    if (v == "uniform") return lids::Weighting::uniform;
    if (v == "inverse-frequency") return lids::Weighting::inverse_frequency;
    throw UsageError("weighting must be uniform or inverse-frequency, got '" + v + "'");
}

void apply_config_file(RunConfig& rc, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("config " + path + ": " + e.what());
    }
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* k : kKnownKeys) known = known || key == k;
        if (!known) throw UsageError("config " + path + ": unknown key '" + key + "'");
        (void)value;
    }
    try {
        if (j.contains("conv_filters")) rc.model.conv_filters = j["conv_filters"];
        if (j.contains("conv_kernel")) rc.model.conv_kernel = j["conv_kernel"];
        if (j.contains("padding"))
            rc.model.padding = j["padding"] == "same" ? lids::Padding::same
                                                      : lids::Padding::valid;
        if (j.contains("pool")) rc.model.pool = j["pool"];
        if (j.contains("hidden")) rc.model.hidden = j["hidden"];
        if (j.contains("head")) rc.model.head = parse_head(j["head"]);
        if (j.contains("dropout")) rc.model.dropout = j["dropout"];
        if (j.contains("epochs")) rc.train.epochs = j["epochs"];
        if (j.contains("batch")) rc.train.batch = j["batch"];
        if (j.contains("lr")) rc.train.lr = j["lr"];
        if (j.contains("seed")) rc.train.seed = j["seed"];
        if (j.contains("weighting")) rc.train.weighting = parse_weighting(j["weighting"]);
        if (j.contains("deterministic")) rc.train.deterministic = j["deterministic"];
        if (j.contains("validation_fraction"))
            rc.train.validation_fraction = j["validation_fraction"];
        if (j.contains("split")) rc.split = parse_split(j["split"]);
        if (j.contains("train_data")) rc.train_data = j["train_data"];
        if (j.contains("test_data")) rc.test_data = j["test_data"];
        if (j.contains("input")) rc.input = j["input"];
        if (j.contains("model")) rc.model_path = j["model"];
        if (j.contains("out")) rc.out = j["out"];
        if (j.contains("format")) rc.format = j["format"];
        if (j.contains("threads")) rc.threads = j["threads"];
    } catch (const json::exception& e) {
        throw UsageError("config " + path + ": " + e.what());
    }
}

void require_readable(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError(what + ": no path given");
    if (!fs::is_regular_file(path)) throw UsageError(what + ": no such file: " + path);
}

bool is_cache_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[4] = {};
    in.read(magic, 4);
    return in && std::string(magic, 4) == "LIDC";
}

// A CSV needs an encoder; caches carry their own.
struct LoadedData {
    lids::EncodedDataset ds;
    std::optional<lids::EncoderState> encoder;
};

LoadedData load_data(const std::string& path, const lids::EncoderState* encoder) {
    LoadedData out;
    if (is_cache_file(path)) {
        auto [ds, st] = lids::load_encoded(path);
        out.ds = std::move(ds);
        out.encoder = std::move(st);
        return out;
    }
    auto raw = lids::load_csv(path);
    if (encoder) {
        out.ds = lids::transform(raw, *encoder, path);
        out.encoder = *encoder;
    } else {
        out.encoder = lids::fit_encoders(raw);
        out.ds = lids::transform(raw, *out.encoder, path);
    }
    return out;
}

// Resolve the split policy into (train part, eval part). Data not needed for
// the requested side may be left empty by passing an empty path.
struct SplitResult {
    lids::EncodedDataset train, eval;
    lids::EncoderState encoder;
};

SplitResult resolve_split(const RunConfig& rc, const lids::EncoderState* fixed_encoder,
                          bool need_train, bool need_eval) {
    SplitResult r;
    switch (rc.split.kind) {
        case SplitKind::official: {
            if (need_train) {
                require_readable(rc.train_data, "--train-data");
                auto t = load_data(rc.train_data, fixed_encoder);
                r.train = std::move(t.ds);
                r.encoder = *t.encoder;
            }
            if (need_eval) {
                require_readable(rc.test_data, "--test-data");
                const lids::EncoderState* enc =
                    fixed_encoder ? fixed_encoder : (need_train ? &r.encoder : nullptr);
                if (!enc)
                    throw UsageError("evaluating a CSV needs the model's encoder");
                auto t = load_data(rc.test_data, enc);
                r.eval = std::move(t.ds);
                if (!need_train) r.encoder = *t.encoder;
            }
            return r;
        }
        case SplitKind::random_fraction: {
            require_readable(rc.train_data, "--train-data");
            auto a = load_data(rc.train_data, fixed_encoder);
            lids::EncodedDataset all = std::move(a.ds);
            r.encoder = *a.encoder;
            if (!rc.test_data.empty()) {
                require_readable(rc.test_data, "--test-data");
                auto b = load_data(rc.test_data, &r.encoder);
                all = lids::concat(all, b.ds, "combined");
            }
            auto [tr, te] =
                lids::split_random_stratified(all, rc.split.fraction, rc.train.seed);
            r.train = std::move(tr);
            r.eval = std::move(te);
            return r;
        }
        case SplitKind::subsample: {
            const bool eval_side = need_eval && !need_train;
            const std::string& path = eval_side ? rc.test_data : rc.train_data;
            require_readable(path, eval_side ? "--test-data" : "--train-data");
            auto t = load_data(path, fixed_encoder);
            r.encoder = *t.encoder;
            auto sub =
                lids::subsample_fraction(t.ds, rc.split.fraction, rc.train.seed, true);
            (eval_side ? r.eval : r.train) = std::move(sub);
            return r;
        }
    }
    throw UsageError("unreachable split kind");
}

void write_or_print(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << "\n";
        return;
    }
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw UsageError("cannot write " + out_path);
    out << text;
}

std::string distribution_text(const lids::EncodedDataset& ds) {
    std::ostringstream os;
    os << ds.size() << " records";
    auto counts = lids::class_distribution(ds, false);
    const auto& names = lids::unsw_class_names();
    os << " (";
    bool first = true;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (!counts[c]) continue;
        if (!first) os << ", ";
        os << names[c] << ": " << counts[c];
        first = false;
    }
    os << ")";
    return os.str();
}

int cmd_prepare(const RunConfig& rc) {
    require_readable(rc.train_data, "--train-data");
    require_readable(rc.test_data, "--test-data");
    const std::string out_dir = rc.out.empty() ? "." : rc.out;
    fs::create_directories(out_dir);

    auto train_raw = lids::load_csv(rc.train_data);
    auto test_raw = lids::load_csv(rc.test_data);
    auto encoder = lids::fit_encoders(train_raw);
    auto train = lids::transform(train_raw, encoder, "official-train");
    auto test = lids::transform(test_raw, encoder, "official-test");

    const std::string train_out = (fs::path(out_dir) / "train.lidc").string();
    const std::string test_out = (fs::path(out_dir) / "test.lidc").string();
    lids::save_encoded(train, encoder, train_out);
    lids::save_encoded(test, encoder, test_out);

    std::cout << "train: " << distribution_text(train) << " -> " << train_out << "\n"
              << "test:  " << distribution_text(test) << " -> " << test_out << "\n";
    return 0;
}

int cmd_train(const RunConfig& rc) {
    auto data = resolve_split(rc, nullptr, true, false);
    rc.model.validate();

    if (rc.train.weighting == lids::Weighting::inverse_frequency) {
        const bool binary = rc.model.head == lids::Head::binary;
        auto counts = lids::class_distribution(data.train, binary);
        std::vector<std::size_t> present;
        std::vector<std::string> present_names;
        const auto& names = lids::unsw_class_names();
        for (std::size_t c = 0; c < counts.size(); ++c)
            if (counts[c]) {
                present.push_back(counts[c]);
                present_names.push_back(binary ? (c ? "Attack" : "Normal") : names[c]);
            }
        if (present.size() >= 2) {
            auto w = lids::inverse_frequency_weights(present);
            std::cout << "class weights:";
            for (std::size_t k = 0; k < present.size(); ++k)
                std::cout << " " << present_names[k] << "=" << w.weights[k];
            std::cout << "\n";
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    auto init = lids::build(rc.model, rc.train.seed);
    auto [model, history] = lids::fit(rc.model, init, data.train, data.encoder, rc.train);
    const double train_s = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - t0)
                               .count();

    for (std::size_t e = 0; e < history.epochs.size(); ++e) {
        const auto& st = history.epochs[e];
        std::cout << "epoch " << (e + 1) << "/" << history.epochs.size()
                  << " loss=" << st.train_loss;
        if (rc.train.validation_fraction > 0)
            std::cout << " val_loss=" << st.val_loss << " val_acc=" << st.val_accuracy;
        std::cout << " (" << st.seconds << "s)\n";
    }

    const std::string out = rc.out.empty() ? "model.lids" : rc.out;
    lids::save_model(model, out);
    std::cout << "trained on " << data.train.size() << " records in " << train_s
              << "s; " << lids::param_count(model.params) << " parameters -> " << out
              << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& rc, bool head_given) {
    require_readable(rc.model_path, "--model");
    auto model = lids::load_model(rc.model_path);
    if (head_given && rc.model.head != model.config.head)
        throw UsageError(std::string("--head ") +
                         (rc.model.head == lids::Head::binary ? "binary" : "multiclass") +
                         " does not match the model's " +
                         (model.config.head == lids::Head::binary ? "binary"
                                                                  : "multiclass") +
                         " head");

    auto data = resolve_split(rc, &model.encoder, false, true);
    const bool binary = model.config.head == lids::Head::binary;
    const auto& labels = binary ? data.eval.label_binary : data.eval.label_multi;

    const auto t0 = std::chrono::steady_clock::now();
    auto predicted = lids::predict_labels(model, data.eval.features);
    const double predict_s = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();

    auto cm = lids::confusion_matrix(labels, predicted, binary ? 2 : 10,
                                     model.class_names);
    auto report = binary ? lids::binary_metrics(cm) : lids::multiclass_metrics(cm);
    report.model_name = "cnn-bilstm";
    report.predict_s = predict_s;
    const auto format =
        rc.format == "json" ? lids::ReportFormat::json : lids::ReportFormat::text;
    if (rc.format != "json" && rc.format != "text")
        throw UsageError("--format must be text or json, got '" + rc.format + "'");
    write_or_print(lids::render_report({report}, format), rc.out);
    return 0;
}

int cmd_predict(const RunConfig& rc) {
    require_readable(rc.model_path, "--model");
    require_readable(rc.input, "--input");
    auto model = lids::load_model(rc.model_path);
    auto raw = lids::load_csv(rc.input);
    auto ds = lids::transform(raw, model.encoder, rc.input);

    lids::Tensor proba = lids::predict_proba(model, ds.features);
    auto labels = lids::predict_labels(model, ds.features);
    const bool binary = model.config.head == lids::Head::binary;

    std::ostringstream os;
    os << "row,predicted";
    if (binary)
        os << ",p_attack";
    else
        for (const auto& name : model.class_names) os << ",p_" << name;
    os << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        os << (i + 1) << ","
           << (binary ? (labels[i] ? "Attack" : "Normal")
                      : model.class_names[std::size_t(labels[i])]);
        if (binary)
            os << "," << proba.at2(i, 0);
        else
            for (std::size_t c = 0; c < proba.dim(1); ++c) os << "," << proba.at2(i, c);
        os << "\n";
    }
    write_or_print(os.str(), rc.out);
    return 0;
}

int cmd_inspect(const RunConfig& rc) {
    require_readable(rc.model_path, "--model");
    auto model = lids::load_model(rc.model_path);
    write_or_print(lids::describe_model(model, rc.format == "json"), rc.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CNN-BiLSTM network-flow intrusion detection"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_path, head_text, weighting_text, split_text;

    auto add_shared = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file; flags override it");
        cmd->add_option("--seed", rc.train.seed, "seed for all randomness");
        cmd->add_option("--threads", rc.threads, "worker cap (compute is single-threaded)")
            ->check(CLI::PositiveNumber);
        cmd->add_flag("--deterministic", rc.train.deterministic,
                      "bitwise-reproducible training");
        cmd->add_option("--head", head_text, "binary | multiclass");
        cmd->add_option("--split", split_text, "official | random:F | subsample:F");
        cmd->add_option("--weighting", weighting_text, "uniform | inverse-frequency");
        cmd->add_option("--out", rc.out, "output path");
    };

    auto* prepare = app.add_subcommand("prepare", "encode official CSVs into caches");
    prepare->add_option("--train-csv,--train-data", rc.train_data, "training CSV");
    prepare->add_option("--test-csv,--test-data", rc.test_data, "test CSV");
    add_shared(prepare);

    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--train-data", rc.train_data, "training CSV or cache");
    train->add_option("--test-data", rc.test_data, "second CSV/cache for random splits");
    train->add_option("--epochs", rc.train.epochs, "training epochs");
    train->add_option("--batch", rc.train.batch, "mini-batch size");
    train->add_option("--lr", rc.train.lr, "Adam learning rate");
    train->add_option("--validation-fraction", rc.train.validation_fraction,
                      "held-out fraction for per-epoch validation");
    add_shared(train);

    auto* evaluate = app.add_subcommand("evaluate", "score a model on a dataset");
    evaluate->add_option("--model", rc.model_path, "model file");
    evaluate->add_option("--train-data", rc.train_data, "CSV/cache for random splits");
    evaluate->add_option("--test-data", rc.test_data, "evaluation CSV or cache");
    evaluate->add_option("--format", rc.format, "text | json");
    add_shared(evaluate);

    auto* predict = app.add_subcommand("predict", "label a CSV of flow records");
    predict->add_option("--model", rc.model_path, "model file");
    predict->add_option("--input", rc.input, "input CSV (labels optional)");
    add_shared(predict);

    auto* inspect = app.add_subcommand("inspect", "summarize a model file");
    inspect->add_option("--model", rc.model_path, "model file");
    inspect->add_option("--format", rc.format, "text | json");
    add_shared(inspect);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        // config file first, then re-apply flags so they win
        if (!config_path.empty()) {
            RunConfig from_file;
            apply_config_file(from_file, config_path);
            auto keep = rc;
            rc = from_file;
            for (auto* cmd : {prepare, train, evaluate, predict, inspect}) {
                if (!cmd->parsed()) continue;
                auto given = [&](const std::string& name) {
                    const auto* opt = cmd->get_option_no_throw(name);
                    return opt && opt->count() > 0;
                };
                if (given("--seed")) rc.train.seed = keep.train.seed;
                if (given("--threads")) rc.threads = keep.threads;
                if (given("--deterministic"))
                    rc.train.deterministic = keep.train.deterministic;
                if (given("--out")) rc.out = keep.out;
                if (given("--train-data") || given("--train-csv"))
                    rc.train_data = keep.train_data;
                if (given("--test-data") || given("--test-csv"))
                    rc.test_data = keep.test_data;
                if (given("--model")) rc.model_path = keep.model_path;
                if (given("--input")) rc.input = keep.input;
                if (given("--format")) rc.format = keep.format;
                if (given("--epochs")) rc.train.epochs = keep.train.epochs;
                if (given("--batch")) rc.train.batch = keep.train.batch;
                if (given("--lr")) rc.train.lr = keep.train.lr;
                if (given("--validation-fraction"))
                    rc.train.validation_fraction = keep.train.validation_fraction;
            }
        }
        if (!head_text.empty()) rc.model.head = parse_head(head_text);
        if (!split_text.empty()) rc.split = parse_split(split_text);
        if (!weighting_text.empty()) rc.train.weighting = parse_weighting(weighting_text);

        if (prepare->parsed()) return cmd_prepare(rc);
        if (train->parsed()) return cmd_train(rc);
        if (evaluate->parsed()) return cmd_evaluate(rc, !head_text.empty());
        if (predict->parsed()) return cmd_predict(rc);
        if (inspect->parsed()) return cmd_inspect(rc);
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const lids::TrainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTraining;
    } catch (const lids::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const lids::ModelFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIntegrity;
    }
}

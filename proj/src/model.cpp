#include "lids/model.hpp"

#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "lids/adam.hpp"

using nlohmann::json;

namespace lids {

void ModelConfig::validate() const {
    if (!conv_filters || !conv_kernel || !pool || !hidden || !input_len || !input_channels)
        throw ModelFormatError("model config: all extents must be positive");
    const std::size_t conv_len =
        padding == Padding::same ? input_len : input_len - conv_kernel + 1;
    if (padding == Padding::valid && input_len < conv_kernel)
        throw ModelFormatError("model config: input shorter than kernel");
    if (conv_len / pool == 0)
        throw ModelFormatError("model config: pool width leaves no time steps");
    if (dropout < 0.0 || dropout >= 1.0)
        throw ModelFormatError("model config: dropout must be in [0,1)");
}

std::size_t param_count(const ModelConfig& cfg) {
    const std::size_t F = cfg.conv_filters, K = cfg.conv_kernel, C = cfg.input_channels;
    const std::size_t H = cfg.hidden, D = F, O = cfg.head_width();
    return (F * K * C + F) + 2 * 4 * (H * D + H * H + H) + (O * 2 * H + O);
}

std::size_t param_count(const ModelParams& p) {
    std::size_t n = 0;
    for (const auto& [name, t] : param_manifest(p)) n += t->size();
    return n;
}

static const char* kGateNames[4] = {"i", "f", "g", "o"};

template <class P>
static auto manifest_impl(P& p) {
    using TensorPtr = decltype(&p.conv.weights);
    std::vector<std::pair<std::string, TensorPtr>> m;
    m.emplace_back("conv.weights", &p.conv.weights);
    m.emplace_back("conv.bias", &p.conv.bias);
    auto add_lstm = [&m](const char* dir, auto& lstm) {
        for (std::size_t g = 0; g < 4; ++g) {
            const std::string base = std::string("bilstm.") + dir + ".";
            m.emplace_back(base + "w_" + kGateNames[g], &lstm.w[g]);
            m.emplace_back(base + "u_" + kGateNames[g], &lstm.u[g]);
            m.emplace_back(base + "b_" + kGateNames[g], &lstm.b[g]);
        }
    };
    add_lstm("fwd", p.bilstm.forward);
    add_lstm("bwd", p.bilstm.backward);
    m.emplace_back("dense.weights", &p.dense.weights);
    m.emplace_back("dense.bias", &p.dense.bias);
    return m;
}

std::vector<std::pair<std::string, const Tensor*>> param_manifest(const ModelParams& p) {
    return manifest_impl(p);
}
std::vector<std::pair<std::string, Tensor*>> param_manifest(ModelParams& p) {
    return manifest_impl(p);
}

ModelParams build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937 rng(std::uint32_t(seed ^ (seed >> 32)));
    const std::size_t F = cfg.conv_filters, K = cfg.conv_kernel, C = cfg.input_channels;
    const std::size_t H = cfg.hidden, D = F, O = cfg.head_width();

    ModelParams p;
    p.conv.weights = Tensor({F, K, C});
    p.conv.bias = Tensor({F});
    p.conv.padding = cfg.padding;
    glorot_fill(p.conv.weights, K * C, F, rng);

    auto init_lstm = [&](LstmParamsT<float>& l) {
        l = make_lstm_params<float>(H, D);
        for (std::size_t g = 0; g < 4; ++g) {
            glorot_fill(l.w[g], D, H, rng);
            glorot_fill(l.u[g], H, H, rng);
        }
        for (auto& v : l.b[gate_f].data) v = 1.0f;  // forget gate open at start
    };
    init_lstm(p.bilstm.forward);
    init_lstm(p.bilstm.backward);

    p.dense.weights = Tensor({O, 2 * H});
    p.dense.bias = Tensor({O});
    glorot_fill(p.dense.weights, 2 * H, O, rng);
    return p;
}

// --------------------------------------------------------------- forward

namespace {

struct ForwardCache {
    Conv1DCache<float> conv;
    Tensor conv_out, relu_out;
    MaxPoolCache<float> pool;
    BiLstmCache<float> bilstm;
    Tensor final_in;      // bilstm final concat, possibly after dropout
    Tensor dropout_mask;  // empty outside of training
    DenseCache<float> dense;
};

Tensor forward_stack(const ModelConfig& cfg, const ModelParams& p, const Tensor& input,
                     ForwardCache* cache, std::mt19937* dropout_rng) {
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.conv_out = conv1d_forward(input, p.conv, cache ? &c.conv : nullptr);
    c.relu_out = activation_forward(c.conv_out, Activation::relu);
    Tensor pooled = maxpool1d_forward(c.relu_out, cfg.pool, cache ? &c.pool : nullptr);
    auto bi = bilstm_forward(pooled, p.bilstm, cache ? &c.bilstm : nullptr);
    c.final_in = std::move(bi.final);
    if (dropout_rng && cfg.dropout > 0.0) {
        c.dropout_mask = Tensor(c.final_in.shape);
        const float keep = float(1.0 - cfg.dropout);
        for (std::size_t i = 0; i < c.final_in.size(); ++i) {
            const bool drop = uniform<float>(*dropout_rng, 0.f, 1.f) < cfg.dropout;
            c.dropout_mask[i] = drop ? 0.0f : 1.0f / keep;
            c.final_in[i] *= c.dropout_mask[i];
        }
    }
    return dense_forward(c.final_in, p.dense, cache ? &c.dense : nullptr);
}

struct StackGrads {
    Conv1DGrads<float> conv;
    BiLstmGrads<float> bilstm;
    DenseGrads<float> dense;
};

StackGrads backward_stack(const Tensor& grad_logits, const ModelConfig& cfg,
                          const ModelParams& p, ForwardCache& c) {
    StackGrads g;
    g.bilstm = BiLstmGrads<float>{make_lstm_grads(p.bilstm.forward),
                                  make_lstm_grads(p.bilstm.backward)};
    auto [grad_final, dense_grads] = dense_backward(grad_logits, p.dense, c.dense);
    g.dense = std::move(dense_grads);
    if (c.dropout_mask.size())
        for (std::size_t i = 0; i < grad_final.size(); ++i)
            grad_final[i] *= c.dropout_mask[i];
    Tensor none;
    Tensor grad_pooled = bilstm_backward(none, grad_final, p.bilstm, c.bilstm, g.bilstm);
    Tensor grad_relu = maxpool1d_backward(grad_pooled, c.pool);
    Tensor grad_conv = activation_backward(grad_relu, c.conv_out, c.relu_out, Activation::relu);
    auto [grad_input, conv_grads] = conv1d_backward(grad_conv, p.conv, c.conv);
    (void)grad_input;
    g.conv = std::move(conv_grads);
    return g;
}

std::vector<const Tensor*> grads_manifest(const StackGrads& g) {
    std::vector<const Tensor*> m;
    m.push_back(&g.conv.weights);
    m.push_back(&g.conv.bias);
    auto add = [&m](const LstmGrads<float>& l) {
        for (std::size_t k = 0; k < 4; ++k) {
            m.push_back(&l.w[k]);
            m.push_back(&l.u[k]);
            m.push_back(&l.b[k]);
        }
    };
    add(g.bilstm.forward);
    add(g.bilstm.backward);
    m.push_back(&g.dense.weights);
    m.push_back(&g.dense.bias);
    return m;
}

Tensor slice_rows(const Tensor& features, const std::vector<std::size_t>& idx,
                  std::size_t begin, std::size_t end) {
    const std::size_t F = features.dim(1);
    Tensor out({end - begin, F, 1});
    for (std::size_t i = begin; i < end; ++i)
        std::copy(features.ptr() + idx[i] * F, features.ptr() + (idx[i] + 1) * F,
                  out.ptr() + (i - begin) * F);
    return out;
}

}  // namespace

std::pair<TrainedModel, TrainingHistory> fit(const ModelConfig& cfg,
                                             const ModelParams& init,
                                             const EncodedDataset& train,
                                             const EncoderState& encoder,
                                             const TrainConfig& tc) {
    cfg.validate();
    if (tc.epochs < 1) throw TrainError("fit: epochs must be >= 1");
    if (tc.batch < 1) throw TrainError("fit: batch size must be >= 1");
    if (train.size() == 0) throw TrainError("fit: empty training set");

    const bool binary = cfg.head == Head::binary;
    const std::size_t C = cfg.head_width() == 1 ? 2 : cfg.head_width();
    const std::vector<int>& labels = binary ? train.label_binary : train.label_multi;
    for (int y : labels)
        if (y < 0 || std::size_t(y) >= C)
            throw TrainError("fit: label out of range for head");

    // class weights; absent classes get weight 1 (never selected by the loss)
    ClassWeights weights = ClassWeights::uniform(C);
    if (tc.weighting == Weighting::inverse_frequency) {
        std::vector<std::size_t> counts(C, 0);
        for (int y : labels) ++counts[std::size_t(y)];
        std::vector<std::size_t> present;
        std::vector<std::size_t> present_idx;
        for (std::size_t c = 0; c < C; ++c)
            if (counts[c]) { present.push_back(counts[c]); present_idx.push_back(c); }
        if (present.size() >= 2) {
            auto w = inverse_frequency_weights(present);
            for (std::size_t k = 0; k < present.size(); ++k)
                weights.weights[present_idx[k]] = w.weights[k];
        }
    }

    // optional validation carve-out
    EncodedDataset train_set = train;
    EncodedDataset val_set;
    bool has_val = false;
    if (tc.validation_fraction > 0.0) {
        auto [tr, va] = split_random_stratified(train, tc.validation_fraction, tc.seed + 1);
        train_set = std::move(tr);
        val_set = std::move(va);
        has_val = true;
    }

    TrainedModel model;
    model.config = cfg;
    model.params = init;
    model.encoder = encoder;
    model.class_names = binary ? std::vector<std::string>{"Normal", "Attack"}
                               : unsw_class_names();
    model.seed = tc.seed;

    std::mt19937 shuffle_rng(std::uint32_t(tc.seed));
    std::mt19937 dropout_rng(std::uint32_t(tc.seed) + 17);
    AdamState adam;
    adam.lr = tc.lr;

    const std::vector<int>& tr_labels = binary ? train_set.label_binary
                                               : train_set.label_multi;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    TrainingHistory history;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += tc.batch) {
            const std::size_t end = std::min(begin + tc.batch, order.size());
            Tensor batch = slice_rows(train_set.features, order, begin, end);
            std::vector<int> y(end - begin);
            for (std::size_t i = begin; i < end; ++i) y[i - begin] = tr_labels[order[i]];

            ForwardCache cache;
            Tensor logits = forward_stack(cfg, model.params, batch, &cache,
                                          cfg.dropout > 0 ? &dropout_rng : nullptr);
            Tensor grad_logits;
            double loss;
            if (binary) {
                Tensor prob = activation_forward(logits, Activation::sigmoid);
                auto res = weighted_bce(prob, y, weights);
                loss = res.loss;
                grad_logits = activation_backward(res.grad, logits, prob, Activation::sigmoid);
            } else {
                auto res = weighted_categorical_ce(logits, y, weights);
                loss = res.loss;
                grad_logits = std::move(res.grad);
            }
            if (!std::isfinite(loss))
                throw TrainError("fit: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches));
            loss_sum += loss;
            ++batches;

            StackGrads grads = backward_stack(grad_logits, cfg, model.params, cache);
            auto pm = param_manifest(model.params);
            std::vector<Tensor*> ps;
            for (auto& [name, t] : pm) ps.push_back(t);
            adam_step<float>(ps, grads_manifest(grads), adam);
        }

        EpochStats stats;
        stats.train_loss = loss_sum / double(std::max<std::size_t>(batches, 1));
        if (has_val) {
            Tensor proba = predict_proba(model, val_set.features);
            const std::vector<int>& vy = binary ? val_set.label_binary : val_set.label_multi;
            std::size_t correct = 0;
            double vloss = 0;
            if (binary) {
                auto res = weighted_bce(proba, vy, weights);
                vloss = res.loss;
                for (std::size_t i = 0; i < vy.size(); ++i)
                    correct += (proba[i] >= 0.5f ? 1 : 0) == vy[i];
            } else {
                // loss over probabilities: recompute from logits is equivalent here
                for (std::size_t i = 0; i < vy.size(); ++i) {
                    const float* row = proba.ptr() + i * cfg.head_width();
                    vloss += -weights.weights[std::size_t(vy[i])] *
                             std::log(std::max(double(row[vy[i]]), 1e-30));
                    std::size_t arg = 0;
                    for (std::size_t c = 1; c < cfg.head_width(); ++c)
                        if (row[c] > row[arg]) arg = c;
                    correct += int(arg) == vy[i];
                }
                vloss /= double(vy.size());
            }
            stats.val_loss = vloss;
            stats.val_accuracy = double(correct) / double(vy.size());
        }
        stats.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.epochs.push_back(stats);
    }

    model.epochs = tc.epochs;
    model.final_loss = history.epochs.back().train_loss;
    return {std::move(model), std::move(history)};
}

Tensor predict_proba(const TrainedModel& model, const Tensor& features) {
    if (features.rank() != 3 || features.dim(1) != model.config.input_len ||
        features.dim(2) != model.config.input_channels)
        throw ShapeError("predict: features " + shape_str(features.shape) +
                         " do not match model input [N," +
                         std::to_string(model.config.input_len) + ",1]");
    const std::size_t N = features.dim(0), O = model.config.head_width();
    const std::size_t F = features.dim(1);
    Tensor out({N, O});
    const std::size_t chunk = 512;
    for (std::size_t begin = 0; begin < N; begin += chunk) {
        const std::size_t end = std::min(begin + chunk, N);
        Tensor batch({end - begin, F, 1});
        std::copy(features.ptr() + begin * F, features.ptr() + end * F, batch.ptr());
        Tensor logits = forward_stack(model.config, model.params, batch, nullptr, nullptr);
        Tensor proba = activation_forward(logits, model.config.head == Head::binary
                                                      ? Activation::sigmoid
                                                      : Activation::softmax);
        std::copy(proba.ptr(), proba.ptr() + proba.size(), out.ptr() + begin * O);
    }
    return out;
}

std::vector<int> predict_labels(const TrainedModel& model, const Tensor& features,
                                double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw ModelFormatError("predict: threshold must be in [0,1]");
    Tensor proba = predict_proba(model, features);
    const std::size_t N = proba.dim(0), O = proba.dim(1);
    std::vector<int> labels(N);
    for (std::size_t i = 0; i < N; ++i) {
        if (model.config.head == Head::binary) {
            labels[i] = double(proba[i]) >= threshold ? 1 : 0;
        } else {
            std::size_t arg = 0;  // ties to the lowest index
            for (std::size_t c = 1; c < O; ++c)
                if (proba.at2(i, c) > proba.at2(i, arg)) arg = c;
            labels[i] = int(arg);
        }
    }
    return labels;
}

// ---------------------------------------------------------- serialization

static constexpr char kMagic[4] = {'L', 'I', 'D', 'S'};
static constexpr std::uint16_t kVersion = 1;

static json config_json(const ModelConfig& c) {
    return json{{"conv_filters", c.conv_filters},
                {"conv_kernel", c.conv_kernel},
                {"padding", c.padding == Padding::same ? "same" : "valid"},
                {"pool", c.pool},
                {"hidden", c.hidden},
                {"head", c.head == Head::binary ? "binary" : "multiclass"},
                {"dropout", c.dropout},
                {"input_len", c.input_len},
                {"input_channels", c.input_channels}};
}

static ModelConfig config_from(const json& j) {
    ModelConfig c;
    c.conv_filters = j.at("conv_filters").get<std::size_t>();
    c.conv_kernel = j.at("conv_kernel").get<std::size_t>();
    c.padding = j.at("padding").get<std::string>() == "same" ? Padding::same : Padding::valid;
    c.pool = j.at("pool").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.head = j.at("head").get<std::string>() == "binary" ? Head::binary : Head::multiclass;
    c.dropout = j.at("dropout").get<double>();
    c.input_len = j.at("input_len").get<std::size_t>();
    c.input_channels = j.at("input_channels").get<std::size_t>();
    return c;
}

void save_model(const TrainedModel& model, const std::string& path) {
    auto manifest = param_manifest(model.params);
    json jmanifest = json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : manifest) {
        jmanifest.push_back({{"name", name}, {"shape", t->shape}, {"offset", offset}});
        offset += t->size() * sizeof(float);
    }
    json header;
    header["config"] = config_json(model.config);
    header["encoder"] = json::parse(encoder_to_json(model.encoder));
    header["classes"] = model.class_names;
    header["metadata"] = {{"seed", model.seed},
                          {"epochs", model.epochs},
                          {"final_loss", model.final_loss}};
    header["manifest"] = jmanifest;
    const std::string htext = header.dump();

    std::string buf;
    buf.append(kMagic, 4);
    const std::uint16_t ver = kVersion;
    buf.append(reinterpret_cast<const char*>(&ver), 2);
    const std::uint32_t hlen = std::uint32_t(htext.size());
    buf.append(reinterpret_cast<const char*>(&hlen), 4);
    buf += htext;
    for (const auto& [name, t] : manifest)
        buf.append(reinterpret_cast<const char*>(t->ptr()), t->size() * sizeof(float));
    const std::uint32_t crc =
        std::uint32_t(crc32(0, reinterpret_cast<const Bytef*>(buf.data()), uInt(buf.size())));
    buf.append(reinterpret_cast<const char*>(&crc), 4);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelFormatError("cannot write " + path);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw ModelFormatError("short write to " + path);
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelFormatError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 14) throw ModelFormatError(path + ": truncated model file");
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw ModelFormatError(path + ": bad magic, not a model file");
    std::uint16_t ver;
    std::memcpy(&ver, buf.data() + 4, 2);
    if (ver != kVersion)
        throw ModelFormatError(path + ": unsupported format version " + std::to_string(ver));

    std::uint32_t crc_stored;
    std::memcpy(&crc_stored, buf.data() + buf.size() - 4, 4);
    const std::uint32_t crc_actual = std::uint32_t(
        crc32(0, reinterpret_cast<const Bytef*>(buf.data()), uInt(buf.size() - 4)));
    if (crc_stored != crc_actual)
        throw ModelFormatError(path + ": checksum mismatch, file corrupted or truncated");

    std::uint32_t hlen;
    std::memcpy(&hlen, buf.data() + 6, 4);
    if (10 + std::size_t(hlen) + 4 > buf.size())
        throw ModelFormatError(path + ": header length exceeds file size");
    json header = json::parse(buf.substr(10, hlen), nullptr, false);
    if (header.is_discarded())
        throw ModelFormatError(path + ": malformed JSON header");

    TrainedModel model;
    try {
        model.config = config_from(header.at("config"));
        model.encoder = encoder_from_json(header.at("encoder").dump());
        model.class_names = header.at("classes").get<std::vector<std::string>>();
        model.seed = header.at("metadata").at("seed").get<std::uint64_t>();
        model.epochs = header.at("metadata").at("epochs").get<std::size_t>();
        model.final_loss = header.at("metadata").at("final_loss").get<double>();
    } catch (const json::exception& e) {
        throw ModelFormatError(path + ": malformed header: " + e.what());
    }

    model.params = build(model.config, 0);  // shapes only; data overwritten below
    auto manifest = param_manifest(model.params);
    const json& jmanifest = header.at("manifest");
    if (jmanifest.size() != manifest.size())
        throw ModelFormatError(path + ": manifest entry count mismatch");
    const char* blob = buf.data() + 10 + hlen;
    const std::size_t blob_size = buf.size() - 14 - hlen;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& jm = jmanifest.at(i);
        if (jm.at("name").get<std::string>() != manifest[i].first)
            throw ModelFormatError(path + ": manifest order mismatch at " + manifest[i].first);
        const auto shape = jm.at("shape").get<std::vector<std::size_t>>();
        if (shape != manifest[i].second->shape)
            throw ModelFormatError(path + ": shape mismatch for " + manifest[i].first);
        const std::size_t off = jm.at("offset").get<std::size_t>();
        const std::size_t bytes = manifest[i].second->size() * sizeof(float);
        if (off + bytes > blob_size)
            throw ModelFormatError(path + ": weight blob too small for " + manifest[i].first);
        std::memcpy(manifest[i].second->ptr(), blob + off, bytes);
    }
    return model;
}

std::string describe_model(const TrainedModel& m, bool as_json) {
    const ModelConfig& c = m.config;
    const std::size_t conv_len =
        c.padding == Padding::same ? c.input_len : c.input_len - c.conv_kernel + 1;
    const std::size_t seq_len = conv_len / c.pool;
    if (as_json) {
        json j;
        j["config"] = config_json(c);
        j["classes"] = m.class_names;
        j["parameters"] = param_count(m.params);
        j["layers"] = json::array(
            {json{{"type", "conv1d"},
                  {"output", {seq_len * c.pool, c.conv_filters}},
                  {"parameters", m.params.conv.param_count()}},
             json{{"type", "maxpool1d"}, {"output", {seq_len, c.conv_filters}}},
             json{{"type", "bilstm"},
                  {"output", {2 * c.hidden}},
                  {"parameters", m.params.bilstm.param_count()}},
             json{{"type", "dense"},
                  {"output", {c.head_width()}},
                  {"parameters", m.params.dense.param_count()}}});
        j["metadata"] = {{"seed", m.seed}, {"epochs", m.epochs}, {"final_loss", m.final_loss}};
        return j.dump(2);
    }
    std::ostringstream os;
    os << "CNN-BiLSTM (" << (c.head == Head::binary ? "binary" : "multiclass") << " head)\n"
       << "  input:     [" << c.input_len << "," << c.input_channels << "]\n"
       << "  conv1d:    filters=" << c.conv_filters << " kernel=" << c.conv_kernel
       << " padding=" << (c.padding == Padding::same ? "same" : "valid")
       << "  (" << m.params.conv.param_count() << " params)\n"
       << "  maxpool1d: width=" << c.pool << " -> T=" << seq_len << "\n"
       << "  bilstm:    hidden=" << c.hidden << " -> [" << 2 * c.hidden << "]  ("
       << m.params.bilstm.param_count() << " params)\n"
       << "  dense:     out=" << c.head_width() << "  (" << m.params.dense.param_count()
       << " params)\n"
       << "  dropout:   " << c.dropout << "\n"
       << "parameters: " << param_count(m.params) << "\n"
       << "trained: seed=" << m.seed << " epochs=" << m.epochs
       << " final_loss=" << m.final_loss << "\n";
    return os.str();
}

}  // namespace lids

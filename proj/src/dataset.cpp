#include "lids/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

using nlohmann::json;

namespace lids {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Splits one CSV line; handles double-quoted fields.
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') { cur += '"'; ++i; }
                else quoted = false;
            } else cur += c;
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

const FeatureSchema& FeatureSchema::unsw_nb15() {
    static const FeatureSchema schema = [] {
        FeatureSchema s;
        // CSV column order of the official train/test files
        const char* order[] = {
            "dur", "proto", "service", "state", "spkts", "dpkts", "sbytes",
            "dbytes", "rate", "sttl", "dttl", "sload", "dload", "sloss",
            "dloss", "sinpkt", "dinpkt", "sjit", "djit", "swin", "stcpb",
            "dtcpb", "dwin", "tcprtt", "synack", "ackdat", "smean", "dmean",
            "trans_depth", "response_body_len", "ct_srv_src", "ct_state_ttl",
            "ct_dst_ltm", "ct_src_dport_ltm", "ct_dst_sport_ltm",
            "ct_dst_src_ltm", "is_ftp_login", "ct_ftp_cmd", "ct_flw_http_mthd",
            "ct_src_ltm", "ct_srv_dst", "is_sm_ips_ports"};
        for (const char* name : order) {
            const bool cat = !std::strcmp(name, "proto") ||
                             !std::strcmp(name, "service") ||
                             !std::strcmp(name, "state");
            s.features.push_back({name, cat ? FeatureKind::categorical
                                            : FeatureKind::numeric});
        }
        return s;
    }();
    return schema;
}

std::size_t FeatureSchema::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].name == name) return i;
    throw DataError("unknown feature: " + name);
}

const std::vector<std::string>& unsw_class_names() {
    static const std::vector<std::string> names = {
        "Normal",  "Analysis",       "Backdoor",  "DoS",   "Exploits",
        "Fuzzers", "Generic", "Reconnaissance", "Shellcode", "Worms"};
    return names;
}

int class_index(const std::string& attack_cat) {
    const auto& names = unsw_class_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (attack_cat == names[i]) return int(i);
    if (attack_cat == "Backdoors") return 2;  // spelling varies across releases
    throw DataError("unknown attack category: '" + attack_cat + "'");
}

RawRecords load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file, header row required");

    const auto& schema = FeatureSchema::unsw_nb15();
    auto header = split_csv(line);
    for (auto& h : header) h = trim(h);

    // header-driven mapping; column order does not matter
    std::vector<int> col_of(schema.features.size(), -1);
    int col_attack = -1, col_label = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        std::string name = header[c];
        if (name == "id" || name.empty()) continue;
        if (name == "smeansz") name = "smean";  // Table II spelling
        if (name == "dmeansz") name = "dmean";
        if (name == "attack_cat") { col_attack = int(c); continue; }
        if (name == "label" || name == "Label") { col_label = int(c); continue; }
        bool known = false;
        for (std::size_t f = 0; f < schema.features.size(); ++f)
            if (schema.features[f].name == name) { col_of[f] = int(c); known = true; break; }
        if (!known) throw DataError(path + ": unrecognized column '" + name + "'");
    }
    std::string missing;
    for (std::size_t f = 0; f < schema.features.size(); ++f)
        if (col_of[f] < 0) missing += (missing.empty() ? "" : ", ") + schema.features[f].name;
    if (!missing.empty()) throw DataError(path + ": missing columns: " + missing);

    RawRecords rec;
    rec.numeric.resize(schema.features.size());
    rec.categorical.resize(schema.features.size());
    rec.has_labels = col_attack >= 0 && col_label >= 0;
    if ((col_attack >= 0) != (col_label >= 0))
        throw DataError(path + ": attack_cat and label must both be present or both absent");

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != header.size())
            throw DataError(path + ": row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " columns, got " +
                            std::to_string(cells.size()));
        for (std::size_t f = 0; f < schema.features.size(); ++f) {
            const std::string v = trim(cells[col_of[f]]);
            if (schema.features[f].kind == FeatureKind::categorical) {
                rec.categorical[f].push_back(v);
            } else {
                try {
                    std::size_t pos = 0;
                    const double d = std::stod(v, &pos);
                    if (pos != v.size()) throw std::invalid_argument(v);
                    rec.numeric[f].push_back(d);
                } catch (const std::exception&) {
                    throw DataError(path + ": row " + std::to_string(row) +
                                    ": unparseable numeric '" + v + "' in column " +
                                    schema.features[f].name);
                }
            }
        }
        if (rec.has_labels) {
            rec.attack_cat.push_back(trim(cells[col_attack]));
            const std::string lv = trim(cells[col_label]);
            if (lv != "0" && lv != "1")
                throw DataError(path + ": row " + std::to_string(row) +
                                ": label must be 0/1, got '" + lv + "'");
            rec.label.push_back(lv == "1" ? 1 : 0);
        }
        ++rec.n;
    }
    if (rec.n == 0) throw DataError(path + ": no data rows");
    return rec;
}

EncoderState fit_encoders(const RawRecords& train) {
    if (train.n == 0) throw DataError("fit_encoders: empty training records");
    const auto& schema = FeatureSchema::unsw_nb15();
    EncoderState st;
    st.vocabs.resize(schema.features.size());
    st.ranges.resize(schema.features.size());

    for (std::size_t f = 0; f < schema.features.size(); ++f) {
        if (schema.features[f].kind == FeatureKind::categorical) {
            std::map<std::string, std::size_t> freq;
            for (const auto& v : train.categorical[f]) ++freq[v];
            // descending frequency; lexicographic tie-break for determinism
            std::vector<std::pair<std::string, std::size_t>> ordered(freq.begin(), freq.end());
            std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
                return a.second != b.second ? a.second > b.second : a.first < b.first;
            });
            int idx = 1;  // 0 reserved for unknown
            for (const auto& [name, _] : ordered) st.vocabs[f].index[name] = idx++;
            st.ranges[f].min = ordered.empty() ? 0.0 : 1.0;
            st.ranges[f].max = double(ordered.size());
            if (ordered.size() <= 1) st.ranges[f].max = st.ranges[f].min;
        } else {
            const auto& col = train.numeric[f];
            std::vector<double> sorted(col);
            std::sort(sorted.begin(), sorted.end());
            const double mn = sorted.front(), mx = sorted.back();
            const double median = sorted[sorted.size() / 2];
            // heavy-tail rule: non-negative and max/max(median,1) > 1000
            const bool log_flag = mn >= 0.0 && mx / std::max(median, 1.0) > 1000.0;
            auto xf = [&](double v) { return log_flag ? std::log1p(v) : v; };
            st.ranges[f].log1p = log_flag;
            st.ranges[f].min = xf(mn);
            st.ranges[f].max = xf(mx);
        }
    }
    st.fitted = true;
    return st;
}

EncodedDataset transform(const RawRecords& records, const EncoderState& state,
                         const std::string& provenance) {
    if (!state.fitted) throw DataError("transform: encoder state not fitted");
    const auto& schema = FeatureSchema::unsw_nb15();
    const std::size_t N = records.n, F = schema.features.size();

    EncodedDataset ds;
    ds.provenance = provenance;
    ds.features = Tensor({N, F, 1});
    for (std::size_t f = 0; f < F; ++f) {
        const auto& r = state.ranges[f];
        const double span = r.max - r.min;
        for (std::size_t i = 0; i < N; ++i) {
            double v;
            if (schema.features[f].kind == FeatureKind::categorical) {
                const auto& vocab = state.vocabs[f].index;
                auto it = vocab.find(records.categorical[f][i]);
                v = it == vocab.end() ? 0.0 : double(it->second);
            } else {
                v = records.numeric[f][i];
                if (r.log1p) v = std::log1p(std::max(v, 0.0));
            }
            double scaled = span > 0 ? (v - r.min) / span : 0.0;
            scaled = std::min(std::max(scaled, 0.0), 1.0);
            ds.features[i * F + f] = float(scaled);
        }
    }
    if (records.has_labels) {
        ds.label_binary = records.label;
        ds.label_multi.resize(N);
        for (std::size_t i = 0; i < N; ++i)
            ds.label_multi[i] = class_index(records.attack_cat[i]);
    } else {
        ds.label_binary.assign(N, 0);
        ds.label_multi.assign(N, 0);
    }
    return ds;
}

namespace {

EncodedDataset take_rows(const EncodedDataset& ds, const std::vector<std::size_t>& idx,
                         const std::string& provenance) {
    const std::size_t F = ds.features.dim(1);
    EncodedDataset out;
    out.provenance = provenance;
    out.features = Tensor({idx.size(), F, 1});
    out.label_binary.resize(idx.size());
    out.label_multi.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy(ds.features.ptr() + idx[i] * F, ds.features.ptr() + (idx[i] + 1) * F,
                  out.features.ptr() + i * F);
        out.label_binary[i] = ds.label_binary[idx[i]];
        out.label_multi[i] = ds.label_multi[idx[i]];
    }
    return out;
}

// Per-class index pools shuffled with a per-class offset of the base seed.
std::vector<std::vector<std::size_t>> class_pools(const EncodedDataset& ds,
                                                  std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> pools(unsw_class_names().size());
    for (std::size_t i = 0; i < ds.size(); ++i)
        pools[std::size_t(ds.label_multi[i])].push_back(i);
    for (std::size_t c = 0; c < pools.size(); ++c) {
        std::mt19937 rng(std::uint32_t(seed * 0x9e3779b9ULL + c));
        std::shuffle(pools[c].begin(), pools[c].end(), rng);
    }
    return pools;
}

}  // namespace

std::pair<EncodedDataset, EncodedDataset> split_random_stratified(
    const EncodedDataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw DataError("split: test_fraction must be in (0,1)");
    auto pools = class_pools(ds, seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (const auto& pool : pools) {
        if (pool.empty()) continue;
        if (pool.size() < 2)
            throw DataError("split: a class has fewer than 2 records");
        std::size_t n_test = std::size_t(std::llround(double(pool.size()) * test_fraction));
        n_test = std::min(std::max<std::size_t>(n_test, 1), pool.size() - 1);
        test_idx.insert(test_idx.end(), pool.begin(), pool.begin() + n_test);
        train_idx.insert(train_idx.end(), pool.begin() + n_test, pool.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {take_rows(ds, train_idx, "derived split (train)"),
            take_rows(ds, test_idx, "derived split (test)")};
}

EncodedDataset subsample_fraction(const EncodedDataset& ds, double fraction,
                                  std::uint64_t seed, bool stratified) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw DataError("subsample: fraction must be in (0,1]");
    if (fraction == 1.0) return ds;
    std::vector<std::size_t> idx;
    if (stratified) {
        for (const auto& pool : class_pools(ds, seed)) {
            const std::size_t n = std::size_t(std::llround(double(pool.size()) * fraction));
            idx.insert(idx.end(), pool.begin(), pool.begin() + std::min(n, pool.size()));
        }
    } else {
        std::vector<std::size_t> all(ds.size());
        std::iota(all.begin(), all.end(), 0);
        std::mt19937 rng{std::uint32_t(seed)};
        std::shuffle(all.begin(), all.end(), rng);
        idx.assign(all.begin(), all.begin() + std::size_t(std::llround(double(ds.size()) * fraction)));
    }
    std::sort(idx.begin(), idx.end());
    return take_rows(ds, idx, ds.provenance + " (subsample)");
}

EncodedDataset concat(const EncodedDataset& a, const EncodedDataset& b,
                      const std::string& provenance) {
    const std::size_t F = a.features.dim(1);
    EncodedDataset out;
    out.provenance = provenance;
    out.features = Tensor({a.size() + b.size(), F, 1});
    std::copy(a.features.data.begin(), a.features.data.end(), out.features.data.begin());
    std::copy(b.features.data.begin(), b.features.data.end(),
              out.features.data.begin() + a.features.size());
    out.label_binary = a.label_binary;
    out.label_binary.insert(out.label_binary.end(), b.label_binary.begin(), b.label_binary.end());
    out.label_multi = a.label_multi;
    out.label_multi.insert(out.label_multi.end(), b.label_multi.begin(), b.label_multi.end());
    return out;
}

std::vector<std::size_t> class_distribution(const EncodedDataset& ds, bool binary) {
    std::vector<std::size_t> counts(binary ? 2 : unsw_class_names().size(), 0);
    for (std::size_t i = 0; i < ds.size(); ++i)
        ++counts[std::size_t(binary ? ds.label_binary[i] : ds.label_multi[i])];
    return counts;
}

// ------------------------------------------------------- encoder JSON

static json encoder_json(const EncoderState& st) {
    const auto& schema = FeatureSchema::unsw_nb15();
    json jfeatures = json::array();
    if (!st.fitted) return jfeatures;  // unfitted encoder serializes empty
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
        json jf;
        jf["name"] = schema.features[f].name;
        jf["kind"] = schema.features[f].kind == FeatureKind::categorical
                         ? "categorical" : "numeric";
        jf["min"] = st.ranges[f].min;
        jf["max"] = st.ranges[f].max;
        jf["log1p"] = st.ranges[f].log1p;
        if (schema.features[f].kind == FeatureKind::categorical)
            jf["vocab"] = st.vocabs[f].index;
        jfeatures.push_back(jf);
    }
    return jfeatures;
}

static EncoderState encoder_from(const json& jfeatures) {
    const auto& schema = FeatureSchema::unsw_nb15();
    if (jfeatures.is_array() && jfeatures.empty()) return EncoderState{};
    if (!jfeatures.is_array() || jfeatures.size() != schema.features.size())
        throw DataError("encoder json: expected 42 feature entries");
    EncoderState st;
    st.vocabs.resize(schema.features.size());
    st.ranges.resize(schema.features.size());
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
        const auto& jf = jfeatures.at(f);
        if (jf.at("name").get<std::string>() != schema.features[f].name)
            throw DataError("encoder json: feature order mismatch at " +
                            schema.features[f].name);
        st.ranges[f].min = jf.at("min").get<double>();
        st.ranges[f].max = jf.at("max").get<double>();
        st.ranges[f].log1p = jf.at("log1p").get<bool>();
        if (jf.contains("vocab"))
            st.vocabs[f].index = jf.at("vocab").get<std::map<std::string, int>>();
    }
    st.fitted = true;
    return st;
}

std::string encoder_to_json(const EncoderState& state) {
    return encoder_json(state).dump();
}

EncoderState encoder_from_json(const std::string& s) {
    return encoder_from(json::parse(s));
}

// ------------------------------------------------------- cache file

static constexpr char kCacheMagic[4] = {'L', 'I', 'D', 'C'};

template <class T>
static void write_le(std::ostream& out, T v) {
    // host is little-endian on every supported target
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void save_encoded(const EncodedDataset& ds, const EncoderState& state,
                  const std::string& path) {
    json header;
    header["encoder"] = encoder_json(state);
    header["provenance"] = ds.provenance;
    header["rows"] = ds.size();
    header["features_per_row"] = ds.features.dim(1);
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out.write(kCacheMagic, 4);
    write_le<std::uint32_t>(out, std::uint32_t(htext.size()));
    out.write(htext.data(), std::streamsize(htext.size()));
    out.write(reinterpret_cast<const char*>(ds.features.ptr()),
              std::streamsize(ds.features.size() * sizeof(float)));
    for (int v : ds.label_binary) out.put(char(v));
    for (int v : ds.label_multi) out.put(char(v));
    if (!out) throw DataError("short write to " + path);
}

std::pair<EncodedDataset, EncoderState> load_encoded(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCacheMagic, 4) != 0)
        throw DataError(path + ": not an encoded dataset cache (bad magic)");
    std::uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 4);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw DataError(path + ": truncated header");
    json header = json::parse(htext, nullptr, false);
    if (header.is_discarded()) throw DataError(path + ": malformed cache header");

    EncodedDataset ds;
    ds.provenance = header.at("provenance").get<std::string>();
    const std::size_t n = header.at("rows").get<std::size_t>();
    const std::size_t f = header.at("features_per_row").get<std::size_t>();
    ds.features = Tensor({n, f, 1});
    in.read(reinterpret_cast<char*>(ds.features.ptr()),
            std::streamsize(n * f * sizeof(float)));
    ds.label_binary.resize(n);
    ds.label_multi.resize(n);
    for (auto& v : ds.label_binary) v = in.get();
    for (auto& v : ds.label_multi) v = in.get();
    if (!in) throw DataError(path + ": truncated cache body");
    return {std::move(ds), encoder_from(header.at("encoder"))};
}

}  // namespace lids

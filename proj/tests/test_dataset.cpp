#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "doctest.h"
#include "lids/dataset.hpp"
#include "synth.hpp"

using namespace lids;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("lids_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("schema: 42 features, categorical trio") {
    const auto& s = FeatureSchema::unsw_nb15();
    CHECK(s.features.size() == 42);
    int cats = 0;
    for (const auto& f : s.features)
        if (f.kind == FeatureKind::categorical) ++cats;
    CHECK(cats == 3);
    CHECK(s.features[s.index_of("proto")].kind == FeatureKind::categorical);
    CHECK(unsw_class_names().size() == 10);
    CHECK(class_index("Normal") == 0);
    CHECK(class_index("Worms") == 9);
    CHECK(class_index("Backdoors") == class_index("Backdoor"));
    CHECK_THROWS_AS(class_index("NotAClass"), DataError);
}

TEST_CASE("load_csv: header-driven, id dropped, errors carry row numbers") {
    TempDir tmp;
    synth::write_csv(tmp.file("a.csv"), 40, 1);
    auto rec = load_csv(tmp.file("a.csv"));
    CHECK(rec.n == 40);
    CHECK(rec.has_labels);

    // shuffled column order parses to the identical dataset
    {
        std::ifstream in(tmp.file("a.csv"));
        std::string header, line;
        std::getline(in, header);
        std::ofstream out(tmp.file("shuffled.csv"));
        // move the last feature column to the front (swap on both header and rows)
        auto rotate = [](const std::string& s) {
            const auto last_comma = s.rfind(',');
            const auto second_last = s.rfind(',', last_comma - 1);
            const auto third_last = s.rfind(',', second_last - 1);
            // move is_sm_ips_ports (third-from-end) to position 0
            return s.substr(third_last + 1, second_last - third_last - 1) + "," +
                   s.substr(0, third_last) + s.substr(second_last);
        };
        out << rotate(header) << "\n";
        while (std::getline(in, line)) out << rotate(line) << "\n";
    }
    auto rec2 = load_csv(tmp.file("shuffled.csv"));
    CHECK(rec2.n == rec.n);
    for (std::size_t f = 0; f < rec.numeric.size(); ++f)
        CHECK(rec2.numeric[f] == rec.numeric[f]);
    CHECK(rec2.attack_cat == rec.attack_cat);

    // bad numeric cell names the row
    {
        std::ofstream out(tmp.file("bad.csv"));
        std::ifstream in(tmp.file("a.csv"));
        std::string line;
        std::getline(in, line);
        out << line << "\n";
        std::getline(in, line);
        out << line << "\n";
        std::getline(in, line);
        line.replace(line.find(','), 5, ",oops");
        out << line << "\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(tmp.file("bad.csv")),
                         doctest::Contains("row 3"), DataError);

    // missing column reported by name
    {
        std::ofstream out(tmp.file("missing.csv"));
        out << "id,dur,proto\n1,0.1,tcp\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(tmp.file("missing.csv")),
                         doctest::Contains("missing columns"), DataError);
    CHECK_THROWS_AS(load_csv(tmp.file("nonexistent.csv")), DataError);
}

TEST_CASE("fit_encoders: frequency-ranked vocab, unknown at 0, degenerate range") {
    TempDir tmp;
    synth::write_csv(tmp.file("t.csv"), 60, 2);
    auto rec = load_csv(tmp.file("t.csv"));

    // hand-crafted categorical column: tcp twice, udp once
    RawRecords mini = rec;
    const auto& schema = FeatureSchema::unsw_nb15();
    const std::size_t pf = schema.index_of("proto");
    mini.categorical[pf].assign(mini.n, "udp");
    mini.categorical[pf][0] = mini.categorical[pf][1] = "tcp";
    for (std::size_t i = 2; i < 5; ++i) mini.categorical[pf][i] = "tcp";
    // now tcp:5, udp:rest -> udp more frequent
    auto st = fit_encoders(mini);
    CHECK(st.vocabs[pf].index.at("udp") == 1);
    CHECK(st.vocabs[pf].index.at("tcp") == 2);

    // frequency ordering example [tcp,tcp,udp]
    RawRecords tiny;
    tiny.n = 3;
    tiny.numeric.resize(42);
    tiny.categorical.resize(42);
    for (std::size_t f = 0; f < 42; ++f) {
        if (schema.features[f].kind == FeatureKind::categorical)
            tiny.categorical[f] = {"tcp", "tcp", "udp"};
        else
            tiny.numeric[f] = {1.0, 2.0, 3.0};
    }
    tiny.has_labels = false;
    auto st2 = fit_encoders(tiny);
    CHECK(st2.vocabs[pf].index.at("tcp") == 1);
    CHECK(st2.vocabs[pf].index.at("udp") == 2);

    // constant numeric feature maps to 0
    for (auto& v : tiny.numeric[schema.index_of("dur")]) v = 7.0;
    auto st3 = fit_encoders(tiny);
    auto ds = transform(tiny, st3, "x");
    const std::size_t df = schema.index_of("dur");
    for (std::size_t i = 0; i < 3; ++i) CHECK(ds.features[i * 42 + df] == 0.0f);

    CHECK_THROWS_AS(fit_encoders(RawRecords{}), DataError);
}

TEST_CASE("transform: train in [0,1], clipping, unknown category, determinism") {
    TempDir tmp;
    synth::write_csv(tmp.file("train.csv"), 120, 3);
    synth::write_csv(tmp.file("test.csv"), 60, 99);
    auto train = load_csv(tmp.file("train.csv"));
    auto test = load_csv(tmp.file("test.csv"));
    auto st = fit_encoders(train);

    auto dtrain = transform(train, st, "train");
    for (float v : dtrain.features.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    auto dtest = transform(test, st, "test");
    for (float v : dtest.features.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    // bitwise determinism
    auto again = transform(train, st, "train");
    CHECK(again.features.data == dtrain.features.data);

    // unknown category maps through index 0 -> clipped to 0
    RawRecords one = test;
    const auto& schema = FeatureSchema::unsw_nb15();
    one.categorical[schema.index_of("proto")].assign(one.n, "no-such-proto");
    auto done = transform(one, st, "x");
    const std::size_t pf = schema.index_of("proto");
    for (std::size_t i = 0; i < one.n; ++i) CHECK(done.features[i * 42 + pf] == 0.0f);
}

TEST_CASE("split_random_stratified: proportions, disjoint, exhaustive, seeded") {
    TempDir tmp;
    synth::write_csv(tmp.file("d.csv"), 500, 4, {"Normal", "Exploits"});
    auto rec = load_csv(tmp.file("d.csv"));
    auto st = fit_encoders(rec);
    auto ds = transform(rec, st, "d");

    auto [tr, te] = split_random_stratified(ds, 0.2, 42);
    CHECK(tr.size() + te.size() == ds.size());
    auto ctr = class_distribution(tr, false);
    auto cte = class_distribution(te, false);
    auto call = class_distribution(ds, false);
    for (std::size_t c = 0; c < call.size(); ++c)
        if (call[c])
            CHECK(std::abs(double(cte[c]) - 0.2 * double(call[c])) <= 1.0);

    // counts [100,900] f=0.2 -> {20,180}
    CHECK(call[0] == 250);
    // same seed reproduces the identical split
    auto [tr2, te2] = split_random_stratified(ds, 0.2, 42);
    CHECK(te2.features.data == te.features.data);
    CHECK(te2.label_multi == te.label_multi);

    // disjoint+exhaustive: multiset of feature rows matches
    CHECK_THROWS_AS(split_random_stratified(ds, 0.0, 1), DataError);
    CHECK_THROWS_AS(split_random_stratified(ds, 1.0, 1), DataError);
}

TEST_CASE("split proportionality on the spec counts [100,900]") {
    lids::EncodedDataset ds;
    ds.features = Tensor({1000, 42, 1});
    ds.label_binary.resize(1000);
    ds.label_multi.resize(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        ds.label_multi[i] = i < 100 ? 0 : 1;
        ds.label_binary[i] = ds.label_multi[i];
    }
    auto [tr, te] = split_random_stratified(ds, 0.2, 7);
    auto cte = class_distribution(te, false);
    CHECK(cte[0] == 20);
    CHECK(cte[1] == 180);
}

TEST_CASE("subsample_fraction: identity, rounding, determinism") {
    TempDir tmp;
    synth::write_csv(tmp.file("d.csv"), 300, 5);
    auto rec = load_csv(tmp.file("d.csv"));
    auto st = fit_encoders(rec);
    auto ds = transform(rec, st, "d");

    auto full = subsample_fraction(ds, 1.0, 9, true);
    CHECK(full.size() == ds.size());

    auto sub = subsample_fraction(ds, 0.2, 9, true);
    CHECK(std::abs(double(sub.size()) - 60.0) <= 4.0);  // per-class rounding
    auto again = subsample_fraction(ds, 0.2, 9, true);
    CHECK(again.features.data == sub.features.data);

    auto plain = subsample_fraction(ds, 0.5, 9, false);
    CHECK(plain.size() == 150);
}

TEST_CASE("class_distribution: totals and singleton") {
    TempDir tmp;
    synth::write_csv(tmp.file("d.csv"), 80, 6);
    auto rec = load_csv(tmp.file("d.csv"));
    auto ds = transform(rec, fit_encoders(rec), "d");
    auto bin = class_distribution(ds, true);
    CHECK(bin.size() == 2);
    CHECK(bin[0] + bin[1] == ds.size());
    auto multi = class_distribution(ds, false);
    std::size_t total = 0;
    for (auto c : multi) total += c;
    CHECK(total == ds.size());
}

TEST_CASE("encoded cache: byte-exact round trip and idempotent rewrite") {
    TempDir tmp;
    synth::write_csv(tmp.file("d.csv"), 100, 7);
    auto rec = load_csv(tmp.file("d.csv"));
    auto st = fit_encoders(rec);
    auto ds = transform(rec, st, "official-train");

    const std::string p1 = tmp.file("cache1.bin"), p2 = tmp.file("cache2.bin");
    save_encoded(ds, st, p1);
    save_encoded(ds, st, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), {});
    std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);

    auto [ds2, st2] = load_encoded(p1);
    CHECK(ds2.features.data == ds.features.data);
    CHECK(ds2.label_binary == ds.label_binary);
    CHECK(ds2.label_multi == ds.label_multi);
    CHECK(ds2.provenance == ds.provenance);
    CHECK(encoder_to_json(st2) == encoder_to_json(st));

    // transforming with the reloaded encoder is bitwise identical
    auto via = transform(rec, st2, "again");
    CHECK(via.features.data == ds.features.data);

    std::ofstream junk(tmp.file("junk.bin"), std::ios::binary);
    junk << "NOPE";
    junk.close();
    CHECK_THROWS_AS(load_encoded(tmp.file("junk.bin")), DataError);
}

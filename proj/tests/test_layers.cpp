// Forward-pass oracles: nested-loop references for conv1d/maxpool/dense and a
// step-by-step scalar LSTM oracle, plus the hand-computed and closed-form
// cases for each layer family.
#include <random>

#include "doctest.h"
#include "lids/layers.hpp"
#include "test_util.hpp"

using namespace lids;
using testutil::random_tensor;

namespace {

// Naive references, independent of the kernel path.
TensorD conv1d_oracle(const TensorD& in, const Conv1DParamsT<double>& p) {
    const std::size_t B = in.dim(0), L = in.dim(1), C = in.dim(2);
    const std::size_t F = p.filters(), K = p.kernel();
    const std::size_t Lo = conv1d_out_len(L, p);
    const std::ptrdiff_t pad = p.padding == Padding::same ? (std::ptrdiff_t)((K - 1) / 2) : 0;
    TensorD out({B, Lo, F});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < Lo; ++t)
            for (std::size_t f = 0; f < F; ++f) {
                double s = p.bias[f];
                for (std::size_t k = 0; k < K; ++k)
                    for (std::size_t c = 0; c < C; ++c) {
                        const std::ptrdiff_t i = (std::ptrdiff_t)(t * p.stride + k) - pad;
                        if (i >= 0 && i < (std::ptrdiff_t)L)
                            s += p.weights.at3(f, k, c) * in.at3(b, i, c);
                    }
                out.at3(b, t, f) = s;
            }
    return out;
}

TensorD maxpool_oracle(const TensorD& in, std::size_t pool) {
    const std::size_t B = in.dim(0), L = in.dim(1), C = in.dim(2);
    const std::size_t Lo = L / pool;
    TensorD out({B, Lo, C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < Lo; ++t)
            for (std::size_t c = 0; c < C; ++c) {
                double m = in.at3(b, t * pool, c);
                for (std::size_t k = 1; k < pool; ++k)
                    m = std::max(m, in.at3(b, t * pool + k, c));
                out.at3(b, t, c) = m;
            }
    return out;
}

TensorD dense_oracle(const TensorD& in, const DenseParamsT<double>& p) {
    const std::size_t B = in.dim(0), O = p.out_features(), I = p.in_features();
    TensorD out({B, O});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o) {
            double s = p.bias[o];
            for (std::size_t i = 0; i < I; ++i) s += p.weights.at2(o, i) * in.at2(b, i);
            out.at2(b, o) = s;
        }
    return out;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Element-by-element LSTM step, no shared code with lstm_cell_step.
void lstm_step_oracle(const TensorD& x, const TensorD& h_prev, const TensorD& c_prev,
                      const LstmParamsT<double>& p, TensorD& h, TensorD& c) {
    const std::size_t B = x.dim(0), D = p.input, H = p.hidden;
    h = TensorD({B, H});
    c = TensorD({B, H});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < H; ++j) {
            double a[4];
            for (std::size_t g = 0; g < 4; ++g) {
                a[g] = p.b[g][j];
                for (std::size_t d = 0; d < D; ++d) a[g] += p.w[g].at2(j, d) * x.at2(b, d);
                for (std::size_t k = 0; k < H; ++k) a[g] += p.u[g].at2(j, k) * h_prev.at2(b, k);
            }
            const double iv = sig(a[gate_i]), fv = sig(a[gate_f]);
            const double gv = std::tanh(a[gate_g]), ov = sig(a[gate_o]);
            c.at2(b, j) = fv * c_prev.at2(b, j) + iv * gv;
            h.at2(b, j) = ov * std::tanh(c.at2(b, j));
        }
}

Conv1DParamsT<double> random_conv(std::size_t F, std::size_t K, std::size_t C,
                                  Padding pad, std::mt19937& rng) {
    Conv1DParamsT<double> p;
    p.weights = random_tensor<double>({F, K, C}, rng);
    p.bias = random_tensor<double>({F}, rng);
    p.padding = pad;
    return p;
}

LstmParamsT<double> random_lstm(std::size_t H, std::size_t D, std::mt19937& rng) {
    auto p = make_lstm_params<double>(H, D);
    for (std::size_t g = 0; g < 4; ++g) {
        p.w[g] = random_tensor<double>({H, D}, rng);
        p.u[g] = random_tensor<double>({H, H}, rng);
        p.b[g] = random_tensor<double>({H}, rng);
    }
    return p;
}

}  // namespace

TEST_CASE("conv1d: identity kernel") {
    Conv1DParamsT<float> p;
    p.weights = Tensor({1, 1, 1}, {1.0f});
    p.bias = Tensor({1}, {0.0f});
    Tensor in({1, 4, 1}, {1, 2, 3, 4});
    auto out = conv1d_forward(in, p);
    CHECK(out.shape == std::vector<std::size_t>{1, 4, 1});
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == in[i]);
}

TEST_CASE("conv1d: K=3 same padding, hand convolution") {
    Conv1DParamsT<float> p;
    p.weights = Tensor({1, 3, 1}, {1, 1, 1});
    p.bias = Tensor({1}, {0});
    Tensor in({1, 3, 1}, {1, 2, 3});
    auto out = conv1d_forward(in, p);
    CHECK(out[0] == doctest::Approx(3));
    CHECK(out[1] == doctest::Approx(6));
    CHECK(out[2] == doctest::Approx(5));
}

TEST_CASE("conv1d: parameter count closed form") {
    Conv1DParamsT<float> p;
    p.weights = Tensor({32, 3, 1});
    p.bias = Tensor({32});
    CHECK(p.param_count() == 128);
}

TEST_CASE("conv1d: channel mismatch names the axis") {
    Conv1DParamsT<float> p;
    p.weights = Tensor({1, 1, 2});
    p.bias = Tensor({1});
    Tensor in({1, 4, 1});
    CHECK_THROWS_WITH_AS(conv1d_forward(in, p),
                         doctest::Contains("channel axis"), ShapeError);
}

TEST_CASE("conv1d: matches nested-loop oracle on random instances") {
    std::mt19937 rng(7);
    int cases = 0;
    for (int it = 0; it < 60; ++it) {
        const std::size_t B = 1 + rng() % 3, L = 3 + rng() % 8;
        const std::size_t C = 1 + rng() % 3, F = 1 + rng() % 4;
        const std::size_t K = 1 + rng() % std::min<std::size_t>(L, 4);
        for (Padding pad : {Padding::same, Padding::valid}) {
            auto p = random_conv(F, K, C, pad, rng);
            auto in = random_tensor<double>({B, L, C}, rng);
            auto got = conv1d_forward(in, p);
            auto want = conv1d_oracle(in, p);
            REQUIRE(got.shape == want.shape);
            for (std::size_t i = 0; i < got.size(); ++i)
                CHECK(std::abs(got[i] - want[i]) < 1e-12);
            ++cases;
        }
    }
    CHECK(cases >= 100);
}

TEST_CASE("maxpool1d: hand cases and floor rule") {
    Tensor in({1, 4, 1}, {1, 3, 2, 5});
    auto out = maxpool1d_forward(in, 2);
    CHECK(out.shape == std::vector<std::size_t>{1, 2, 1});
    CHECK(out[0] == 3);
    CHECK(out[1] == 5);

    Tensor in5({1, 5, 1}, {1, 2, 3, 4, 9});
    auto out5 = maxpool1d_forward(in5, 2);
    CHECK(out5.dim(1) == 2);  // trailing element dropped

    Tensor flat({1, 4, 1}, {2, 2, 2, 2});
    auto outc = maxpool1d_forward(flat, 2);
    for (auto v : outc.data) CHECK(v == 2);

    CHECK_THROWS_AS(maxpool1d_forward(in, 9), ShapeError);
}

TEST_CASE("maxpool1d: matches oracle; ties route to earliest index") {
    std::mt19937 rng(8);
    for (int it = 0; it < 100; ++it) {
        const std::size_t B = 1 + rng() % 2, L = 2 + rng() % 10, C = 1 + rng() % 3;
        const std::size_t pool = 1 + rng() % L;
        auto in = random_tensor<double>({B, L, C}, rng);
        auto got = maxpool1d_forward(in, pool);
        auto want = maxpool_oracle(in, pool);
        REQUIRE(got.shape == want.shape);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
    }
    // tie: both window entries equal; gradient must go to the first
    MaxPoolCache<double> cache;
    TensorD tie({1, 2, 1}, {5.0, 5.0});
    maxpool1d_forward(tie, 2, &cache);
    TensorD g({1, 1, 1}, {1.0});
    auto gin = maxpool1d_backward(g, cache);
    CHECK(gin[0] == 1.0);
    CHECK(gin[1] == 0.0);
}

TEST_CASE("dense: identity, hand dot product, param count") {
    DenseParamsT<float> id;
    id.weights = Tensor({2, 2}, {1, 0, 0, 1});
    id.bias = Tensor({2}, {0, 0});
    Tensor in({1, 2}, {3, 4});
    auto out = dense_forward(in, id);
    CHECK(out[0] == 3);
    CHECK(out[1] == 4);

    DenseParamsT<float> p;
    p.weights = Tensor({1, 2}, {1, 1});
    p.bias = Tensor({1}, {0.5f});
    Tensor x({1, 2}, {1, 2});
    CHECK(dense_forward(x, p)[0] == doctest::Approx(3.5));

    DenseParamsT<float> q;
    q.weights = Tensor({1, 32});
    q.bias = Tensor({1});
    CHECK(q.param_count() == 33);

    Tensor bad({1, 3});
    CHECK_THROWS_AS(dense_forward(bad, p), ShapeError);
}

TEST_CASE("dense: matches oracle on random instances") {
    std::mt19937 rng(9);
    for (int it = 0; it < 100; ++it) {
        const std::size_t B = 1 + rng() % 4, I = 1 + rng() % 8, O = 1 + rng() % 6;
        DenseParamsT<double> p;
        p.weights = random_tensor<double>({O, I}, rng);
        p.bias = random_tensor<double>({O}, rng);
        auto in = random_tensor<double>({B, I}, rng);
        auto got = dense_forward(in, p);
        auto want = dense_oracle(in, p);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(std::abs(got[i] - want[i]) < 1e-12);
    }
}

TEST_CASE("activations: closed-form cases") {
    Tensor z({1, 2}, {0, 0});
    auto s = activation_forward(z, Activation::softmax);
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == doctest::Approx(0.5));

    Tensor l({1, 2}, {std::log(2.0f), 0.0f});
    auto s2 = activation_forward(l, Activation::softmax);
    CHECK(s2[0] == doctest::Approx(2.0 / 3.0));
    CHECK(s2[1] == doctest::Approx(1.0 / 3.0));

    Tensor r({2}, {-1, 2});
    auto rr = activation_forward(r, Activation::relu);
    CHECK(rr[0] == 0);
    CHECK(rr[1] == 2);
}

TEST_CASE("softmax: rows sum to 1 and shift invariance") {
    std::mt19937 rng(10);
    for (int it = 0; it < 20; ++it) {
        auto x = random_tensor<double>({3, 5}, rng, -10.0, 10.0);
        auto y = activation_forward(x, Activation::softmax);
        for (std::size_t r = 0; r < 3; ++r) {
            double sum = 0;
            for (std::size_t c = 0; c < 5; ++c) sum += y.at2(r, c);
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
        auto shifted = x;
        const double c0 = 37.5;
        for (auto& v : shifted.data) v += c0;
        auto y2 = activation_forward(shifted, Activation::softmax);
        for (std::size_t i = 0; i < y.size(); ++i)
            CHECK(std::abs(y[i] - y2[i]) < 1e-6);
    }
}

TEST_CASE("lstm_cell: zero params give zero state") {
    auto p = make_lstm_params<float>(3, 2);
    Tensor x({1, 2}, {0.5f, -0.5f});
    Tensor h({1, 3}), c({1, 3});
    auto [hn, cn] = lstm_cell_step(x, h, c, p);
    for (auto v : hn.data) CHECK(v == 0);
    for (auto v : cn.data) CHECK(v == 0);
}

TEST_CASE("lstm_cell: scalar hand evaluation with forget bias 1") {
    auto p = make_lstm_params<double>(1, 1);
    p.b[gate_f][0] = 1.0;
    TensorD x({1, 1}, {0.0});
    TensorD h({1, 1}, {0.0});
    TensorD c({1, 1}, {2.0});
    auto [hn, cn] = lstm_cell_step(x, h, c, p);
    CHECK(cn[0] == doctest::Approx(1.4621171).epsilon(1e-6));
    CHECK(hn[0] == doctest::Approx(0.4490315).epsilon(1e-6));
}

TEST_CASE("lstm_cell: matches step-by-step oracle on random instances") {
    std::mt19937 rng(11);
    for (int it = 0; it < 100; ++it) {
        const std::size_t B = 1 + rng() % 3, D = 1 + rng() % 5, H = 1 + rng() % 5;
        auto p = random_lstm(H, D, rng);
        auto x = random_tensor<double>({B, D}, rng);
        auto h0 = random_tensor<double>({B, H}, rng);
        auto c0 = random_tensor<double>({B, H}, rng);
        auto [h, c] = lstm_cell_step(x, h0, c0, p);
        TensorD ho, co;
        lstm_step_oracle(x, h0, c0, p, ho, co);
        for (std::size_t i = 0; i < h.size(); ++i) {
            CHECK(std::abs(h[i] - ho[i]) < 1e-12);
            CHECK(std::abs(c[i] - co[i]) < 1e-12);
        }
    }
}

TEST_CASE("bilstm: zero params, T=2 unrolled oracle, reversal symmetry") {
    std::mt19937 rng(12);

    BiLstmParamsT<double> zp{make_lstm_params<double>(2, 3), make_lstm_params<double>(2, 3)};
    auto zseq = random_tensor<double>({2, 4, 3}, rng);
    auto zout = bilstm_forward(zseq, zp);
    for (auto v : zout.outputs.data) CHECK(v == 0);
    for (auto v : zout.final.data) CHECK(v == 0);

    // T=2 unroll against the step oracle
    BiLstmParamsT<double> p{random_lstm(3, 2, rng), random_lstm(3, 2, rng)};
    auto seq = random_tensor<double>({1, 2, 2}, rng);
    auto out = bilstm_forward(seq, p);
    TensorD x0({1, 2}, {seq.at3(0, 0, 0), seq.at3(0, 0, 1)});
    TensorD x1({1, 2}, {seq.at3(0, 1, 0), seq.at3(0, 1, 1)});
    TensorD zh({1, 3}), zc({1, 3}), hf0, cf0, hf1, cf1, hb1, cb1, hb0, cb0;
    lstm_step_oracle(x0, zh, zc, p.forward, hf0, cf0);
    lstm_step_oracle(x1, hf0, cf0, p.forward, hf1, cf1);
    lstm_step_oracle(x1, zh, zc, p.backward, hb1, cb1);
    lstm_step_oracle(x0, hb1, cb1, p.backward, hb0, cb0);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(out.outputs.at3(0, 0, j) == doctest::Approx(hf0[j]).epsilon(1e-12));
        CHECK(out.outputs.at3(0, 0, 3 + j) == doctest::Approx(hb0[j]).epsilon(1e-12));
        CHECK(out.outputs.at3(0, 1, j) == doctest::Approx(hf1[j]).epsilon(1e-12));
        CHECK(out.outputs.at3(0, 1, 3 + j) == doctest::Approx(hb1[j]).epsilon(1e-12));
        CHECK(out.final[j] == doctest::Approx(hf1[j]).epsilon(1e-12));
        CHECK(out.final[3 + j] == doctest::Approx(hb0[j]).epsilon(1e-12));
    }

    // swapping direction parameters and reversing time reverses `outputs`
    // along t and swaps its halves, bitwise in double
    const std::size_t B = 2, Tn = 3, D = 2, H = 3;
    BiLstmParamsT<double> q{random_lstm(H, D, rng), random_lstm(H, D, rng)};
    BiLstmParamsT<double> qs{q.backward, q.forward};
    auto s = random_tensor<double>({B, Tn, D}, rng);
    TensorD srev({B, Tn, D});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < Tn; ++t)
            for (std::size_t d = 0; d < D; ++d)
                srev.at3(b, t, d) = s.at3(b, Tn - 1 - t, d);
    auto o1 = bilstm_forward(s, q);
    auto o2 = bilstm_forward(srev, qs);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < Tn; ++t)
            for (std::size_t j = 0; j < H; ++j) {
                CHECK(o1.outputs.at3(b, t, j) == o2.outputs.at3(b, Tn - 1 - t, H + j));
                CHECK(o1.outputs.at3(b, t, H + j) == o2.outputs.at3(b, Tn - 1 - t, j));
            }

    TensorD empty({1, 0, 2});
    CHECK_THROWS_AS(bilstm_forward(empty, q), ShapeError);
}

TEST_CASE("forward passes do not mutate their inputs") {
    std::mt19937 rng(13);
    auto in = random_tensor<double>({2, 6, 2}, rng);
    auto snapshot = in.data;
    auto conv = random_conv(3, 3, 2, Padding::same, rng);
    conv1d_forward(in, conv);
    maxpool1d_forward(in, 2);
    BiLstmParamsT<double> p{random_lstm(2, 2, rng), random_lstm(2, 2, rng)};
    bilstm_forward(in, p);
    CHECK(in.data == snapshot);
}

TEST_CASE("outputs stay finite on finite inputs") {
    std::mt19937 rng(14);
    auto in = random_tensor<double>({2, 8, 2}, rng, -50.0, 50.0);
    auto conv = random_conv(4, 3, 2, Padding::same, rng);
    Conv1DCache<double> cc;
    auto co = conv1d_forward(in, conv, &cc);
    CHECK(co.all_finite());
    auto [gi, gp] = conv1d_backward(random_tensor<double>(co.shape, rng), conv, cc);
    CHECK(gi.all_finite());
    BiLstmParamsT<double> p{random_lstm(3, 2, rng), random_lstm(3, 2, rng)};
    CHECK(bilstm_forward(in, p).outputs.all_finite());
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "homosynth/gradcheck.hpp"
#include "homosynth/networks.hpp"
#include "homosynth/nn_ops.hpp"

using namespace homosynth;
using nn::ConvGeometry;
using nn::Tensor;

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed, double scale = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> v(n);
  for (auto& e : v) e = dist(gen);
  return v;
}

// Brute-force direct convolution oracle, written independently of the op:
// walks output positions and sums products, zero outside the time axis.
std::vector<double> direct_conv(const std::vector<double>& x, int cin, int tin, int fin,
                                const std::vector<double>& w, int cout, int kt, int kf, int st,
                                int sf, int padb, int pade, const std::vector<double>& b, int& tout,
                                int& fout) {
  tout = (tin + padb + pade - kt) / st + 1;
  fout = (fin - kf) / sf + 1;
  std::vector<double> out(static_cast<std::size_t>(cout) * tout * fout, 0.0);
  for (int co = 0; co < cout; ++co)
    for (int to = 0; to < tout; ++to)
      for (int fo = 0; fo < fout; ++fo) {
        double acc = b[co];
        for (int ci = 0; ci < cin; ++ci)
          for (int at = 0; at < kt; ++at)
            for (int af = 0; af < kf; ++af) {
              int ti = to * st + at - padb;
              int fi = fo * sf + af;
              if (ti < 0 || ti >= tin) continue;
              acc += w[((static_cast<std::size_t>(co) * cin + ci) * kt + at) * kf + af] *
                     x[(static_cast<std::size_t>(ci) * tin + ti) * fin + fi];
            }
        out[(static_cast<std::size_t>(co) * tout + to) * fout + fo] = acc;
      }
  return out;
}

double dot_all(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

TEST_CASE("conv2d with a 1x1 identity kernel is the identity", "[layers]") {
  auto x = Tensor<double>::leaf({1, 4, 5}, random_values(20, 1));
  auto w = Tensor<double>::leaf({1, 1, 1, 1}, {1.0});
  auto b = Tensor<double>::leaf({1}, {0.0});
  auto y = nn::conv2d(x, w, b, ConvGeometry{1, 1, 0, 0});
  REQUIRE(y.shape() == std::vector<int>{1, 4, 5});
  REQUIRE(y.value() == x.value());
}

TEST_CASE("conv2d matches the brute-force oracle", "[layers]") {
  // the spec's all-ones example plus a random configuration
  SECTION("all-ones 1x4x4, 3x3 ones kernel, stride (1,2), causal time pad") {
    auto x = Tensor<double>::leaf({1, 4, 4}, std::vector<double>(16, 1.0));
    auto w = Tensor<double>::leaf({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    auto b = Tensor<double>::leaf({1}, {0.0});
    auto y = nn::conv2d(x, w, b, ConvGeometry{1, 2, 2, 0});
    int tout = 0, fout = 0;
    auto expect = direct_conv(x.value(), 1, 4, 4, w.value(), 1, 3, 3, 1, 2, 2, 0, b.value(), tout, fout);
    REQUIRE(y.shape() == std::vector<int>{1, tout, fout});
    REQUIRE(y.shape() == std::vector<int>{1, 4, 1});
    for (std::size_t i = 0; i < expect.size(); ++i)
      REQUIRE(y.value()[i] == Catch::Approx(expect[i]).margin(1e-12));
    // interior time rows see all 3 taps x 3 freq taps
    REQUIRE(y.value()[2] == Catch::Approx(9.0));
    REQUIRE(y.value()[3] == Catch::Approx(9.0));
    // first rows are clipped by the causal pad
    REQUIRE(y.value()[0] == Catch::Approx(3.0));
    REQUIRE(y.value()[1] == Catch::Approx(6.0));
  }
  SECTION("random channels and strides") {
    const int cin = 3, tin = 6, fin = 9, cout = 2, kt = 3, kf = 3;
    auto x = Tensor<double>::leaf({cin, tin, fin}, random_values(cin * tin * fin, 2));
    auto w = Tensor<double>::leaf({cout, cin, kt, kf}, random_values(cout * cin * kt * kf, 3));
    auto b = Tensor<double>::leaf({cout}, {0.3, -0.1});
    for (auto geo : {ConvGeometry{1, 2, 2, 0}, ConvGeometry{2, 1, 0, 2}, ConvGeometry{1, 3, 1, 1}}) {
      auto y = nn::conv2d(x, w, b, geo);
      int tout = 0, fout = 0;
      auto expect = direct_conv(x.value(), cin, tin, fin, w.value(), cout, kt, kf, geo.stride_t,
                                geo.stride_f, geo.pad_t_begin, geo.pad_t_end, b.value(), tout, fout);
      REQUIRE(y.shape() == std::vector<int>{cout, tout, fout});
      for (std::size_t i = 0; i < expect.size(); ++i)
        REQUIRE(y.value()[i] == Catch::Approx(expect[i]).margin(1e-12));
    }
  }
}

TEST_CASE("conv2d rejects kernels larger than the padded input", "[layers]") {
  auto x = Tensor<double>::leaf({1, 2, 2}, std::vector<double>(4, 0.0));
  auto w = Tensor<double>::leaf({1, 1, 3, 3}, std::vector<double>(9, 0.0));
  auto b = Tensor<double>::leaf({1}, {0.0});
  REQUIRE_THROWS_AS(nn::conv2d(x, w, b, ConvGeometry{1, 1, 0, 0}), Error);
}

TEST_CASE("conv2d gradients match finite differences", "[layers]") {
  auto x = Tensor<double>::leaf({2, 4, 5}, random_values(40, 4), true);
  auto w = Tensor<double>::leaf({3, 2, 3, 2}, random_values(36, 5), true);
  auto b = Tensor<double>::leaf({3}, {0.1, -0.2, 0.05}, true);
  nn::ParamList<double> params{{"x", x}, {"w", w}, {"b", b}};
  auto f = [&]() {
    auto y = nn::conv2d(x, w, b, ConvGeometry{1, 2, 2, 0});
    return nn::sum_all(nn::mul(y, y));
  };
  REQUIRE(nn::gradcheck<double>(f, params).max_rel_err < 1e-4);
}

TEST_CASE("conv_transpose2d is the exact linear adjoint of conv2d", "[layers]") {
  // <conv(x), y> == <x, convT(y)> with shared weights, zero bias
  const int cin = 2, tin = 7, fin = 9, cout = 3, kt = 3, kf = 3;
  for (auto geo : {ConvGeometry{1, 2, 2, 0}, ConvGeometry{1, 2, 0, 2}, ConvGeometry{2, 2, 1, 1}}) {
    auto w = Tensor<double>::leaf({cout, cin, kt, kf}, random_values(cout * cin * kt * kf, 6));
    auto zero_out = Tensor<double>::leaf({cout}, std::vector<double>(cout, 0.0));
    auto zero_in = Tensor<double>::leaf({cin}, std::vector<double>(cin, 0.0));
    auto x = Tensor<double>::leaf({cin, tin, fin}, random_values(cin * tin * fin, 7));
    auto cx = nn::conv2d(x, w, zero_out, geo);
    auto y = Tensor<double>::leaf(cx.shape(), random_values(cx.size(), 8));
    // convT weight layout is [cin_of_forward, cout_of_forward] viewed from
    // the transposed side, i.e. exactly the conv weight
    ConvGeometry tgeo = geo;
    auto cty = nn::conv_transpose2d(y, w, zero_in, tgeo, tin, fin);
    const double lhs = dot_all(cx.value(), y.value());
    const double rhs = dot_all(x.value(), cty.value());
    REQUIRE(std::abs(lhs - rhs) / std::max(std::abs(lhs), 1.0) < 1e-10);
  }
}

TEST_CASE("conv_transpose2d with 1x1 unit kernel is the identity", "[layers]") {
  auto x = Tensor<double>::leaf({1, 3, 4}, random_values(12, 9));
  auto w = Tensor<double>::leaf({1, 1, 1, 1}, {1.0});
  auto b = Tensor<double>::leaf({1}, {0.0});
  auto y = nn::conv_transpose2d(x, w, b, ConvGeometry{1, 1, 0, 0}, 3, 4);
  REQUIRE(y.value() == x.value());
}

TEST_CASE("conv_transpose2d gradients match finite differences", "[layers]") {
  auto x = Tensor<double>::leaf({3, 4, 4}, random_values(48, 10), true);
  auto w = Tensor<double>::leaf({3, 2, 3, 3}, random_values(54, 11), true);
  auto b = Tensor<double>::leaf({2}, {0.2, -0.3}, true);
  nn::ParamList<double> params{{"x", x}, {"w", w}, {"b", b}};
  auto f = [&]() {
    ConvGeometry geo{1, 2, 0, 2};
    auto y = nn::conv_transpose2d(x, w, b, geo, 4, 9);
    return nn::sum_all(nn::mul(y, y));
  };
  REQUIRE(nn::gradcheck<double>(f, params).max_rel_err < 1e-4);
}

TEST_CASE("layer_norm_frame normalizes per frame and gradchecks", "[layers]") {
  auto x = Tensor<double>::leaf({2, 3, 4}, random_values(24, 12, 3.0), true);
  auto gain = Tensor<double>::leaf({2}, {1.3, 0.8}, true);
  auto bias = Tensor<double>::leaf({2}, {0.1, -0.4}, true);
  auto y = nn::layer_norm_frame(x, gain, bias);
  // per-frame statistics of the normalized tensor: mean ~ affine means
  for (int t = 0; t < 3; ++t) {
    double sum = 0.0;
    for (int c = 0; c < 2; ++c)
      for (int f = 0; f < 4; ++f) {
        const double xh = (y.value()[(c * 3 + t) * 4 + f] - bias.value()[c]) / gain.value()[c];
        sum += xh;
      }
    REQUIRE(sum == Catch::Approx(0.0).margin(1e-9));
  }
  nn::ParamList<double> params{{"x", x}, {"gain", gain}, {"bias", bias}};
  auto f = [&]() {
    auto h = nn::layer_norm_frame(x, gain, bias);
    return nn::sum_all(nn::mul(h, nn::sigmoid(h)));
  };
  REQUIRE(nn::gradcheck<double>(f, params).max_rel_err < 1e-4);
}

TEST_CASE("causal softmax rows sum to one over the prefix", "[layers]") {
  auto s = Tensor<double>::leaf({4, 4}, random_values(16, 13, 2.0), true);
  auto y = nn::causal_softmax_rows(s);
  for (int i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 4; ++j) {
      if (j > i) REQUIRE(y.value()[i * 4 + j] == 0.0);
      sum += y.value()[i * 4 + j];
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
  }
  nn::ParamList<double> params{{"s", s}};
  auto f = [&]() {
    auto a = nn::causal_softmax_rows(s);
    return nn::sum_all(nn::mul(a, a));
  };
  REQUIRE(nn::gradcheck<double>(f, params).max_rel_err < 1e-4);
}

TEST_CASE("gru: zero input and zero weights give zero output", "[layers]") {
  Rng rng(1);
  nn::Gru<double> gru(rng, 3, 4);
  for (auto* t : {&gru.w_ih, &gru.w_hh, &gru.b_ih, &gru.b_hh})
    std::fill(t->mutable_value().begin(), t->mutable_value().end(), 0.0);
  auto x = Tensor<double>::leaf({5, 3}, std::vector<double>(15, 0.0));
  auto y = gru.forward(x);
  for (double v : y.value()) REQUIRE(v == 0.0);
}

TEST_CASE("gru single step matches a scalar hand-rolled cell", "[layers]") {
  // 1-d input, 1-d hidden: r = sig(x wir + bir + 0), z likewise,
  // n = tanh(x win + bin + r*(0 + bhn)), h = (1-z) n
  Rng rng(2);
  nn::Gru<double> gru(rng, 1, 1);
  const double wir = 0.7, wiz = -0.4, win = 1.1;
  const double whr = 0.3, whz = 0.9, whn = -0.6;
  const double bir = 0.05, biz = -0.02, bin_ = 0.2, bhr = 0.1, bhz = -0.3, bhn = 0.4;
  gru.w_ih.mutable_value() = {wir, wiz, win};
  gru.w_hh.mutable_value() = {whr, whz, whn};
  gru.b_ih.mutable_value() = {bir, biz, bin_};
  gru.b_hh.mutable_value() = {bhr, bhz, bhn};
  const double xv = 0.8;
  auto x = Tensor<double>::leaf({1, 1}, {xv});
  auto y = gru.forward(x);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double h0 = 0.0;
  const double r = sig(xv * wir + bir + h0 * whr + bhr);
  const double z = sig(xv * wiz + biz + h0 * whz + bhz);
  const double n = std::tanh(xv * win + bin_ + r * (h0 * whn + bhn));
  const double h1 = (1.0 - z) * n + z * h0;
  REQUIRE(y.value()[0] == Catch::Approx(h1).margin(1e-14));
}

TEST_CASE("gru gradients match finite differences", "[layers]") {
  Rng rng(3);
  nn::Gru<double> gru(rng, 3, 4);
  auto x = Tensor<double>::leaf({4, 3}, random_values(12, 14), true);
  nn::ParamList<double> params{{"x", x}};
  gru.collect("gru", params);
  auto f = [&]() {
    auto y = gru.forward(x);
    return nn::sum_all(nn::mul(y, y));
  };
  REQUIRE(nn::gradcheck<double>(f, params).max_rel_err < 1e-4);
}

TEST_CASE("attention with one step reduces to output(value(x))", "[layers]") {
  Rng rng(4);
  nn::Attention<double> attn(rng, 4);
  auto x = Tensor<double>::leaf({1, 4}, random_values(4, 15));
  auto y = attn.forward(x);
  auto expect = attn.o.forward(attn.v.forward(x));
  for (int i = 0; i < 4; ++i) REQUIRE(y.value()[i] == Catch::Approx(expect.value()[i]).margin(1e-12));
}

TEST_CASE("attention gradients match finite differences", "[layers]") {
  Rng rng(5);
  nn::Attention<double> attn(rng, 3);
  auto x = Tensor<double>::leaf({4, 3}, random_values(12, 16), true);
  nn::ParamList<double> params{{"x", x}};
  attn.collect("attn", params);
  auto f = [&]() {
    auto y = attn.forward(x);
    return nn::sum_all(nn::mul(y, y));
  };
  REQUIRE(nn::gradcheck<double>(f, params).max_rel_err < 1e-4);
}

TEST_CASE("arn block: shape contract and causality", "[layers]") {
  Rng rng(6);
  nn::ArnBlock<double> arn(rng, 4, 5);
  auto base_vals = random_values(6 * 4, 17);
  auto x = Tensor<double>::leaf({6, 4}, base_vals);
  auto y = arn.forward(x);
  REQUIRE(y.shape() == std::vector<int>{6, 5});

  // perturb frame 3: outputs at frames 0..2 must be bit-identical
  auto perturbed_vals = base_vals;
  perturbed_vals[3 * 4 + 1] += 0.25;
  auto xp = Tensor<double>::leaf({6, 4}, perturbed_vals);
  auto yp = arn.forward(xp);
  REQUIRE(std::memcmp(y.value().data(), yp.value().data(), 3 * 5 * sizeof(double)) == 0);
  // and the perturbed frame itself must differ
  bool differs = false;
  for (int j = 0; j < 5; ++j) differs = differs || y.value()[3 * 5 + j] != yp.value()[3 * 5 + j];
  REQUIRE(differs);
}

TEST_CASE("arn block gradients match finite differences", "[layers]") {
  Rng rng(7);
  nn::ArnBlock<double> arn(rng, 4, 5);
  auto x = Tensor<double>::leaf({3, 4}, random_values(12, 18), true);
  nn::ParamList<double> params{{"x", x}};
  arn.collect("arn", params);
  auto f = [&]() {
    auto y = arn.forward(x);
    return nn::sum_all(nn::mul(y, y));
  };
  REQUIRE(nn::gradcheck<double>(f, params).max_rel_err < 1e-4);
}

TEST_CASE("lifter network outputs a mask strictly inside (0,1)", "[layers]") {
  Rng rng(8);
  nn::LifterNet<double> lifter(rng, 16, 8);
  auto cep = Tensor<double>::leaf({5, 16}, random_values(80, 19, 2.0));
  auto mask = lifter.forward(cep);
  REQUIRE(mask.shape() == std::vector<int>{5, 16});
  for (double v : mask.value()) {
    REQUIRE(v > 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("zero-initialized final layer gives a 0.5 mask", "[layers]") {
  Rng rng(9);
  nn::LifterNet<double> lifter(rng, 8, 4);
  std::fill(lifter.out.w.mutable_value().begin(), lifter.out.w.mutable_value().end(), 0.0);
  std::fill(lifter.out.b.mutable_value().begin(), lifter.out.b.mutable_value().end(), 0.0);
  auto cep = Tensor<double>::leaf({3, 8}, random_values(24, 20));
  auto mask = lifter.forward(cep);
  for (double v : mask.value()) REQUIRE(v == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("lifter network gradcheck of mean mask", "[layers]") {
  Rng rng(10);
  nn::LifterNet<double> lifter(rng, 6, 5);
  auto cep = Tensor<double>::leaf({3, 6}, random_values(18, 21));
  nn::ParamList<double> params;
  lifter.collect("lifter", params);
  auto f = [&]() { return nn::mean_all(lifter.forward(cep)); };
  REQUIRE(nn::gradcheck<double>(f, params).max_rel_err < 1e-4);
}

TEST_CASE("dft_frames forward matches signal::dft and gradchecks", "[layers]") {
  auto x = Tensor<double>::leaf({2, 8}, random_values(16, 22), true);
  auto packed = nn::dft_frames(x);
  REQUIRE(packed.shape() == std::vector<int>{2, 2, 8});
  for (int t = 0; t < 2; ++t) {
    std::vector<homosynth::signal::cplx> buf(8);
    for (int m = 0; m < 8; ++m) buf[m] = {x.value()[t * 8 + m], 0.0};
    auto X = homosynth::signal::dft(buf);
    for (int k = 0; k < 8; ++k) {
      REQUIRE(packed.value()[t * 8 + k] == Catch::Approx(X[k].real()).margin(1e-12));
      REQUIRE(packed.value()[2 * 8 + t * 8 + k] == Catch::Approx(X[k].imag()).margin(1e-12));
    }
  }
  nn::ParamList<double> params{{"x", x}};
  auto f = [&]() {
    auto p = nn::dft_frames(x);
    auto e = nn::cexp(nn::mul_scalar(p, 0.1));
    return nn::sum_all(nn::mul(e, e));
  };
  REQUIRE(nn::gradcheck<double>(f, params).max_rel_err < 1e-4);
}

TEST_CASE("istft_wola forward matches signal::istft and gradchecks", "[layers]") {
  const int win = 16, hop = 8, T = 4;
  const int F = homosynth::signal::half_bins(win);
  const long out_len = win + (T - 1) * hop;
  auto x = Tensor<double>::leaf({2, T, F}, random_values(2 * T * F, 23), true);

  homosynth::signal::ComplexSpectrum spec;
  spec.dft_size = win;
  spec.hop = hop;
  spec.frames.assign(T, std::vector<homosynth::signal::cplx>(F));
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < F; ++k)
      spec.frames[t][k] = {x.value()[t * F + k], x.value()[T * F + t * F + k]};

  auto wave = nn::istft_wola(x, win, hop, out_len);
  auto ref = homosynth::signal::istft(spec, win, hop, out_len);
  REQUIRE(wave.size() == out_len);
  for (long i = 0; i < out_len; ++i)
    REQUIRE(wave.value()[i] == Catch::Approx(ref.samples[i]).margin(1e-12));

  nn::ParamList<double> params{{"x", x}};
  auto f = [&]() {
    auto y = nn::istft_wola(x, win, hop, out_len - 3);
    return nn::sum_all(nn::mul(y, y));
  };
  REQUIRE(nn::gradcheck<double>(f, params).max_rel_err < 1e-4);
}

TEST_CASE("complex pair helpers multiply and exponentiate correctly", "[layers]") {
  auto a = Tensor<double>::leaf({2, 1, 2}, {1.0, 2.0, 0.5, -1.0});  // re {1,2}, im {0.5,-1}
  auto b = Tensor<double>::leaf({2, 1, 2}, {3.0, 0.0, -0.5, 2.0});
  auto prod = nn::cmul(a, b);
  // (1+0.5i)(3-0.5i) = 3.25 + 1.0i ; (2-1i)(0+2i) = 2 + 4i
  REQUIRE(prod.value()[0] == Catch::Approx(3.25));
  REQUIRE(prod.value()[1] == Catch::Approx(2.0));
  REQUIRE(prod.value()[2] == Catch::Approx(1.0));
  REQUIRE(prod.value()[3] == Catch::Approx(4.0));

  auto e = nn::cexp(a);
  const auto z0 = std::exp(std::complex<double>(1.0, 0.5));
  const auto z1 = std::exp(std::complex<double>(2.0, -1.0));
  REQUIRE(e.value()[0] == Catch::Approx(z0.real()));
  REQUIRE(e.value()[1] == Catch::Approx(z1.real()));
  REQUIRE(e.value()[2] == Catch::Approx(z0.imag()));
  REQUIRE(e.value()[3] == Catch::Approx(z1.imag()));
}

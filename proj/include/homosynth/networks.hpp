#pragma once

// The three trainable networks: the lifter ARN that predicts the quefrency
// ratio mask, and the twin CARNs (conv encoder, ARN bottleneck, mirrored
// deconv decoder with skip concatenation) that map noisy component spectra
// to clean ones.

#include <cmath>
#include <string>
#include <vector>

#include "homosynth/errors.hpp"
#include "homosynth/nn_ops.hpp"
#include "homosynth/rng.hpp"
#include "homosynth/tensor.hpp"

namespace homosynth::nn {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

namespace init {

template <typename T>
Tensor<T> uniform(Rng& rng, std::vector<int> shape, double bound) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<T> v(n);
  for (auto& e : v) e = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::leaf(std::move(shape), std::move(v), /*requires_grad=*/true);
}

template <typename T>
Tensor<T> zeros(std::vector<int> shape) {
  return Tensor<T>::zeros(std::move(shape), /*requires_grad=*/true);
}

template <typename T>
Tensor<T> constant(std::vector<int> shape, T value) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return Tensor<T>::leaf(std::move(shape), std::vector<T>(n, value), /*requires_grad=*/true);
}

inline double fan_in_bound(int fan_in) { return std::sqrt(6.0 / fan_in); }

}  // namespace init

template <typename T>
struct Linear {
  Tensor<T> w, b;

  Linear() = default;
  Linear(Rng& rng, int in, int out, bool with_bias = true)
      : w(init::uniform<T>(rng, {in, out}, init::fan_in_bound(in))) {
    if (with_bias) b = init::zeros<T>({out});
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    auto y = matmul(x, w);
    return b.defined() ? add_rowvec(y, b) : y;
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({prefix + "/w", w});
    if (b.defined()) out.push_back({prefix + "/b", b});
  }
};

// Unidirectional GRU, zero initial state. Gate order in the fused weights
// is [reset | update | candidate], candidate uses r * (h W_hn + b_hn).
template <typename T>
struct Gru {
  int input = 0, hidden = 0;
  Tensor<T> w_ih, w_hh, b_ih, b_hh;

  Gru() = default;
  Gru(Rng& rng, int in, int h) : input(in), hidden(h) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    w_ih = init::uniform<T>(rng, {in, 3 * h}, bound);
    w_hh = init::uniform<T>(rng, {h, 3 * h}, bound);
    b_ih = init::zeros<T>({3 * h});
    b_hh = init::zeros<T>({3 * h});
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    require(x.shape().size() == 2 && x.shape()[1] == input, "Gru: input width mismatch");
    const int steps = x.shape()[0];
    const int h = hidden;
    auto xp = add_rowvec(matmul(x, w_ih), b_ih);  // [T,3H]
    auto state = Tensor<T>::zeros({1, h});
    std::vector<Tensor<T>> rows;
    rows.reserve(steps);
    for (int t = 0; t < steps; ++t) {
      auto xpt = slice(xp, 0, t, 1);
      auto hp = add_rowvec(matmul(state, w_hh), b_hh);
      auto r = sigmoid(add(slice(xpt, 1, 0, h), slice(hp, 1, 0, h)));
      auto z = sigmoid(add(slice(xpt, 1, h, h), slice(hp, 1, h, h)));
      auto n = tanh(add(slice(xpt, 1, 2 * h, h), mul(r, slice(hp, 1, 2 * h, h))));
      state = add(mul(one_minus(z), n), mul(z, state));
      rows.push_back(state);
    }
    return concat(0, rows);
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({prefix + "/w_ih", w_ih});
    out.push_back({prefix + "/w_hh", w_hh});
    out.push_back({prefix + "/b_ih", b_ih});
    out.push_back({prefix + "/b_hh", b_hh});
  }
};

// Single-head scaled dot-product self-attention with causal masking.
template <typename T>
struct Attention {
  int dim = 0;
  Linear<T> q, k, v, o;

  Attention() = default;
  // no bias on the key projection: a constant key shift is invisible to the
  // row softmax, so the parameter would be dead weight
  Attention(Rng& rng, int d)
      : dim(d), q(rng, d, d), k(rng, d, d, /*with_bias=*/false), v(rng, d, d), o(rng, d, d) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    auto qs = q.forward(x);
    auto ks = k.forward(x);
    auto vs = v.forward(x);
    auto scores = mul_scalar(matmul_nt(qs, ks), static_cast<T>(1.0 / std::sqrt(double(dim))));
    auto attn = causal_softmax_rows(scores);
    return o.forward(matmul(attn, vs));
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    q.collect(prefix + "/q", out);
    k.collect(prefix + "/k", out);
    v.collect(prefix + "/v", out);
    o.collect(prefix + "/o", out);
  }
};

template <typename T>
struct FeedForward {
  Linear<T> up, down;

  FeedForward() = default;
  FeedForward(Rng& rng, int dim, int expansion = 2)
      : up(rng, dim, expansion * dim), down(rng, expansion * dim, dim) {}

  Tensor<T> forward(const Tensor<T>& x) const { return down.forward(elu(up.forward(x))); }

  void collect(const std::string& prefix, ParamList<T>& out) {
    up.collect(prefix + "/up", out);
    down.collect(prefix + "/down", out);
  }
};

// RNN -> causal self-attention (residual) -> feedforward (residual).
template <typename T>
struct ArnBlock {
  Gru<T> gru;
  Attention<T> attn;
  FeedForward<T> ff;

  ArnBlock() = default;
  ArnBlock(Rng& rng, int in, int hidden) : gru(rng, in, hidden), attn(rng, hidden), ff(rng, hidden) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    auto g = gru.forward(x);
    auto a = add(g, attn.forward(g));
    return add(a, ff.forward(a));
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    gru.collect(prefix + "/gru", out);
    attn.collect(prefix + "/attn", out);
    ff.collect(prefix + "/ff", out);
  }
};

// One ARN block over the cepstral frame sequence, then a linear layer back
// to quefrency width and a sigmoid: the ratio-mask lifter.
template <typename T>
struct LifterNet {
  int width = 0;
  ArnBlock<T> arn;
  Linear<T> out;

  LifterNet() = default;
  LifterNet(Rng& rng, int quefrency_width, int hidden)
      : width(quefrency_width), arn(rng, quefrency_width, hidden), out(rng, hidden, quefrency_width) {}

  Tensor<T> forward(const Tensor<T>& cep) const {
    require(cep.shape().size() == 2 && cep.shape()[1] == width, "LifterNet: width mismatch");
    auto mask = sigmoid(out.forward(arn.forward(cep)));
    for (T v : mask.value())
      require(std::isfinite(static_cast<double>(v)), "LifterNet: non-finite activation");
    return mask;
  }

  void collect(const std::string& prefix, ParamList<T>& out_list) {
    arn.collect(prefix + "/arn", out_list);
    out.collect(prefix + "/out", out_list);
  }
};

struct CarnConfig {
  std::vector<int> encoder_channels{16, 32, 43, 86, 172, 172};
  int kernel_t = 3, kernel_f = 3;
  int stride_t = 1, stride_f = 2;
  int arn_hidden = 516;
  int input_channels = 2;  // real and imaginary planes
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> w, b;
  ConvGeometry geo;

  Conv2dLayer() = default;
  Conv2dLayer(Rng& rng, int cin, int cout, int kt, int kf, int st, int sf, bool causal_pad)
      : w(init::uniform<T>(rng, {cout, cin, kt, kf}, init::fan_in_bound(cin * kt * kf))),
        b(init::zeros<T>({cout})) {
    geo.stride_t = st;
    geo.stride_f = sf;
    geo.pad_t_begin = causal_pad ? kt - 1 : 0;
    geo.pad_t_end = causal_pad ? 0 : kt - 1;
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, w, b, geo); }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({prefix + "/w", w});
    out.push_back({prefix + "/b", b});
  }
};

template <typename T>
struct ConvT2dLayer {
  Tensor<T> w, b;
  ConvGeometry geo;

  ConvT2dLayer() = default;
  // Adjoint of a conv padded on the trailing time side, which makes the
  // transposed direction causal.
  ConvT2dLayer(Rng& rng, int cin, int cout, int kt, int kf, int st, int sf)
      : w(init::uniform<T>(rng, {cin, cout, kt, kf}, init::fan_in_bound(cin * kt * kf))),
        b(init::zeros<T>({cout})) {
    geo.stride_t = st;
    geo.stride_f = sf;
    geo.pad_t_begin = 0;
    geo.pad_t_end = kt - 1;
  }

  Tensor<T> forward(const Tensor<T>& x, int out_t, int out_f) const {
    return conv_transpose2d(x, w, b, geo, out_t, out_f);
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({prefix + "/w", w});
    out.push_back({prefix + "/b", b});
  }
};

template <typename T>
struct FrameNorm {
  Tensor<T> gain, bias;

  FrameNorm() = default;
  explicit FrameNorm(int channels)
      : gain(init::constant<T>({channels}, T(1))), bias(init::zeros<T>({channels})) {}

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm_frame(x, gain, bias); }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({prefix + "/gain", gain});
    out.push_back({prefix + "/bias", bias});
  }
};

// Convolutional attentive recurrent network. Input and output are packed
// complex spectra [2,T,F]; the decoder mirrors the encoder exactly, with
// each decoder stage consuming the concatenation of its input and the
// matching encoder output. A linear projection maps the ARN stack back to
// the bottleneck width (for the 512-point framing they coincide: 172*3=516).
template <typename T>
struct Carn {
  CarnConfig cfg;
  int freq_bins = 0;
  std::vector<int> freq_dims;  // per encoder stage: input F of that stage
  std::vector<Conv2dLayer<T>> enc;
  std::vector<FrameNorm<T>> enc_norm;
  ArnBlock<T> arn0, arn1;
  Linear<T> proj;
  std::vector<ConvT2dLayer<T>> dec;
  std::vector<FrameNorm<T>> dec_norm;  // all but the final stage

  Carn() = default;
  Carn(Rng& rng, const CarnConfig& config, int bins) : cfg(config), freq_bins(bins) {
    require(!cfg.encoder_channels.empty(), "Carn: empty encoder");
    int f = bins;
    int cin = cfg.input_channels;
    for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
      const int cout = cfg.encoder_channels[i];
      require(f >= cfg.kernel_f, "Carn: frequency axis exhausted; too many encoder layers");
      freq_dims.push_back(f);
      enc.emplace_back(rng, cin, cout, cfg.kernel_t, cfg.kernel_f, cfg.stride_t, cfg.stride_f,
                       /*causal_pad=*/true);
      enc_norm.emplace_back(cout);
      f = conv_out_dim(f, cfg.kernel_f, cfg.stride_f, 0);
      cin = cout;
    }
    const int bottleneck = cfg.encoder_channels.back() * f;
    arn0 = ArnBlock<T>(rng, bottleneck, cfg.arn_hidden);
    arn1 = ArnBlock<T>(rng, cfg.arn_hidden, cfg.arn_hidden);
    proj = Linear<T>(rng, cfg.arn_hidden, bottleneck);
    for (int i = static_cast<int>(cfg.encoder_channels.size()) - 1; i >= 0; --i) {
      const int skip_in = 2 * cfg.encoder_channels[i];
      const int cout = i == 0 ? cfg.input_channels : cfg.encoder_channels[i - 1];
      dec.emplace_back(rng, skip_in, cout, cfg.kernel_t, cfg.kernel_f, cfg.stride_t, cfg.stride_f);
      if (i != 0) dec_norm.emplace_back(cout);
    }
  }

  int bottleneck_bins() const {
    int f = freq_bins;
    for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i)
      f = conv_out_dim(f, cfg.kernel_f, cfg.stride_f, 0);
    return f;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    require(x.shape().size() == 3 && x.shape()[0] == cfg.input_channels &&
                x.shape()[2] == freq_bins,
            "Carn: input shape mismatch");
    const int tdim = x.shape()[1];
    std::vector<Tensor<T>> skips;
    Tensor<T> h = x;
    for (std::size_t i = 0; i < enc.size(); ++i) {
      h = elu(enc_norm[i].forward(enc[i].forward(h)));
      skips.push_back(h);
    }
    const int cb = cfg.encoder_channels.back();
    const int fb = h.shape()[2];
    auto flat = fold_time_major(h);
    auto bottled = proj.forward(arn1.forward(arn0.forward(flat)));
    Tensor<T> d = unfold_time_major(bottled, cb, fb);
    const int n = static_cast<int>(enc.size());
    for (int i = n - 1; i >= 0; --i) {
      d = concat(0, std::vector<Tensor<T>>{d, skips[i]});
      d = dec[n - 1 - i].forward(d, tdim, freq_dims[i]);
      if (i != 0) d = elu(dec_norm[n - 1 - i].forward(d));
    }
    return d;
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    for (std::size_t i = 0; i < enc.size(); ++i) {
      enc[i].collect(prefix + "/enc" + std::to_string(i) + "/conv", out);
      enc_norm[i].collect(prefix + "/enc" + std::to_string(i) + "/norm", out);
    }
    arn0.collect(prefix + "/arn0", out);
    arn1.collect(prefix + "/arn1", out);
    proj.collect(prefix + "/proj", out);
    for (std::size_t i = 0; i < dec.size(); ++i) {
      dec[i].collect(prefix + "/dec" + std::to_string(i) + "/deconv", out);
      if (i < dec_norm.size()) dec_norm[i].collect(prefix + "/dec" + std::to_string(i) + "/norm", out);
    }
  }
};

template <typename T>
std::int64_t param_count(ParamList<T>& params) {
  std::int64_t n = 0;
  for (auto& p : params) n += p.tensor.size();
  return n;
}

}  // namespace homosynth::nn

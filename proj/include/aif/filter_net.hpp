#pragma once

#include <string>
#include <vector>

#include "aif/dct.hpp"
#include "aif/ops.hpp"
#include "aif/rng.hpp"
#include "aif/tensor.hpp"

// Learnable frequency-domain information filter: DCT -> attention net over
// the (signed-log scaled) spectrum -> sigmoid mask -> Hadamard masking of the
// raw spectrum -> inverse DCT. The attention net is a 3-level
// encoder-decoder; its head bias starts at +3 so the initial mask sits near
// 0.95 and the filter begins close to identity.

namespace aif {

namespace detail {

template <class T>
struct ConvLayer {
  Tensor<T> w, b;

  static ConvLayer init(int out_c, int in_c, int k, Rng& rng, double bias0 = 0.0, double w_scale = 1.0) {
    const double stddev = w_scale * std::sqrt(2.0 / (in_c * k * k));
    ConvLayer l;
    l.w = Tensor<T>::randn({out_c, in_c, k, k}, rng, static_cast<T>(stddev));
    l.b = Tensor<T>::full({out_c}, static_cast<T>(bias0));
    l.w.set_requires_grad(true);
    l.b.set_requires_grad(true);
    return l;
  }

  Tensor<T> operator()(const Tensor<T>& x, int pad) const { return conv2d(x, w, b, 1, pad); }

  void collect(const std::string& prefix, std::vector<Param<T>>& out) const {
    out.push_back({prefix + ".weight", w});
    out.push_back({prefix + ".bias", b});
  }
};

// conv3x3 -> leaky relu -> conv3x3 -> leaky relu
template <class T>
struct ConvBlock {
  ConvLayer<T> c1, c2;

  static ConvBlock init(int out_c, int in_c, Rng& rng) {
    return {ConvLayer<T>::init(out_c, in_c, 3, rng), ConvLayer<T>::init(out_c, out_c, 3, rng)};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return leaky_relu(c2(leaky_relu(c1(x, 1)), 1)); }

  void collect(const std::string& prefix, std::vector<Param<T>>& out) const {
    c1.collect(prefix + ".conv1", out);
    c2.collect(prefix + ".conv2", out);
  }
};

}  // namespace detail

template <class T>
class InformationFilter {
 public:
  // Deterministic initialization from seed. base_width is the channel count
  // of the first attention level (doubled per level).
  static InformationFilter init(std::uint64_t seed, int channels, int base_width) {
    check(channels >= 1, "information filter: channels must be >= 1");
    check(base_width >= 1, "information filter: base_width must be >= 1");
    Rng rng(Rng::derive(seed, 0x66696c74ull));  // independent stream per component
    InformationFilter f;
    f.channels_ = channels;
    f.base_width_ = base_width;
    const int b = base_width;
    f.enc0_ = detail::ConvBlock<T>::init(b, channels, rng);
    f.enc1_ = detail::ConvBlock<T>::init(2 * b, b, rng);
    f.bott_ = detail::ConvBlock<T>::init(4 * b, 2 * b, rng);
    f.dec1_ = detail::ConvBlock<T>::init(2 * b, 4 * b + 2 * b, rng);
    f.dec0_ = detail::ConvBlock<T>::init(b, 2 * b + b, rng);
    // small head weights + positive bias: initial mask ~ sigmoid(3) = 0.95
    f.head_ = detail::ConvLayer<T>::init(channels, b, 1, rng, 3.0, 0.05);
    return f;
  }

  int channels() const { return channels_; }
  int base_width() const { return base_width_; }

  // Spectral attention map for a spectrum batch [N,C,H,W]; entries in (0,1).
  FilterMap<T> attention(const Spectrum<T>& spec) const {
    const Tensor<T>& c = spec.coefficients;
    check(c.dim(1) == channels_, "information filter: expected " + std::to_string(channels_) + " channels, got " +
                                     shape_str(c.shape()));
    check(c.dim(2) % 4 == 0 && c.dim(3) % 4 == 0,
          "information filter: spatial dims must be divisible by 4 (two downsamplings); pad the input, got " +
              shape_str(c.shape()));
    // DC terms dominate the raw spectrum by orders of magnitude; compress
    // before the attention net (the mask still multiplies raw coefficients).
    auto x = signed_log1p(c);
    auto e0 = enc0_(x);
    auto e1 = enc1_(maxpool2(e0));
    auto bt = bott_(maxpool2(e1));
    auto d1 = dec1_(concat_channels(upsample2_nearest(bt), e1));
    auto d0 = dec0_(concat_channels(upsample2_nearest(d1), e0));
    return FilterMap<T>{sigmoid(head_(d0, 0))};
  }

  struct Result {
    Tensor<T> filtered;
    FilterMap<T> map;
  };

  // x_f = idct2(M(F(x)) ⊙ F(x)); differentiable w.r.t. the filter parameters
  // and the input.
  Result forward(const Tensor<T>& x) const {
    auto spec = dct2(x);
    auto map = attention(spec);
    return {idct2(apply_spectral_mask(spec, map)), map};
  }

  // Test hook: bypasses the attention net and applies a constant mask value
  // (1 -> identity filter, 0 -> zero image).
  Result forward_forced(const Tensor<T>& x, T mask_value) const {
    auto spec = dct2(x);
    FilterMap<T> map{Tensor<T>(x.shape(), mask_value)};
    return {idct2(apply_spectral_mask(spec, map)), map};
  }

  std::vector<Param<T>> parameters() const {
    std::vector<Param<T>> out;
    enc0_.collect("filter.enc0", out);
    enc1_.collect("filter.enc1", out);
    bott_.collect("filter.bottleneck", out);
    dec1_.collect("filter.dec1", out);
    dec0_.collect("filter.dec0", out);
    head_.collect("filter.head", out);
    return out;
  }

  void set_requires_grad(bool on) {
    for (auto& p : parameters()) p.value.set_requires_grad(on);
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.value.numel();
    return n;
  }

 private:
  int channels_ = 1;
  int base_width_ = 1;
  detail::ConvBlock<T> enc0_, enc1_, bott_, dec1_, dec0_;
  detail::ConvLayer<T> head_;
};

}  // namespace aif

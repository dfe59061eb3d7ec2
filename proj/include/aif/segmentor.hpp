#pragma once

#include <string>
#include <vector>

#include "aif/filter_net.hpp"  // ConvLayer / ConvBlock
#include "aif/ops.hpp"
#include "aif/rng.hpp"
#include "aif/tensor.hpp"

// U-net style segmentor: one shared encoder, two decoders (student and
// teacher) of identical architecture. The teacher decoder is never trained
// by gradient; it only moves through ema_update, and the teacher forward
// pass is recorded nowhere (outputs are detached targets). The embedding z
// is the global-average-pooled bottleneck, so embed_dim = 4 * base_width and
// z does not depend on the decoder branch.

namespace aif {

enum class Branch { student, teacher };

template <class T>
struct SegOutput {
  Tensor<T> z;  // [N, embed_dim]
  Tensor<T> p;  // [N, classes, H, W], softmaxed
};

template <class T>
class Segmentor {
 public:
  struct Decoder {
    detail::ConvBlock<T> d1, d0;
    detail::ConvLayer<T> head;

    static Decoder init(int base, int classes, Rng& rng) {
      Decoder d;
      d.d1 = detail::ConvBlock<T>::init(2 * base, 4 * base + 2 * base, rng);
      d.d0 = detail::ConvBlock<T>::init(base, 2 * base + base, rng);
      d.head = detail::ConvLayer<T>::init(classes, base, 1, rng);
      return d;
    }

    void collect(const std::string& prefix, std::vector<Param<T>>& out) const {
      d1.collect(prefix + ".dec1", out);
      d0.collect(prefix + ".dec0", out);
      head.collect(prefix + ".head", out);
    }
  };

  static Segmentor init(std::uint64_t seed, int in_channels, int num_classes, int base_width) {
    check(in_channels >= 1 && num_classes >= 2 && base_width >= 1, "segmentor: invalid configuration");
    Rng rng(Rng::derive(seed, 0x7365676dull));
    Segmentor s;
    s.in_channels_ = in_channels;
    s.num_classes_ = num_classes;
    s.base_width_ = base_width;
    s.enc0_ = detail::ConvBlock<T>::init(base_width, in_channels, rng);
    s.enc1_ = detail::ConvBlock<T>::init(2 * base_width, base_width, rng);
    s.bott_ = detail::ConvBlock<T>::init(4 * base_width, 2 * base_width, rng);
    s.student_ = Decoder::init(base_width, num_classes, rng);
    s.teacher_ = Decoder::init(base_width, num_classes, rng);
    s.copy_student_to_teacher();
    return s;
  }

  int num_classes() const { return num_classes_; }
  int embed_dim() const { return 4 * base_width_; }
  int in_channels() const { return in_channels_; }
  int base_width() const { return base_width_; }

  // Teacher outputs are gradient-detached targets: the whole pass (including
  // the shared encoder) runs with the tape off.
  SegOutput<T> forward(const Tensor<T>& x, Branch branch) const {
    if (branch == Branch::teacher) {
      NoGradGuard ng;
      return forward_impl(x, teacher_);
    }
    return forward_impl(x, student_);
  }

  std::vector<Param<T>> encoder_parameters() const {
    std::vector<Param<T>> out;
    enc0_.collect("encoder.enc0", out);
    enc1_.collect("encoder.enc1", out);
    bott_.collect("encoder.bottleneck", out);
    return out;
  }

  std::vector<Param<T>> student_parameters() const {
    std::vector<Param<T>> out;
    student_.collect("student", out);
    return out;
  }

  std::vector<Param<T>> teacher_parameters() const {
    std::vector<Param<T>> out;
    teacher_.collect("teacher", out);
    return out;
  }

  std::vector<Param<T>> parameters() const {
    auto out = encoder_parameters();
    for (auto& p : student_parameters()) out.push_back(p);
    for (auto& p : teacher_parameters()) out.push_back(p);
    return out;
  }

  void copy_student_to_teacher() {
    auto s = student_parameters();
    auto t = teacher_parameters();
    for (std::size_t i = 0; i < s.size(); ++i) t[i].value.data() = s[i].value.data();
  }

 private:
  SegOutput<T> forward_impl(const Tensor<T>& x, const Decoder& dec) const {
    check(x.ndim() == 4 && x.dim(1) == in_channels_,
          "segmentor: expected [N," + std::to_string(in_channels_) + ",H,W], got " + shape_str(x.shape()));
    check(x.dim(2) % 4 == 0 && x.dim(3) % 4 == 0,
          "segmentor: spatial dims must be divisible by 4, got " + shape_str(x.shape()));
    auto e0 = enc0_(x);
    auto e1 = enc1_(maxpool2(e0));
    auto bt = bott_(maxpool2(e1));
    auto z = global_avg_pool(bt);
    auto d1 = dec.d1(concat_channels(upsample2_nearest(bt), e1));
    auto d0 = dec.d0(concat_channels(upsample2_nearest(d1), e0));
    auto p = softmax_channels(dec.head(d0, 0));
    return {z, p};
  }

  int in_channels_ = 1, num_classes_ = 2, base_width_ = 8;
  detail::ConvBlock<T> enc0_, enc1_, bott_;
  Decoder student_, teacher_;
};

// theta_t <- eta * theta_t + (1 - eta) * theta_s, elementwise, out of graph.
template <class T>
void ema_update(std::vector<Param<T>>& teacher, const std::vector<Param<T>>& student, double eta) {
  check(eta >= 0.0 && eta <= 1.0, "ema_update: eta must lie in [0,1], got " + std::to_string(eta));
  check(teacher.size() == student.size(), "ema_update: parameter lists differ in length");
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    auto& t = teacher[i].value.data();
    const auto& s = student[i].value.data();
    check(t.size() == s.size(), "ema_update: shape mismatch at " + teacher[i].name);
    for (std::size_t k = 0; k < t.size(); ++k)
      t[k] = static_cast<T>(eta * static_cast<double>(t[k]) + (1.0 - eta) * static_cast<double>(s[k]));
  }
}

}  // namespace aif

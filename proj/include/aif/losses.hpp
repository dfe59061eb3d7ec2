#pragma once

#include <cstdint>
#include <vector>

#include "aif/ops.hpp"
#include "aif/tensor.hpp"

// Self-supervision objectives: confidence-gated pseudo-label cross-entropy,
// cosine feature consistency, and the two composite objectives of the
// alternating scheme. Pseudo-labels are plain buffers and never carry
// gradients.

namespace aif {

// argmax labels + max-probability confidences of a teacher output [N,C,H,W]
template <class T>
struct PseudoLabel {
  std::vector<int> labels;    // [N*H*W], values in [0, classes)
  std::vector<T> confidence;  // [N*H*W], max class probability
  int batch = 0, height = 0, width = 0;
};

// Argmax ties break toward the lowest class index.
template <class T>
PseudoLabel<T> pseudo_label(const Tensor<T>& p_t) {
  check(p_t.ndim() == 4, "pseudo_label: input must be [N,C,H,W], got " + shape_str(p_t.shape()));
  const int n = p_t.dim(0), c = p_t.dim(1), hw = p_t.dim(2) * p_t.dim(3);
  PseudoLabel<T> out;
  out.batch = n;
  out.height = p_t.dim(2);
  out.width = p_t.dim(3);
  out.labels.resize(static_cast<std::size_t>(n) * hw);
  out.confidence.resize(static_cast<std::size_t>(n) * hw);
  for (int i = 0; i < n; ++i)
    for (int q = 0; q < hw; ++q) {
      int best = 0;
      T best_p = p_t.data()[static_cast<std::size_t>(i) * c * hw + q];
      for (int ch = 1; ch < c; ++ch) {
        const T v = p_t.data()[(static_cast<std::size_t>(i) * c + ch) * hw + q];
        if (v > best_p) {
          best_p = v;
          best = ch;
        }
      }
      out.labels[static_cast<std::size_t>(i) * hw + q] = best;
      out.confidence[static_cast<std::size_t>(i) * hw + q] = best_p;
    }
  return out;
}

// Eq.-8 form: per image, (1/(H*W)) * sum over pixels of
// 1[confidence > tau] * ce(pseudo_label, p_s); mean over the batch. The
// divisor is the full pixel count, not the selected count.
template <class T>
Tensor<T> loss_pl(const PseudoLabel<T>& pl, const Tensor<T>& p_s, double tau) {
  check(tau >= 0.0 && tau <= 1.0, "loss_pl: tau must lie in [0,1], got " + std::to_string(tau));
  check(p_s.ndim() == 4, "loss_pl: predictions must be [N,C,H,W]");
  const int n = p_s.dim(0), hw = p_s.dim(2) * p_s.dim(3);
  check(pl.batch == n && pl.height == p_s.dim(2) && pl.width == p_s.dim(3),
        "loss_pl: pseudo-label shape does not match predictions " + shape_str(p_s.shape()));
  Tensor<T> gate(Shape{n, pl.height, pl.width}, T(0));
  for (std::size_t i = 0; i < gate.data().size(); ++i)
    gate.data()[i] = static_cast<double>(pl.confidence[i]) > tau ? T(1) : T(0);
  auto ce = neg(log(gather_class(p_s, pl.labels)));
  return scale(sum(mul(ce, gate)), T(1) / static_cast<T>(static_cast<std::int64_t>(n) * hw));
}

// Eq.-9 consistency on [N,d] embeddings: mean cosine similarity over the
// batch. Returned negated by default so that minimizing the model objective
// aligns the embeddings; raw_cosine = true gives the printed form.
template <class T>
Tensor<T> loss_con(const Tensor<T>& z_s, const Tensor<T>& z_t, bool raw_cosine = false) {
  check(z_s.ndim() == 2 && z_t.ndim() == 2 && z_s.shape() == z_t.shape(),
        "loss_con: embeddings must both be [N,d], got " + shape_str(z_s.shape()) + " and " + shape_str(z_t.shape()));
  {
    const int n = z_s.dim(0), d = z_s.dim(1);
    for (int i = 0; i < n; ++i) {
      double ns = 0, nt = 0;
      for (int k = 0; k < d; ++k) {
        ns += static_cast<double>(z_s.data()[static_cast<std::size_t>(i) * d + k]) *
              static_cast<double>(z_s.data()[static_cast<std::size_t>(i) * d + k]);
        nt += static_cast<double>(z_t.data()[static_cast<std::size_t>(i) * d + k]) *
              static_cast<double>(z_t.data()[static_cast<std::size_t>(i) * d + k]);
      }
      check(ns > 0.0 && nt > 0.0, "loss_con: zero-norm embedding at batch index " + std::to_string(i));
    }
  }
  auto cos = div(row_dot(z_s, z_t), mul(sqrt(row_dot(z_s, z_s)), sqrt(row_dot(z_t, z_t))));
  auto m = mean(cos);
  return raw_cosine ? m : neg(m);
}

// Eq. 10: L_PL + alpha1 * L_MI (filter step).
template <class T>
Tensor<T> filter_objective(const Tensor<T>& l_pl, const Tensor<T>& l_mi, double alpha1) {
  return add(l_pl, scale(l_mi, static_cast<T>(alpha1)));
}

// Eq. 11: L_PL + alpha2 * L_Li + alpha3 * L_Con (model step).
template <class T>
Tensor<T> model_objective(const Tensor<T>& l_pl, const Tensor<T>& l_li, const Tensor<T>& l_con, double alpha2,
                          double alpha3) {
  return add(add(l_pl, scale(l_li, static_cast<T>(alpha2))), scale(l_con, static_cast<T>(alpha3)));
}

// ---------------------------------------------------------------------------
// supervised losses for source pre-training
// ---------------------------------------------------------------------------

// mean over all pixels of -log p[label]
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& p, const std::vector<int>& labels) {
  check(p.ndim() == 4, "cross_entropy: predictions must be [N,C,H,W]");
  const std::int64_t total = static_cast<std::int64_t>(p.dim(0)) * p.dim(2) * p.dim(3);
  return scale(sum(neg(log(gather_class(p, labels)))), T(1) / static_cast<T>(total));
}

// Soft Dice over foreground classes (1..C-1), computed batch-globally:
//   1 - (2*sum(p_c*g_c) + eps) / (sum(p_c) + sum(g_c) + eps), averaged over c.
template <class T>
Tensor<T> soft_dice_loss(const Tensor<T>& p, const std::vector<int>& labels, T eps = T(1)) {
  check(p.ndim() == 4 && p.dim(1) >= 2, "soft_dice_loss: predictions must be [N,C,H,W] with C >= 2");
  const int n = p.dim(0), c = p.dim(1), h = p.dim(2), w = p.dim(3);
  check(static_cast<std::int64_t>(labels.size()) == static_cast<std::int64_t>(n) * h * w,
        "soft_dice_loss: label count does not match predictions");
  Tensor<T> acc = Tensor<T>::scalar(T(0));
  for (int cls = 1; cls < c; ++cls) {
    Tensor<T> g(Shape{n, h, w}, T(0));
    T gt_sum = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) {
        g.data()[i] = T(1);
        gt_sum += T(1);
      }
    auto pc = select_channel(p, cls);
    auto inter = sum(mul(pc, g));
    auto denom = add_scalar(sum(pc), gt_sum + eps);
    auto dice = div(add_scalar(scale(inter, T(2)), eps), denom);
    acc = add(acc, sub(Tensor<T>::scalar(T(1)), dice));
  }
  return scale(acc, T(1) / static_cast<T>(c - 1));
}

}  // namespace aif

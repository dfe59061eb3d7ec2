#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aif/ops.hpp"
#include "aif/rng.hpp"
#include "aif/tensor.hpp"

// Variational conditional Gaussian q(z^t | z^s) with diagonal covariance.
// Mean and log-variance come from two 2-layer perceptrons (hidden 1024 by
// default). Log-variance is clamped to [-4, 10]: the filtered and raw
// branches share the encoder and start nearly identical, so an unclamped (or
// loosely clamped) q collapses its variance onto the pair identity map and
// the contrastive term then feeds explosive gradients into the filter and
// encoder. Both CLUB-side losses live here:
//   loss_mi          Eq.-6-style contrastive surrogate (upper bound when q fits)
//   loss_likelihood  negative log-likelihood that fits q

namespace aif {

template <class T>
class VariationalGaussian {
 public:
  static constexpr double kLogVarMin = -2.0;
  static constexpr double kLogVarMax = 10.0;

  static VariationalGaussian init(std::uint64_t seed, int embed_dim, int hidden = 1024) {
    check(embed_dim >= 1 && hidden >= 1, "variational gaussian: invalid dims");
    Rng rng(Rng::derive(seed, 0x716e6574ull));
    VariationalGaussian q;
    q.embed_dim_ = embed_dim;
    q.hidden_ = hidden;
    auto mlp = [&](const char*) {
      Mlp m;
      const double s1 = std::sqrt(2.0 / embed_dim), s2 = std::sqrt(2.0 / hidden);
      m.w1 = Tensor<T>::randn({hidden, embed_dim}, rng, static_cast<T>(s1));
      m.b1 = Tensor<T>::zeros({hidden});
      m.w2 = Tensor<T>::randn({embed_dim, hidden}, rng, static_cast<T>(s2 * 0.1));
      m.b2 = Tensor<T>::zeros({embed_dim});
      for (auto* t : {&m.w1, &m.b1, &m.w2, &m.b2}) t->set_requires_grad(true);
      return m;
    };
    q.mean_net_ = mlp("mean");
    q.logvar_net_ = mlp("logvar");
    return q;
  }

  int embed_dim() const { return embed_dim_; }

  struct Moments {
    Tensor<T> mu;      // [N,d]
    Tensor<T> logvar;  // [N,d], clamped
  };

  Moments moments(const Tensor<T>& z_s) const {
    check(z_s.ndim() == 2 && z_s.dim(1) == embed_dim_,
          "variational gaussian: expected [N," + std::to_string(embed_dim_) + "], got " + shape_str(z_s.shape()));
    return {mean_net_.forward(z_s), clamp(logvar_net_.forward(z_s), static_cast<T>(kLogVarMin),
                                           static_cast<T>(kLogVarMax))};
  }

  // log q(z_t | z_s) for a single pair of d-vectors.
  Tensor<T> log_prob(const Tensor<T>& z_t, const Tensor<T>& z_s) const {
    check(z_t.numel() == embed_dim_ && z_s.numel() == embed_dim_,
          "q_log_prob: expected " + std::to_string(embed_dim_) + "-d embeddings, got " + shape_str(z_t.shape()) +
              " and " + shape_str(z_s.shape()));
    for (const auto* t : {&z_t, &z_s})
      for (T v : t->data())
        check(std::isfinite(static_cast<double>(v)), "q_log_prob: non-finite input embedding");
    auto as_row = [&](const Tensor<T>& v) {
      return v.ndim() == 2 ? v : Tensor<T>::make_op(Shape{1, embed_dim_}, std::vector<T>(v.data()), {v},
                                                    [vn = v.node()](const std::vector<T>& g, GradMap<T>& gm) {
                                                      auto& gv = gm.buf(vn.get());
                                                      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
                                                    });
    };
    auto m = moments(as_row(z_s));
    return mean(pairwise_gaussian_logprob(m.mu, m.logvar, as_row(z_t)));
  }

  std::vector<Param<T>> parameters() const {
    std::vector<Param<T>> out;
    mean_net_.collect("q.mean_net", out);
    logvar_net_.collect("q.logvar_net", out);
    return out;
  }

  void set_requires_grad(bool on) {
    for (auto& p : parameters()) p.value.set_requires_grad(on);
  }

 private:
  struct Mlp {
    Tensor<T> w1, b1, w2, b2;
    Tensor<T> forward(const Tensor<T>& x) const { return linear(leaky_relu(linear(x, w1, b1)), w2, b2); }
    void collect(const std::string& prefix, std::vector<Param<T>>& out) const {
      out.push_back({prefix + ".fc1.weight", w1});
      out.push_back({prefix + ".fc1.bias", b1});
      out.push_back({prefix + ".fc2.weight", w2});
      out.push_back({prefix + ".fc2.bias", b2});
    }
  };

  int embed_dim_ = 1, hidden_ = 1024;
  Mlp mean_net_, logvar_net_;
};

// Eq.-6-style batch surrogate:
//   (1/N) sum_i [ log q(z^t_i|z^s_i) - (1/N) sum_j log q(z^t_j|z^s_i) ].
// The caller controls which parameters the gradient reaches by freezing
// parameter groups before building the graph (theta_q is frozen during the
// filter step).
template <class T>
Tensor<T> loss_mi(const VariationalGaussian<T>& q, const Tensor<T>& z_s, const Tensor<T>& z_t) {
  check(z_s.ndim() == 2 && z_t.ndim() == 2 && z_s.shape() == z_t.shape(),
        "loss_mi: batches must both be [N,d], got " + shape_str(z_s.shape()) + " and " + shape_str(z_t.shape()));
  check(z_s.dim(0) >= 1, "loss_mi: empty batch");
  auto m = q.moments(z_s);
  auto ll = pairwise_gaussian_logprob(m.mu, m.logvar, z_t);  // (i,j) = log q(z_t_j | z_s_i)
  return sub(mean(diag(ll)), mean(ll));
}

// Negative log-likelihood of the matched pairs; fits theta_q (and, in the
// model step, also reaches the encoder through z^s, z^t as Eq. 11 is written).
template <class T>
Tensor<T> loss_likelihood(const VariationalGaussian<T>& q, const Tensor<T>& z_s, const Tensor<T>& z_t) {
  check(z_s.ndim() == 2 && z_t.ndim() == 2 && z_s.shape() == z_t.shape(),
        "loss_likelihood: batches must both be [N,d], got " + shape_str(z_s.shape()) + " and " +
            shape_str(z_t.shape()));
  check(z_s.dim(0) >= 1, "loss_likelihood: empty batch");
  const int n = z_s.dim(0), d = z_s.dim(1);
  auto m = q.moments(z_s);
  // sum_i log q(z_t_i|z_s_i) = -0.5 * sum[(z-mu)^2 * exp(-lv) + lv] - N*d/2*log(2pi)
  auto diff = sub(z_t, m.mu);
  auto t = add(mul(mul(diff, diff), exp(neg(m.logvar))), m.logvar);
  const T half_log2pi = static_cast<T>(0.91893853320467274178);
  return add_scalar(scale(sum(t), T(0.5) / static_cast<T>(n)), static_cast<T>(d) * half_log2pi);
}

// Forward-only streaming evaluator of the same Eq.-6 quantity, for large
// sample sets where the [N,N] matrix would not fit; used by the oracle
// tests and diagnostics. Double precision.
template <class T>
double club_estimate(const VariationalGaussian<T>& q, const std::vector<double>& z_s, const std::vector<double>& z_t,
                     int n, int d) {
  check(n >= 1 && static_cast<std::size_t>(n) * d == z_s.size() && z_s.size() == z_t.size(),
        "club_estimate: bad sample layout");
  NoGradGuard ng;
  // conditional moments for every i
  std::vector<double> mu(static_cast<std::size_t>(n) * d), lv(static_cast<std::size_t>(n) * d);
  const int chunk = 512;
  for (int i0 = 0; i0 < n; i0 += chunk) {
    const int m = std::min(chunk, n - i0);
    std::vector<T> buf(static_cast<std::size_t>(m) * d);
    for (std::size_t k = 0; k < buf.size(); ++k) buf[k] = static_cast<T>(z_s[static_cast<std::size_t>(i0) * d + k]);
    auto mo = q.moments(Tensor<T>(Shape{m, d}, std::move(buf)));
    for (std::size_t k = 0; k < mo.mu.data().size(); ++k) {
      mu[static_cast<std::size_t>(i0) * d + k] = static_cast<double>(mo.mu.data()[k]);
      lv[static_cast<std::size_t>(i0) * d + k] = static_cast<double>(mo.logvar.data()[k]);
    }
  }
  const double log2pi = 1.8378770664093454836;
  auto logprob = [&](int i, int j) {
    double s = 0;
    for (int k = 0; k < d; ++k) {
      const double diff = z_t[static_cast<std::size_t>(j) * d + k] - mu[static_cast<std::size_t>(i) * d + k];
      const double l = lv[static_cast<std::size_t>(i) * d + k];
      s += diff * diff * std::exp(-l) + l + log2pi;
    }
    return -0.5 * s;
  };
  double pos = 0, neg_all = 0;
  for (int i = 0; i < n; ++i) {
    pos += logprob(i, i);
    double row = 0;
    for (int j = 0; j < n; ++j) row += logprob(i, j);
    neg_all += row / n;
  }
  return (pos - neg_all) / n;
}

}  // namespace aif

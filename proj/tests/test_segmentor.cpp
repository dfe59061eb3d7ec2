#include "doctest.h"

#include <cmath>

#include "aif/segmentor.hpp"
#include "fd_check.hpp"

using namespace aif;

namespace {

TensorF imgf(const Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  return TensorF::uniform(s, rng, 0.f, 1.f);
}

}  // namespace

TEST_CASE("uniform probabilities when head weights are zero") {
  auto seg = Segmentor<float>::init(3, 1, 4, 4);
  for (auto& p : seg.student_parameters())
    if (p.name == "student.head.weight" || p.name == "student.head.bias")
      std::fill(p.value.data().begin(), p.value.data().end(), 0.f);
  auto out = seg.forward(imgf({1, 1, 8, 8}, 1), Branch::student);
  for (float v : out.p.data()) CHECK(v == doctest::Approx(0.25f));
}

TEST_CASE("teacher equals student right after init") {
  auto seg = Segmentor<float>::init(5, 1, 2, 8);
  auto tp = seg.teacher_parameters();
  auto sp = seg.student_parameters();
  for (std::size_t i = 0; i < tp.size(); ++i) CHECK(tp[i].value.data() == sp[i].value.data());

  TensorF x = imgf({2, 1, 16, 16}, 2);
  auto s = seg.forward(x, Branch::student);
  auto t = seg.forward(x, Branch::teacher);
  for (std::size_t i = 0; i < s.p.data().size(); ++i)
    CHECK(std::abs(s.p.data()[i] - t.p.data()[i]) < 1e-6f);
  // shared encoder: identical embeddings
  for (std::size_t i = 0; i < s.z.data().size(); ++i) CHECK(s.z.data()[i] == t.z.data()[i]);
}

TEST_CASE("embedding shape and probability normalization") {
  auto seg = Segmentor<float>::init(7, 1, 3, 8);
  for (int hw : {8, 16}) {
    auto out = seg.forward(imgf({2, 1, hw, hw}, 3), Branch::student);
    CHECK(out.z.shape() == Shape{2, seg.embed_dim()});
    CHECK(out.p.shape() == Shape{2, 3, hw, hw});
    const int px = hw * hw;
    for (int n = 0; n < 2; ++n)
      for (int q = 0; q < px; ++q) {
        float s = 0;
        for (int c = 0; c < 3; ++c) s += out.p.data()[(n * 3 + c) * px + q];
        CHECK(std::abs(s - 1.f) < 1e-5f);
      }
  }
  CHECK_THROWS_AS(seg.forward(imgf({1, 1, 6, 6}, 4), Branch::student), std::invalid_argument);
}

TEST_CASE("teacher outputs are detached") {
  auto seg = Segmentor<float>::init(9, 1, 2, 4);
  for (auto& p : seg.parameters()) p.value.set_requires_grad(true);
  auto out = seg.forward(imgf({1, 1, 8, 8}, 5), Branch::teacher);
  CHECK_FALSE(out.p.requires_grad());
  CHECK(out.p.is_leaf());
  CHECK_FALSE(out.z.requires_grad());
}

TEST_CASE("ema_update: endpoints, fixed point, geometric decay") {
  auto make = [](double t0, double s0) {
    std::vector<Param<double>> t{{"w", Tensor<double>(Shape{3}, t0)}};
    std::vector<Param<double>> s{{"w", Tensor<double>(Shape{3}, s0)}};
    return std::make_pair(t, s);
  };

  {
    auto [t, s] = make(1.0, 0.0);
    ema_update(t, s, 1.0);
    for (double v : t[0].value.data()) CHECK(v == 1.0);
  }
  {
    auto [t, s] = make(1.0, 0.0);
    ema_update(t, s, 0.0);
    for (double v : t[0].value.data()) CHECK(v == 0.0);
  }
  {
    auto [t, s] = make(0.7, 0.7);  // fixed point for any eta
    ema_update(t, s, 0.42);
    for (double v : t[0].value.data()) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
  }
  {
    auto [t, s] = make(1.0, 0.0);
    const double eta = 0.9995;
    for (int k = 1; k <= 200; ++k) {
      ema_update(t, s, eta);
      const double expect = std::pow(eta, k);
      for (double v : t[0].value.data()) CHECK(v == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  {
    auto [t, s] = make(1.0, 0.0);
    CHECK_THROWS_AS(ema_update(t, s, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(ema_update(t, s, -0.1), std::invalid_argument);
  }
}

TEST_CASE("segmentor composed gradient passes finite differences (tiny config)") {
  auto seg = Segmentor<double>::init(11, 1, 2, 2);
  Rng rng(6);
  TensorD x = TensorD::uniform({1, 1, 8, 8}, rng, 0.0, 1.0);
  TensorD w = TensorD::uniform({1, 2, 8, 8}, rng, 0.2, 1.0);
  auto params = seg.parameters();
  std::vector<TensorD*> inputs{&x};
  for (auto& p : params) {
    p.value.set_requires_grad(true);
    if (p.name == "encoder.enc0.conv1.weight" || p.name == "student.head.weight" ||
        p.name == "encoder.bottleneck.conv2.bias")
      inputs.push_back(&p.value);
  }
  CHECK(aif_test::fd_max_rel_err(inputs, [&] {
          auto out = seg.forward(x, Branch::student);
          return sum(mul(out.p, w));
        }) < 1e-4);
}

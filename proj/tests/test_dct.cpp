#include "doctest.h"

#include <cmath>

#include "aif/dct.hpp"
#include "aif/rng.hpp"
#include "fd_check.hpp"

using namespace aif;
using aif_test::fd_max_rel_err;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double sum_sq(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

TEST_CASE("dct_matrix closed form") {
  CHECK_THROWS_AS(dct_matrix<double>(0), std::invalid_argument);

  auto c1 = dct_matrix<double>(1);
  CHECK(c1.item() == doctest::Approx(1.0));

  auto c2 = dct_matrix<double>(2);
  const double r = 0.7071067811865476;
  CHECK(c2.data()[0] == doctest::Approx(r));
  CHECK(c2.data()[1] == doctest::Approx(r));
  CHECK(c2.data()[2] == doctest::Approx(r));
  CHECK(c2.data()[3] == doctest::Approx(-r));
}

TEST_CASE("dct_matrix orthonormality for n in 1..64") {
  for (int n = 1; n <= 64; ++n) {
    auto c = dct_matrix<double>(n);
    // C * C^T == I
    double worst = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double dot = 0;
        for (int k = 0; k < n; ++k) dot += c.data()[i * n + k] * c.data()[j * n + k];
        worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
      }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("dct2 of a constant image is DC-only") {
  TensorD x(Shape{1, 1, 2, 2}, 1.0);
  auto spec = dct2(x);
  CHECK(spec.coefficients.data()[0] == doctest::Approx(2.0));  // sqrt(H*W)
  for (int i = 1; i < 4; ++i) CHECK(spec.coefficients.data()[i] == doctest::Approx(0.0));

  TensorD z(Shape{1, 1, 4, 4}, 0.0);
  auto zc = dct2(z).coefficients;
  for (double v : zc.data()) CHECK(v == 0.0);
}

TEST_CASE("idct2 inverts dct2 and maps DC back to constants") {
  Rng rng(5);
  TensorD x = TensorD::uniform({2, 3, 16, 16}, rng, -1.0, 1.0);
  auto back = idct2(dct2(x));
  CHECK(max_abs_diff(x.data(), back.data()) < 1e-5);

  Spectrum<double> dc{TensorD(Shape{1, 1, 2, 2}, std::vector<double>{2, 0, 0, 0})};
  auto img = idct2(dc);
  for (double v : img.data()) CHECK(v == doctest::Approx(1.0));

  Spectrum<double> zero{TensorD(Shape{1, 1, 3, 3}, 0.0)};
  auto zi = idct2(zero);
  for (double v : zi.data()) CHECK(v == 0.0);
}

TEST_CASE("round trip and Parseval across sizes incl. non-square") {
  Rng rng(6);
  const int sizes[] = {1, 2, 3, 8, 16, 64};
  for (int h : sizes)
    for (int w : sizes) {
      TensorD x = TensorD::uniform({1, 1, h, w}, rng, -1.0, 1.0);
      auto spec = dct2(x);
      CHECK(max_abs_diff(x.data(), idct2(spec).data()) < 1e-5);
      const double ex = sum_sq(x.data()), ec = sum_sq(spec.coefficients.data());
      CHECK(std::abs(ex - ec) <= 1e-5 * std::max(1.0, std::abs(ex)));
    }
}

TEST_CASE("dct2 linearity") {
  Rng rng(7);
  TensorD x = TensorD::uniform({1, 2, 8, 8}, rng, -1.0, 1.0);
  TensorD y = TensorD::uniform({1, 2, 8, 8}, rng, -1.0, 1.0);
  const double a = 1.7, b = -0.4;
  auto lhs = dct2(add(scale(x, a), scale(y, b))).coefficients;
  auto rhs = add(scale(dct2(x).coefficients, a), scale(dct2(y).coefficients, b));
  CHECK(max_abs_diff(lhs.data(), rhs.data()) < 1e-5);
}

TEST_CASE("apply_spectral_mask identity / zero / DC-only") {
  Rng rng(8);
  TensorD x = TensorD::uniform({1, 1, 2, 2}, rng, 0.0, 1.0);
  auto spec = dct2(x);

  FilterMap<double> ones{TensorD(Shape{1, 1, 2, 2}, 1.0)};
  auto same = apply_spectral_mask(spec, ones);
  CHECK(max_abs_diff(same.coefficients.data(), spec.coefficients.data()) == 0.0);

  FilterMap<double> zeros{TensorD(Shape{1, 1, 2, 2}, 0.0)};
  auto zim = idct2(apply_spectral_mask(spec, zeros));
  for (double v : zim.data()) CHECK(v == 0.0);

  FilterMap<double> dc{TensorD(Shape{1, 1, 2, 2}, std::vector<double>{1, 0, 0, 0})};
  auto rec = idct2(apply_spectral_mask(spec, dc));
  const double mean = (x.data()[0] + x.data()[1] + x.data()[2] + x.data()[3]) / 4.0;
  for (double v : rec.data()) CHECK(v == doctest::Approx(mean));

  FilterMap<double> wrong{TensorD(Shape{1, 1, 3, 3}, 1.0)};
  CHECK_THROWS_AS(apply_spectral_mask(spec, wrong), std::invalid_argument);
}

TEST_CASE("masked reconstruction pipeline passes finite differences") {
  Rng rng(9);
  TensorD x = TensorD::uniform({1, 2, 4, 4}, rng, -1.0, 1.0);
  TensorD m = TensorD::uniform({1, 2, 4, 4}, rng, 0.1, 0.9);
  TensorD w = TensorD::uniform({1, 2, 4, 4}, rng, 0.2, 1.0);
  CHECK(fd_max_rel_err({&x, &m}, [&] {
          return sum(mul(idct2(apply_spectral_mask(dct2(x), FilterMap<double>{m})), w));
        }) < 1e-4);
}

TEST_CASE("fixed_highpass_mask") {
  CHECK_THROWS_AS(fixed_highpass_mask<float>(4, 4, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(fixed_highpass_mask<float>(4, 4, 1.5), std::invalid_argument);

  auto all = fixed_highpass_mask<float>(5, 7, 0.0);
  for (float v : all.mask.data()) CHECK(v == 1.0f);

  for (double t : {0.01, 0.05, 0.77}) {
    auto m = fixed_highpass_mask<float>(6, 6, t);
    CHECK(m.mask.data()[0] == 0.0f);  // DC excluded for any t > 0
  }

  // exhaustive count oracle at 64x64, t = 0.1
  auto m = fixed_highpass_mask<float>(64, 64, 0.1);
  int zeros = 0;
  for (float v : m.mask.data()) zeros += v == 0.0f ? 1 : 0;
  int expect = 0;
  const double denom = std::sqrt(63.0 * 63.0 + 63.0 * 63.0);
  for (int u = 0; u < 64; ++u)
    for (int v = 0; v < 64; ++v)
      if (std::sqrt(double(u) * u + double(v) * v) / denom < 0.1) ++expect;
  CHECK(zeros == expect);
  CHECK(zeros > 0);

  // single-pixel image: the sole entry is DC
  auto one = fixed_highpass_mask<float>(1, 1, 0.5);
  CHECK(one.mask.data()[0] == 0.0f);
  auto one_pass = fixed_highpass_mask<float>(1, 1, 0.0);
  CHECK(one_pass.mask.data()[0] == 1.0f);
}

TEST_CASE("tile_mask replicates over batch and channels") {
  auto m = fixed_highpass_mask<float>(4, 4, 0.3);
  auto t = tile_mask(m, 2, 3);
  CHECK(t.mask.shape() == Shape{2, 3, 4, 4});
  for (int nc = 0; nc < 6; ++nc)
    for (int i = 0; i < 16; ++i) CHECK(t.mask.data()[nc * 16 + i] == m.mask.data()[i]);
}

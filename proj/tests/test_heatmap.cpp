#include <doctest.h>

#include <cmath>

#include "repose/heatmap.hpp"
#include "repose/rng.hpp"

using namespace repose;

TEST_CASE("synth_heatmap values match the analytic Gaussian") {
  Tensor<double> g = synth_heatmap<double>({64, 64, true}, 128, 5.0);
  CHECK(g.dims() == std::vector<int>{128, 128});
  CHECK(g[64 * 128 + 64] == 1.0);  // pixel-aligned peak, unnormalized
  // one sigma away along x: exp(-1/2)
  CHECK(g[64 * 128 + 69] == doctest::Approx(0.6065306597126334).epsilon(1e-12));
  for (std::int64_t i = 0; i < g.size(); ++i) {
    CHECK(g[i] >= 0.0);
    CHECK(g[i] <= 1.0);
  }
}

TEST_CASE("corner-peak mass is a quarter of the full-plane mass") {
  // Separable oracle: sum over the grid factors into two identical 1D sums
  // for a corner-centered Gaussian.
  double one_d = 0.0;
  for (int x = 0; x < 128; ++x) one_d += std::exp(-(static_cast<double>(x) * x) / 50.0);
  const double oracle = one_d * one_d;
  CHECK(oracle == doctest::Approx(45.78647885644992).epsilon(1e-12));  // frozen golden value

  Tensor<double> g = synth_heatmap<double>({0, 0, true}, 128, 5.0);
  double sum = 0.0;
  for (std::int64_t i = 0; i < g.size(); ++i) sum += g[i];
  CHECK(sum == doctest::Approx(oracle).epsilon(1e-10));
  // roughly a quarter of 2*pi*sigma^2 (the corner row/column carries the
  // half-axis mass, so the discrete value sits a bit above it)
  CHECK(sum == doctest::Approx(2.0 * 3.14159265358979323846 * 25.0 / 4.0).epsilon(0.25));
}

TEST_CASE("unannotated keypoints synthesize a zero map") {
  Tensor<float> g = synth_heatmap<float>({30, 40, false}, 64, 5.0);
  for (std::int64_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0f);
  CHECK_THROWS_AS(synth_heatmap<float>({1, 1, true}, 64, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(synth_heatmap<float>({1, 1, true}, 64, -2.0), std::invalid_argument);
}

TEST_CASE("decode recovers pixel-aligned peaks and flags degenerate maps") {
  Tensor<float> g = synth_heatmap<float>({30, 40, true}, 64, 5.0);
  PeakDecode p = decode_peak(g);
  CHECK(p.detected);
  CHECK(p.x == 30.0);
  CHECK(p.y == 40.0);
  CHECK(p.confidence == doctest::Approx(1.0));

  Tensor<float> zero({16, 16});
  PeakDecode z = decode_peak(zero);
  CHECK(!z.detected);
  CHECK(z.confidence == 0.0);
}

TEST_CASE("decode tie-break picks the smallest row-major index") {
  Tensor<float> g({8, 8});
  g[5 * 8 + 0] = 0.7f;  // (x=0, y=5)
  g[0 * 8 + 5] = 0.7f;  // (x=5, y=0), row-major index 5 comes first
  PeakDecode p = decode_peak(g);
  CHECK(p.x == 5.0);
  CHECK(p.y == 0.0);
}

TEST_CASE("decode of synth recovers any pixel-aligned peak with margin") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 32 + rng.uniform_int(0, 64);
    const double sigma = rng.uniform(1.0, 10.0);
    const int px = rng.uniform_int(1, n - 2);
    const int py = rng.uniform_int(1, n - 2);
    Tensor<float> g = synth_heatmap<float>({static_cast<double>(px), static_cast<double>(py), true}, n, sigma);
    PeakDecode p = decode_peak(g);
    CHECK(p.detected);
    CHECK(p.x == static_cast<double>(px));
    CHECK(p.y == static_cast<double>(py));
  }
}

TEST_CASE("synth_heatmap is translation equivariant under integer shifts") {
  const double sx = 17.3, sy = 21.9;
  const int n = 48;
  Tensor<double> a = synth_heatmap<double>({sx, sy, true}, n, 3.0);
  Tensor<double> b = synth_heatmap<double>({sx + 5, sy + 7, true}, n, 3.0);
  for (int y = 0; y + 7 < n; ++y)
    for (int x = 0; x + 5 < n; ++x)
      CHECK(a[static_cast<std::int64_t>(y) * n + x] == b[static_cast<std::int64_t>(y + 7) * n + (x + 5)]);
}

TEST_CASE("scale_to_output identity, constants, and peak transport") {
  Tensor<float> constant({16, 16}, 0.4f);
  Tensor<float> up = scale_to_output(constant, 128);
  for (std::int64_t i = 0; i < up.size(); ++i) CHECK(up[i] == doctest::Approx(0.4f));

  Tensor<float> same = scale_to_output(constant, 16);
  CHECK(same == constant);

  // a sharp coarse peak lands within one coarse cell of the corner-aligned
  // scaled location after upsampling
  Tensor<float> coarse({16, 16});
  coarse[5 * 16 + 9] = 1.0f;
  Tensor<float> fine = scale_to_output(coarse, 128);
  CHECK(fine.dims() == std::vector<int>{128, 128});
  PeakDecode p = decode_peak(fine);
  const double scale = 127.0 / 15.0;  // corner-aligned mapping
  CHECK(std::abs(p.x - 9 * scale) <= 8.0);
  CHECK(std::abs(p.y - 5 * scale) <= 8.0);
  for (std::int64_t i = 0; i < fine.size(); ++i) CHECK(fine[i] >= 0.0f);
}

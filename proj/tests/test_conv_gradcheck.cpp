#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "cdgc/conv.hpp"
#include "cdgc/grad_check.hpp"
#include "cdgc/ops.hpp"
#include "cdgc/rng.hpp"
#include "cdgc/tensor.hpp"
#include "oracles.hpp"

using cdgc::ConvGeometry;
using cdgc::Rng;
using cdgc::TensorD;
using cdgc::TensorF;

namespace {

// Runs both the library convolution and the tap-by-tap oracle on the same
// random instance and compares every output element.
void compare_against_oracle(std::size_t cin, std::size_t h, std::size_t w, std::size_t cout,
                            std::size_t k, const ConvGeometry& geo, std::uint64_t seed) {
  Rng rng(seed);
  auto x = TensorD::uniform({cin, h, w}, -1.0, 1.0, rng);
  auto weight = TensorD::uniform({cout, cin, k, k}, -1.0, 1.0, rng);
  auto bias = TensorD::uniform({cout}, -0.5, 0.5, rng);
  auto y = cdgc::conv2d(x, weight, bias, geo);

  const std::size_t oh = cdgc::detail::conv_output_extent("test", h, k, geo);
  const std::size_t ow = cdgc::detail::conv_output_extent("test", w, k, geo);
  const auto want = oracles::conv2d<double>(x.values(), weight.values(), bias.values(), cin, h, w,
                                            cout, k, k, geo.stride, geo.padding, geo.dilation, oh,
                                            ow);
  REQUIRE(y.numel() == want.size());
  REQUIRE((y.shape() == cdgc::Shape{cout, oh, ow}));
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(y.values()[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

}  // namespace

TEST_CASE("pointwise convolution is a per-pixel linear map") {
  // Identity weights copy the input exactly.
  auto x = TensorF::from({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto eye = TensorF::from({2, 2, 1, 1}, {1, 0, 0, 1});
  auto zero_bias = TensorF::zeros({2});
  auto y = cdgc::conv2d(x, eye, zero_bias);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == x.values()[i]);

  // A summing kernel adds the channels pixel by pixel.
  auto merge = TensorF::from({1, 2, 1, 1}, {1, 1});
  auto one_bias = TensorF::from({1}, {10.0f});
  auto z = cdgc::conv2d(x, merge, one_bias);
  CHECK(z.values()[0] == 1 + 5 + 10);
  CHECK(z.values()[3] == 4 + 8 + 10);
}

TEST_CASE("box kernel of ones sums each padded neighborhood") {
  auto x = TensorF::full({1, 4, 4}, 1.0f);
  auto w = TensorF::full({1, 1, 3, 3}, 1.0f);
  auto b = TensorF::zeros({1});
  auto y = cdgc::conv2d(x, w, b, {.stride = 1, .padding = 1, .dilation = 1});
  REQUIRE((y.shape() == cdgc::Shape{1, 4, 4}));
  CHECK(y(0, 1, 1) == 9.0f);  // interior sees the whole window
  CHECK(y(0, 0, 0) == 4.0f);  // corner loses five taps to padding
  CHECK(y(0, 0, 1) == 6.0f);  // edge loses three
}

TEST_CASE("strided, padded, and dilated cases match the direct oracle") {
  compare_against_oracle(1, 8, 8, 1, 3, {.stride = 1, .padding = 1, .dilation = 1}, 100);
  compare_against_oracle(3, 8, 8, 2, 3, {.stride = 1, .padding = 2, .dilation = 2}, 101);
  compare_against_oracle(2, 9, 9, 3, 3, {.stride = 2, .padding = 1, .dilation = 1}, 102);
  compare_against_oracle(2, 6, 6, 2, 1, {.stride = 1, .padding = 0, .dilation = 1}, 103);
  compare_against_oracle(1, 11, 7, 2, 3, {.stride = 1, .padding = 4, .dilation = 4}, 104);
}

TEST_CASE("geometry validation rejects impossible configurations") {
  auto x = TensorF::zeros({1, 5, 5});
  auto w = TensorF::zeros({1, 1, 3, 3});
  auto b = TensorF::zeros({1});
  CHECK_THROWS_AS(cdgc::conv2d(x, w, b, {.stride = 0, .padding = 0, .dilation = 1}),
                  cdgc::ConfigError);
  CHECK_THROWS_AS(cdgc::conv2d(x, w, b, {.stride = 1, .padding = 0, .dilation = 0}),
                  cdgc::ConfigError);
  // Kernel span 7 exceeds the unpadded extent 5.
  CHECK_THROWS_AS(cdgc::conv2d(x, w, b, {.stride = 1, .padding = 0, .dilation = 3}),
                  cdgc::ConfigError);
  // Sliding a 3-wide kernel over 5 leaves 2 spare positions; stride 3
  // cannot tile that evenly.
  CHECK_THROWS_AS(cdgc::conv2d(x, w, b, {.stride = 3, .padding = 0, .dilation = 1}),
                  cdgc::ConfigError);
  CHECK_THROWS_AS(cdgc::conv2d(x, TensorF::zeros({1, 2, 3, 3}), b, {}), cdgc::ShapeError);
  CHECK_THROWS_AS(cdgc::conv2d(x, w, TensorF::zeros({2}), {}), cdgc::ShapeError);
}

TEST_CASE("convolution gradients pass central-difference checks") {
  // Scalar loss with non-uniform weighting so every gradient entry matters.
  Rng rng(200);
  auto x = TensorD::uniform({2, 5, 5}, -1.0, 1.0, rng).set_requires_grad(true);
  auto w = TensorD::uniform({3, 2, 3, 3}, -0.6, 0.6, rng).set_requires_grad(true);
  auto b = TensorD::uniform({3}, -0.3, 0.3, rng).set_requires_grad(true);
  auto probe = TensorD::uniform({3, 5, 5}, -1.0, 1.0, rng);

  std::vector<TensorD> params{x, w, b};
  auto report = cdgc::grad_check<double>(
      [&] {
        auto y = cdgc::conv2d(params[0], params[1], params[2],
                              {.stride = 1, .padding = 1, .dilation = 1});
        return cdgc::sum(cdgc::mul(y, probe));
      },
      params);
  CHECK(report.max_rel_err <= 1e-4);

  // Dilated variant exercises the col2im scatter path.
  Rng rng2(201);
  auto x2 = TensorD::uniform({1, 7, 7}, -1.0, 1.0, rng2).set_requires_grad(true);
  auto w2 = TensorD::uniform({2, 1, 3, 3}, -0.6, 0.6, rng2).set_requires_grad(true);
  auto b2 = TensorD::uniform({2}, -0.3, 0.3, rng2).set_requires_grad(true);
  auto probe2 = TensorD::uniform({2, 7, 7}, -1.0, 1.0, rng2);
  std::vector<TensorD> params2{x2, w2, b2};
  auto report2 = cdgc::grad_check<double>(
      [&] {
        auto y = cdgc::conv2d(params2[0], params2[1], params2[2],
                              {.stride = 1, .padding = 2, .dilation = 2});
        return cdgc::sum(cdgc::mul(y, probe2));
      },
      params2);
  CHECK(report2.max_rel_err <= 1e-4);
}

TEST_CASE("grad_check recovers known analytic gradients") {
  // f = sum(x) has gradient exactly one; central differences agree closely.
  Rng rng(300);
  auto x = TensorD::uniform({6}, -1.0, 1.0, rng).set_requires_grad(true);
  std::vector<TensorD> params{x};
  auto report = cdgc::grad_check<double>([&] { return cdgc::sum(params[0]); }, params);
  CHECK(report.max_rel_err <= 1e-10);
  CHECK(x.grad().size() == 6);
  for (double g : x.grad()) CHECK(g == 1.0);

  // f = sum(x*x) has gradient 2x.
  auto report2 =
      cdgc::grad_check<double>([&] { return cdgc::sum(cdgc::mul(params[0], params[0])); }, params);
  CHECK(report2.max_rel_err <= 1e-7);
}

TEST_CASE("grad_check flags a wrong gradient") {
  // detach() drops the tape, so the analytic gradient is zero while the
  // numeric one is not; the harness must report a large error.
  Rng rng(301);
  auto x = TensorD::uniform({4}, 0.5, 1.5, rng).set_requires_grad(true);
  auto y = TensorD::uniform({4}, 0.5, 1.5, rng).set_requires_grad(true);
  std::vector<TensorD> params{x, y};
  auto report = cdgc::grad_check<double>(
      [&] {
        auto frozen = params[0].detach();
        return cdgc::sum(cdgc::add(cdgc::mul(frozen, frozen), params[1]));
      },
      params);
  CHECK(report.max_rel_err > 0.1);
  CHECK(report.worst_param == 0);
}

TEST_CASE("grad_check validates its own usage") {
  auto x = TensorD::from({2}, {1.0, 2.0}).set_requires_grad(true);
  std::vector<TensorD> params{x};
  CHECK_THROWS_AS(cdgc::grad_check<double>([&] { return cdgc::sum(params[0]); }, params, 1e-8),
                  cdgc::UsageError);
  CHECK_THROWS_AS(cdgc::grad_check<double>([&] { return cdgc::sum(params[0]); }, params, 1e-2),
                  cdgc::UsageError);
  CHECK_THROWS_AS(
      cdgc::grad_check<double>([&] { return cdgc::mul_scalar(params[0], 2.0); }, params),
      cdgc::UsageError);

  auto plain = TensorD::from({2}, {1.0, 2.0});
  std::vector<TensorD> bad{plain};
  CHECK_THROWS_AS(cdgc::grad_check<double>([&] { return cdgc::sum(bad[0]); }, bad),
                  cdgc::UsageError);
}

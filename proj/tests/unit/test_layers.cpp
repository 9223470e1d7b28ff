#include <doctest.h>

#include "adlite/layers.hpp"
#include "layer_gradchecks.hpp"

using namespace adlite;
using oracle::tensor;
using oracle::values;

TEST_CASE("conv2d forward matches the nested-loop oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(2), c = 1 + rng.below(3), o = 1 + rng.below(4);
    const std::size_t h = 3 + rng.below(5), w = 3 + rng.below(5);
    const std::size_t k = 1 + 2 * rng.below(3);
    const bool relu = rng.below(2) == 1;
    auto x = oracle::random_vector(rng, n * c * h * w);
    auto wt = oracle::random_vector(rng, o * c * k * k);
    auto b = oracle::random_vector(rng, o);
    Conv2D<double> conv("c", tensor({o, c, k, k}, wt), tensor({o}, b));
    auto [out, cache] = conv.forward(tensor({n, c, h, w}, x), relu ? Activation::relu : Activation::none);
    const auto expect = oracle::conv2d(x, n, c, h, w, wt, b, o, k, relu);
    REQUIRE(out.shape() == Shape{n, o, h, w});
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d 1x1 kernel with identity weights returns the input") {
  Rng rng(5);
  auto x = oracle::random_vector(rng, 2 * 3 * 4 * 4);
  TensorD w({3, 3, 1, 1});
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  Conv2D<double> conv("id", w, TensorD({3}));
  auto [out, cache] = conv.forward(tensor({2, 3, 4, 4}, x), Activation::none);
  CHECK(values(out) == x);
}

TEST_CASE("conv2d output of a 3x3 all-ones kernel on ones counts in-bounds taps") {
  Conv2D<double> conv("ones", TensorD({1, 1, 3, 3}, 1.0), TensorD({1}));
  auto [out, cache] = conv.forward(TensorD({1, 1, 5, 5}, 1.0), Activation::none);
  CHECK(out.at(0, 0, 0, 0) == 4.0);
  CHECK(out.at(0, 0, 0, 2) == 6.0);
  CHECK(out.at(0, 0, 2, 2) == 9.0);
}

TEST_CASE("conv2d rejects mismatched channels and even kernels") {
  Conv2D<double> conv("c", TensorD({2, 3, 3, 3}), TensorD({2}));
  CHECK_THROWS_AS(conv.forward(TensorD({1, 2, 4, 4}), Activation::none), ShapeError);
  CHECK_THROWS_AS(Conv2D<double>("e", TensorD({2, 3, 2, 2}), TensorD({2})), Error);
}

TEST_CASE("conv2d gradients match finite differences") {
  for (const auto& r : oracle::conv2d_gradcheck()) {
    CAPTURE(r.name);
    CHECK(r.max_error < 1e-5);
  }
}

TEST_CASE("conv2d backward without a forward cache is a state error") {
  Conv2D<double> conv("c", TensorD({1, 1, 3, 3}), TensorD({1}));
  CHECK_THROWS_AS(conv.backward(ConvCache<double>{}, TensorD({1, 1, 2, 2})), StateError);
}

TEST_CASE("dwsc forward matches the oracle and keeps channels") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(2), c = 1 + rng.below(4), h = 2 + rng.below(6),
                      w = 2 + rng.below(6);
    auto x = oracle::random_vector(rng, n * c * h * w);
    auto dw = oracle::random_vector(rng, c * 9), db = oracle::random_vector(rng, c);
    auto pw = oracle::random_vector(rng, c * c), pb = oracle::random_vector(rng, c);
    DepthwiseSeparable<double> d("d", tensor({c, 1, 3, 3}, dw), tensor({c}, db),
                                 tensor({c, c, 1, 1}, pw), tensor({c}, pb));
    auto [out, cache] = d.forward(tensor({n, c, h, w}, x));
    REQUIRE(out.shape() == Shape{n, c, h, w});
    const auto expect = oracle::dwsc(x, n, c, h, w, dw, db, pw, pb, c);
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("dwsc on a 1x1 spatial input only sees the kernel center") {
  TensorD dw({1, 1, 3, 3}, 100.0);
  dw[4] = 2.0;
  DepthwiseSeparable<double> d("d", dw, TensorD({1}), TensorD({1, 1, 1, 1}, 1.0), TensorD({1}));
  auto [out, cache] = d.forward(TensorD({1, 1, 1, 1}, 3.0));
  CHECK(out[0] == 6.0);
}

TEST_CASE("dwsc gradients match finite differences") {
  for (const auto& r : oracle::dwsc_gradcheck()) {
    CAPTURE(r.name);
    CHECK(r.max_error < 1e-5);
  }
}

TEST_CASE("dwsc parameter count is 9C + C + C*O + O") {
  Rng rng(1);
  DepthwiseSeparable<float> d("d", 128, 128, rng);
  CHECK(d.param_count() == 1280 + 16512);
}

TEST_CASE("batchnorm train mode normalizes each channel") {
  Rng rng(17);
  BatchNorm<double> bn("bn", 3);
  auto x = oracle::random_vector(rng, 4 * 3 * 5 * 5, 3.0);
  for (auto& v : x) v += 2.0;
  auto [y, cache] = bn.forward(tensor({4, 3, 5, 5}, x), Mode::train);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double s = 0, s2 = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) {
        const double v = y[(n * 3 + ch) * 25 + i];
        s += v;
        s2 += v * v;
      }
    CHECK(std::abs(s / 100) < 1e-12);
    CHECK(s2 / 100 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("batchnorm running statistics follow the 0.9 / 0.1 update") {
  BatchNorm<double> bn("bn", 1);
  // batch mean 2, biased variance 1
  auto [y, cache] = bn.forward(TensorD({2, 1, 1, 1}, std::vector<double>{1.0, 3.0}), Mode::train);
  CHECK(bn.running_mean()[0] == doctest::Approx(0.2));
  CHECK(bn.running_var()[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("batchnorm infer mode uses running statistics and leaves them alone") {
  BatchNorm<double> bn("bn", 1);
  bn.running_mean()[0] = 1.0;
  bn.running_var()[0] = 4.0;
  bn.gamma().value[0] = 2.0;
  bn.beta().value[0] = 0.5;
  auto [y, cache] = bn.forward(TensorD({1, 1, 1, 1}, 5.0), Mode::infer);
  CHECK(y[0] == doctest::Approx(2.0 * 4.0 / std::sqrt(4.0 + 1e-5) + 0.5));
  CHECK(bn.running_mean()[0] == 1.0);
  CHECK(bn.running_var()[0] == 4.0);
  CHECK_FALSE(cache.valid);
  CHECK(bn.infer(TensorD({1, 1, 1, 1}, 5.0))[0] == y[0]);
}

TEST_CASE("batchnorm on a constant channel outputs beta") {
  BatchNorm<double> bn("bn", 1);
  bn.beta().value[0] = 0.25;
  auto [y, cache] = bn.forward(TensorD({3, 1, 2, 2}, 7.0), Mode::train);
  for (double v : y.data()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("batchnorm train mode needs two values per channel") {
  BatchNorm<double> bn("bn", 2);
  CHECK_THROWS_AS(bn.forward(TensorD({1, 2, 1, 1}), Mode::train), Error);
}

TEST_CASE("batchnorm gradients match finite differences") {
  for (const auto& r : oracle::batchnorm_gradcheck()) {
    CAPTURE(r.name);
    CHECK(r.max_error < 1e-5);
  }
}

TEST_CASE("maxpool picks block maxima, first maximum on ties") {
  TensorD x({1, 1, 4, 4}, std::vector<double>{1, 2, 5, 5,   //
                                              3, 4, 5, 5,   //
                                              0, 0, -1, -2,  //
                                              0, 0, -3, -4});
  auto [y, cache] = maxpool_forward(x);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(values(y) == std::vector<double>{4, 5, 0, -1});
  auto gx = maxpool_backward(cache, TensorD({1, 1, 2, 2}, 1.0));
  // the tie blocks route the gradient to their first element in scan order
  CHECK(gx.at(0, 0, 0, 2) == 1.0);
  CHECK(gx.at(0, 0, 0, 3) == 0.0);
  CHECK(gx.at(0, 0, 2, 0) == 1.0);
  CHECK(gx.at(0, 0, 3, 1) == 0.0);
  double total = 0;
  for (double v : gx.data()) total += v;
  CHECK(total == 4.0);
}

TEST_CASE("maxpool floors odd extents") {
  auto [y, cache] = maxpool_forward(TensorD({1, 2, 5, 3}, 1.0));
  CHECK(y.shape() == Shape{1, 2, 2, 1});
}

TEST_CASE("maxpool gradient matches finite differences") {
  for (const auto& r : oracle::maxpool_gradcheck()) {
    CAPTURE(r.name);
    CHECK(r.max_error < 1e-6);
  }
}

TEST_CASE("tx layer maps 255 to 0 and 0 to 204 at m = 0.8") {
  TxLayer tx{0.8, 255.0};
  auto y = tx.forward(TensorD({3}, std::vector<double>{255.0, 0.0, 100.0}));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(204.0).epsilon(1e-15));
  CHECK(y[2] == doctest::Approx(124.0));
}

TEST_CASE("tx layer at m = 1 is an involution") {
  Rng rng(29);
  TxLayer tx{1.0, 255.0};
  std::vector<double> v(64);
  for (auto& x : v) x = static_cast<double>(rng.below(256));
  CHECK(values(tx.forward(tx.forward(tensor({64}, v)))) == v);
}

TEST_CASE("tx layer gradient is -m") {
  TxLayer tx{0.8, 255.0};
  const TensorD r({5}, std::vector<double>{1.0, -2.0, 0.5, 0.0, 3.0});
  auto g = tx.backward(r);
  for (std::size_t i = 0; i < 5; ++i) CHECK(g[i] == doctest::Approx(-0.8 * r[i]));
  for (const auto& r : oracle::tx_gradcheck()) {
    CAPTURE(r.name);
    CHECK(r.max_error < 1e-6);
  }
}

TEST_CASE("dense forward and gradients") {
  Rng rng(37);
  const std::size_t n = 3, in = 5, out = 4;
  auto x = oracle::random_vector(rng, n * in), w = oracle::random_vector(rng, out * in),
       b = oracle::random_vector(rng, out), r = oracle::random_vector(rng, n * out);
  auto make = [&] { return Dense<double>("d", tensor({out, in}, w), tensor({out}, b)); };
  auto [y, cache] = make().forward(tensor({n, in}, x));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[s * in + i];
      CHECK(y[s * out + o] == doctest::Approx(acc).epsilon(1e-13));
    }
  for (const auto& r : oracle::dense_gradcheck()) {
    CAPTURE(r.name);
    CHECK(r.max_error < 1e-6);
  }
}

TEST_CASE("softmax of equal logits is uniform and the loss is log K") {
  std::vector<std::uint32_t> y{0, 3};
  auto res = softmax_cce(TensorD({2, 4}, 0.0), y);
  for (double p : res.probs.data()) CHECK(p == doctest::Approx(0.25));
  CHECK(res.loss == doctest::Approx(std::log(4.0)));
}

TEST_CASE("softmax is stable for large logits") {
  auto p = softmax(TensorD({1, 3}, std::vector<double>{1000.0, 0.0, -1000.0}));
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p.all_finite());
  std::vector<std::uint32_t> y{2};
  auto res = softmax_cce(TensorD({1, 3}, std::vector<double>{1000.0, 0.0, -1000.0}), y);
  CHECK(std::isfinite(res.loss));
  CHECK(res.loss == doctest::Approx(2000.0));
}

TEST_CASE("softmax cce gradient matches finite differences, weighted and unweighted") {
  for (const auto& r : oracle::softmax_cce_gradcheck()) {
    CAPTURE(r.name);
    CHECK(r.max_error < 1e-6);
  }
}

TEST_CASE("weighted cce with unit weights equals plain cce") {
  Rng rng(43);
  auto z = oracle::random_vector(rng, 12);
  std::vector<std::uint32_t> y{0, 1, 2, 1};
  const std::vector<double> ones{1.0, 1.0, 1.0};
  auto a = softmax_cce(tensor({4, 3}, z), y);
  auto b = softmax_cce(tensor({4, 3}, z), y, ones);
  CHECK(a.loss == b.loss);
  CHECK(a.grad_logits == b.grad_logits);
}

TEST_CASE("softmax cce rejects out-of-range targets") {
  std::vector<std::uint32_t> y{4};
  CHECK_THROWS_AS(softmax_cce(TensorD({1, 4}), y), LabelError);
}

TEST_CASE("inverse frequency weights") {
  const std::vector<std::size_t> balanced{10, 10, 10};
  for (double w : inverse_frequency_weights(balanced)) CHECK(w == doctest::Approx(1.0));
  const std::vector<std::size_t> skew{10, 30};
  auto w = inverse_frequency_weights(skew);
  CHECK(w[0] / w[1] == doctest::Approx(3.0));
  CHECK((w[0] + w[1]) / 2 == doctest::Approx(1.0));
}

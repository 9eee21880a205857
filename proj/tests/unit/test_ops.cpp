#include <doctest.h>

#include <cmath>

#include "dagan/autograd.hpp"
#include "dagan/ops.hpp"
#include "gradcheck.hpp"

using namespace dagan;
using ag::Var;

namespace {

// Direct convolution oracle, zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1, ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor out({xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int co = 0; co < ws.n; ++co)
      for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
          double s = b ? b->data()[co] : 0.0;
          for (int ci = 0; ci < xs.c; ++ci)
            for (int i = 0; i < ws.h; ++i)
              for (int j = 0; j < ws.w; ++j) {
                const int y = r * stride + i - pad, xx = c * stride + j - pad;
                if (y < 0 || y >= xs.h || xx < 0 || xx >= xs.w) continue;
                s += static_cast<double>(x.at(n, ci, y, xx)) * w.at(co, ci, i, j);
              }
          out.at(n, co, r, c) = static_cast<float>(s);
        }
  return out;
}

// Transposed convolution oracle: scatter every input pixel through the kernel.
Tensor naive_conv_t(const Tensor& x, const Tensor& w, int stride, int pad, int opad) {
  const Shape xs = x.shape(), ws = w.shape();
  const int oh = (xs.h - 1) * stride - 2 * pad + ws.h + opad, ow = (xs.w - 1) * stride - 2 * pad + ws.w + opad;
  Tensor out({xs.n, ws.c, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int ci = 0; ci < xs.c; ++ci)
      for (int r = 0; r < xs.h; ++r)
        for (int c = 0; c < xs.w; ++c)
          for (int co = 0; co < ws.c; ++co)
            for (int i = 0; i < ws.h; ++i)
              for (int j = 0; j < ws.w; ++j) {
                const int y = r * stride + i - pad, xx = c * stride + j - pad;
                if (y < 0 || y >= oh || xx < 0 || xx >= ow) continue;
                out.at(n, co, y, xx) += x.at(n, ci, r, c) * w.at(ci, co, i, j);
              }
  return out;
}

void check_grad(std::vector<Tensor> inputs, const std::function<Var(const std::vector<Var>&)>& f, Rng& rng,
                double tol = 2e-3, double h = 1e-2) {
  const auto r = testing::directional_check(std::move(inputs), f, rng, h);
  INFO("analytic " << r.analytic << " numeric " << r.numeric);
  CHECK(r.rel_error() < tol);
}

}  // namespace

TEST_SUITE("ops") {

TEST_CASE("conv2d matches the direct oracle") {
  Rng rng(1);
  for (auto [stride, pad, k] : {std::tuple{1, 0, 3}, {1, 1, 3}, {2, 1, 4}, {2, 1, 3}, {1, 0, 1}, {1, 3, 7}}) {
    Tensor x = testing::random_tensor({2, 3, 11, 9}, rng);
    Tensor w = testing::random_tensor({4, 3, k, k}, rng);
    Tensor b = testing::random_tensor({1, 4, 1, 1}, rng);
    const Tensor expect = naive_conv(x, w, &b, stride, pad);
    const Var out = ag::conv2d(ag::constant(x), ag::constant(w), ag::constant(b), {stride, pad});
    REQUIRE(out.shape() == expect.shape());
    CHECK(testing::max_abs_diff(out.value().storage(), expect.storage()) < 1e-4);
  }
}

TEST_CASE("conv_transpose2d matches the scatter oracle") {
  Rng rng(2);
  Tensor x = testing::random_tensor({1, 3, 5, 6}, rng);
  Tensor w = testing::random_tensor({3, 2, 3, 3}, rng);
  const Tensor expect = naive_conv_t(x, w, 2, 1, 1);
  const Var out = ag::conv_transpose2d(ag::constant(x), ag::constant(w), Var(), {2, 1}, 1);
  REQUIRE(out.shape() == Shape{1, 2, 10, 12});
  CHECK(testing::max_abs_diff(out.value().storage(), expect.storage()) < 1e-5);
}

TEST_CASE("conv output size for a 3x3 single-channel layer with bias") {
  Rng rng(3);
  const Var out = ag::conv2d(ag::constant(Tensor({1, 1, 5, 5}, 1.0f)), ag::constant(Tensor({8, 1, 3, 3}, 1.0f)),
                             ag::constant(Tensor({1, 8, 1, 1}, 0.5f)), {1, 1});
  CHECK(out.shape() == Shape{1, 8, 5, 5});
  CHECK(out.value().at(0, 3, 2, 2) == doctest::Approx(9.5));
  CHECK(out.value().at(0, 3, 0, 0) == doctest::Approx(4.5));
}

TEST_CASE("reflect pad, crop, pooling, upsampling and concat values") {
  Tensor t({1, 1, 2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  const Var p = ag::reflect_pad(ag::constant(t), 1);
  REQUIRE(p.shape() == Shape{1, 1, 4, 5});
  const std::vector<float> expect{5, 4, 5, 6, 5, 2, 1, 2, 3, 2, 5, 4, 5, 6, 5, 2, 1, 2, 3, 2};
  CHECK(p.value().storage() == expect);
  CHECK(ag::crop(p, 1, 1, 2, 3).value().storage() == t.storage());

  Tensor q({1, 1, 2, 4}, std::vector<float>{1, 5, 2, 0, 3, -1, 7, 8});
  CHECK(ag::max_pool2(ag::constant(q)).value().storage() == std::vector<float>{5, 8});
  const Var up = ag::upsample_nearest2(ag::constant(Tensor({1, 1, 1, 2}, std::vector<float>{1, 2})));
  CHECK(up.value().storage() == std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2});
  const Var cat = ag::concat_channels(ag::constant(Tensor({1, 1, 1, 1}, 1.0f)), ag::constant(Tensor({1, 2, 1, 1}, 2.0f)));
  CHECK(cat.value().storage() == std::vector<float>{1, 2, 2});
}

TEST_CASE("instance norm gives zero mean and unit variance per plane") {
  Rng rng(4);
  const Var y = ag::instance_norm(ag::constant(testing::random_tensor({2, 3, 6, 5}, rng, -3, 5)));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      const float* p = y.value().plane(n, c);
      for (int i = 0; i < 30; ++i) m += p[i];
      m /= 30;
      for (int i = 0; i < 30; ++i) v += (p[i] - m) * (p[i] - m);
      CHECK(std::abs(m) < 1e-5);
      CHECK(v / 30 == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("losses on closed-form inputs") {
  const Var z = ag::constant(Tensor({1, 1, 2, 2}, 0.0f));
  CHECK(ag::bce_with_logits(z, 1.0f).item() == doctest::Approx(std::log(2.0)));
  CHECK(ag::log_one_minus_sigmoid(z).item() == doctest::Approx(-std::log(2.0)));
  const Var big = ag::constant(Tensor({1, 1, 1, 1}, 200.0f));
  CHECK(std::isfinite(ag::bce_with_logits(big, 0.0f).item()));
  CHECK(ag::bce_with_logits(big, 0.0f).item() == doctest::Approx(200.0));
  CHECK(ag::l1_mean(z, ag::constant(Tensor({1, 1, 2, 2}, std::vector<float>{1, -1, 2, 0}))).item() == doctest::Approx(1.0));
  // dx = column index: only d(dx)/dx is nonzero, 1 on all but the last column.
  Tensor f({1, 2, 4, 4});
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) f.at(0, 1, r, c) = static_cast<float>(c);
  CHECK(ag::gradient_energy(ag::constant(f)).item() == doctest::Approx(12.0 / 16.0));
}

TEST_CASE("directional gradient checks") {
  Rng rng(5);
  using V = std::vector<Var>;
  SUBCASE("conv2d") {
    Tensor w = testing::random_tensor({3, 2, 4, 4}, rng);
    Tensor R = testing::random_tensor({2, 3, 4, 3}, rng);
    check_grad({testing::random_tensor({2, 2, 8, 7}, rng), w, testing::random_tensor({1, 3, 1, 1}, rng)},
               [&](const V& v) { return testing::dot(ag::conv2d(v[0], v[1], v[2], {2, 1}), R); }, rng);
  }
  SUBCASE("conv_transpose2d") {
    Tensor R = testing::random_tensor({1, 2, 8, 10}, rng);
    check_grad({testing::random_tensor({1, 3, 4, 5}, rng), testing::random_tensor({3, 2, 3, 3}, rng),
                testing::random_tensor({1, 2, 1, 1}, rng)},
               [&](const V& v) { return testing::dot(ag::conv_transpose2d(v[0], v[1], v[2], {2, 1}, 1), R); }, rng);
  }
  SUBCASE("instance norm") {
    Tensor R = testing::random_tensor({2, 2, 5, 5}, rng);
    check_grad({testing::random_tensor({2, 2, 5, 5}, rng)},
               [&](const V& v) { return testing::dot(ag::instance_norm(v[0]), R); }, rng, 2e-3, 1e-3);
  }
  SUBCASE("padding, crop, pool, upsample, concat") {
    Tensor R = testing::random_tensor({1, 4, 8, 8}, rng);
    // Pool inputs spaced 0.05 apart so the difference step never changes the argmax.
    Tensor pooled({1, 2, 8, 8});
    for (std::size_t i = 0; i < pooled.numel(); ++i) pooled.data()[i] = 0.05f * static_cast<float>((i * 37) % 128) - 3.0f;
    check_grad({testing::random_tensor({1, 2, 4, 4}, rng), pooled},
               [&](const V& v) {
                 Var a = ag::upsample_nearest2(ag::crop(ag::reflect_pad(v[0], 2), 2, 2, 4, 4));
                 Var b = ag::upsample_nearest2(ag::max_pool2(v[1]));
                 return testing::dot(ag::concat_channels(a, b), R);
               },
               rng, 2e-3, 1e-3);
  }
  SUBCASE("activations") {
    Tensor R = testing::random_tensor({1, 1, 6, 6}, rng);
    check_grad({testing::random_tensor({1, 1, 6, 6}, rng)},
               [&](const V& v) {
                 return testing::dot(ag::add(ag::tanh(v[0]), ag::scale(ag::leaky_relu(ag::add_scalar(v[0], 0.05f), 0.2f), 0.5f)), R);
               },
               rng, 2e-3, 1e-3);
  }
  SUBCASE("reductions and adversarial terms") {
    check_grad({testing::random_tensor({1, 1, 4, 4}, rng, -3, 3), testing::random_tensor({1, 2, 5, 5}, rng)},
               [&](const V& v) {
                 return ag::weighted_sum({ag::bce_with_logits(v[0], 1.0f), ag::log_one_minus_sigmoid(v[0]),
                                          ag::gradient_energy(v[1]), ag::mean(v[1])},
                                         {1.0f, 0.5f, 2.0f, 3.0f});
               },
               rng);
  }
  SUBCASE("warp in single precision") {
    Tensor R = testing::random_tensor({1, 2, 7, 6}, rng);
    Tensor field = testing::random_tensor({1, 2, 7, 6}, rng, -2, 2);
    for (std::size_t i = 0; i < field.numel(); ++i) {
      const float fr = field.data()[i] - std::floor(field.data()[i]);
      if (fr < 0.2f || fr > 0.8f) field.data()[i] += 0.4f;
    }
    check_grad({testing::random_tensor({1, 2, 7, 6}, rng), field},
               [&](const V& v) { return testing::dot(ag::warp(v[0], v[1]), R); }, rng, 2e-3, 1e-3);
  }
}

TEST_CASE("no-grad mode records nothing and detach cuts the graph") {
  const Var p = ag::leaf(Tensor({1, 1, 2, 2}, 1.0f));
  {
    ag::NoGradGuard guard;
    const Var y = ag::scale(p, 2.0f);
    CHECK_FALSE(y.requires_grad());
  }
  const Var y = ag::add(ag::detach(ag::scale(p, 2.0f)), ag::scale(p, 3.0f));
  ag::backward(ag::mean(y));
  CHECK(p.grad().data()[0] == doctest::Approx(0.75));
}

}

// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "trident/complex_ops.hpp"
#include "trident/conv.hpp"
#include "trident/gradcheck.hpp"
#include "trident/ops.hpp"
#include "test_util.hpp"

using namespace trident::nn;
using testutil::probe;
using testutil::random_tensor;
using Catch::Approx;

namespace {
Tensor<double> dt(Shape s, std::vector<double> v) { return Tensor<double>::from_data(std::move(s), std::move(v)); }
}  // namespace

TEST_CASE("matmul basics") {
  auto eye = dt({2, 2}, {1, 0, 0, 1});
  auto m = dt({2, 2}, {3.5, -1, 2, 7});
  auto prod = matmul(eye, m);
  REQUIRE(prod.data() == m.data());

  auto a = dt({2, 2}, {1, 2, 3, 4});
  auto b = dt({2, 1}, {5, 6});
  auto c = matmul(a, b);
  REQUIRE(c.data()[0] == Approx(17));
  REQUIRE(c.data()[1] == Approx(39));

  REQUIRE_THROWS_AS(matmul(a, dt({3, 1}, {1, 2, 3})), std::invalid_argument);
}

TEST_CASE("matmul gradcheck vs central differences") {
  std::mt19937 rng(7);
  auto a = random_tensor<double>({3, 4}, rng);
  auto b = random_tensor<double>({4, 5}, rng);
  auto rep = gradient_check({a, b}, [&] { return sum_all(matmul(a, b)); });
  REQUIRE(rep.max_rel_err < 1e-4);
}

TEST_CASE("softmax values") {
  auto z = dt({3}, {0, 0, 0});
  auto y = softmax(z, 0);
  for (double v : y.data()) REQUIRE(v == Approx(1.0 / 3));

  auto x = dt({2}, {0.0, std::log(3.0)});
  auto s = softmax(x, 0);
  REQUIRE(s.data()[0] == Approx(0.25));
  REQUIRE(s.data()[1] == Approx(0.75));
}

TEST_CASE("softmax shift invariance and row sums") {
  std::mt19937 rng(11);
  for (int seed = 0; seed < 5; ++seed) {
    auto x = random_tensor<double>({4, 6}, rng, -50.0, 50.0);
    auto y1 = softmax(x, 1);
    auto shifted = add_scalar(x, 17.5);
    auto y2 = softmax(shifted, 1);
    for (size_t i = 0; i < y1.data().size(); ++i)
      REQUIRE(y1.data()[i] == Approx(y2.data()[i]).margin(1e-12));
    for (int r = 0; r < 4; ++r) {
      double sum = 0;
      for (int c = 0; c < 6; ++c) sum += y1.data()[static_cast<size_t>(r) * 6 + c];
      REQUIRE(sum == Approx(1.0).margin(1e-6));
    }
  }
}

TEST_CASE("softmax over non-trailing axis") {
  std::mt19937 rng(3);
  auto x = random_tensor<double>({3, 4, 2}, rng);
  auto y = softmax(x, 1);
  for (int a = 0; a < 3; ++a)
    for (int c = 0; c < 2; ++c) {
      double sum = 0;
      for (int j = 0; j < 4; ++j) sum += y.data()[static_cast<size_t>(a) * 8 + j * 2 + c];
      REQUIRE(sum == Approx(1.0).margin(1e-9));
    }
  auto rep = gradient_check({x}, [&] { return probe(softmax(x, 1)); });
  REQUIRE(rep.max_rel_err < 1e-4);
}

TEST_CASE("layer_norm values") {
  auto gamma = dt({3}, {1, 1, 1});
  auto beta = dt({3}, {0, 0, 0});
  auto c = dt({1, 3}, {4.2, 4.2, 4.2});
  auto y = layer_norm(c, gamma, beta, 1e-5);
  for (double v : y.data()) REQUIRE(v == Approx(0.0).margin(1e-9));

  auto g2 = dt({2}, {1, 1});
  auto b2 = dt({2}, {0, 0});
  auto x = dt({1, 2}, {1, 3});
  auto y2 = layer_norm(x, g2, b2, 1e-12);
  REQUIRE(y2.data()[0] == Approx(-1.0).margin(1e-5));
  REQUIRE(y2.data()[1] == Approx(1.0).margin(1e-5));
}

TEST_CASE("layer_norm gradcheck all inputs") {
  std::mt19937 rng(5);
  auto x = random_tensor<double>({4, 6}, rng);
  auto gamma = random_tensor<double>({6}, rng, 0.5, 1.5);
  auto beta = random_tensor<double>({6}, rng);
  auto rep = gradient_check({x, gamma, beta}, [&] { return probe(layer_norm(x, gamma, beta, 1e-5)); });
  REQUIRE(rep.max_rel_err < 1e-4);
}

TEST_CASE("batch_norm training statistics") {
  std::mt19937 rng(9);
  const int c = 3;
  auto gamma = dt({c}, {1, 1, 1});
  auto beta = dt({c}, {0, 0, 0});
  BatchNormState<double> st{Tensor<double>::zeros({c}), Tensor<double>::filled({c}, 1.0),
                            Tensor<double>::zeros({1})};

  SECTION("constant channel normalizes to zero before affine") {
    auto x = Tensor<double>::filled({5, 4, c}, 2.5);
    auto y = batch_norm(x, gamma, beta, st, true);
    for (double v : y.data()) REQUIRE(v == Approx(0.0).margin(1e-9));
  }

  SECTION("running stats after the first batch equal that batch's stats") {
    auto x = random_tensor<double>({6, 2, c}, rng);
    // independent oracle: per-channel mean/biased variance over leading axes
    std::vector<double> mu(c, 0.0), var(c, 0.0);
    const int rows = 12;
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) mu[static_cast<size_t>(j)] += x.data()[static_cast<size_t>(r) * c + j];
    for (auto& m : mu) m /= rows;
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) {
        const double d = x.data()[static_cast<size_t>(r) * c + j] - mu[static_cast<size_t>(j)];
        var[static_cast<size_t>(j)] += d * d;
      }
    for (auto& v : var) v /= rows;
    batch_norm(x, gamma, beta, st, true);
    for (int j = 0; j < c; ++j) {
      REQUIRE(st.running_mean.data()[static_cast<size_t>(j)] == Approx(mu[static_cast<size_t>(j)]));
      REQUIRE(st.running_var.data()[static_cast<size_t>(j)] == Approx(var[static_cast<size_t>(j)]));
    }
    // second batch folds in with momentum 0.9
    auto x2 = random_tensor<double>({6, 2, c}, rng);
    std::vector<double> mu2(c, 0.0);
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) mu2[static_cast<size_t>(j)] += x2.data()[static_cast<size_t>(r) * c + j];
    for (auto& m : mu2) m /= rows;
    batch_norm(x2, gamma, beta, st, true);
    for (int j = 0; j < c; ++j)
      REQUIRE(st.running_mean.data()[static_cast<size_t>(j)] ==
              Approx(0.9 * mu[static_cast<size_t>(j)] + 0.1 * mu2[static_cast<size_t>(j)]));
  }

  SECTION("inference before any training batch is an error") {
    auto x = random_tensor<double>({2, 2, c}, rng);
    REQUIRE_THROWS_AS(batch_norm(x, gamma, beta, st, false), std::runtime_error);
  }

  SECTION("gradcheck in training mode") {
    auto x = random_tensor<double>({4, 2, c}, rng);
    auto g = random_tensor<double>({c}, rng, 0.5, 1.5);
    auto b = random_tensor<double>({c}, rng);
    auto rep = gradient_check({x, g, b}, [&] {
      BatchNormState<double> fresh{Tensor<double>::zeros({c}), Tensor<double>::filled({c}, 1.0),
                                   Tensor<double>::zeros({1})};
      return probe(batch_norm(x, g, b, fresh, true));
    });
    REQUIRE(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("depthwise separable conv identities") {
  const int C = 2;
  SECTION("delta depthwise kernel + identity pointwise leaves input unchanged") {
    std::mt19937 rng(2);
    auto x = random_tensor<double>({4, 5, C}, rng);
    auto dw = Tensor<double>::zeros({3, 3, C});
    dw.data()[static_cast<size_t>((1 * 3 + 1) * C)] = 1.0;
    dw.data()[static_cast<size_t>((1 * 3 + 1) * C + 1)] = 1.0;
    auto pw = Tensor<double>::zeros({1, 1, C, C});
    pw.data()[0] = 1.0;  // identity over channels
    pw.data()[3] = 1.0;
    auto y = depthwise_separable_conv2d(x, dw, Tensor<double>::zeros({C}), pw,
                                        Tensor<double>::zeros({C}));
    for (size_t i = 0; i < x.data().size(); ++i) REQUIRE(y.data()[i] == Approx(x.data()[i]));
  }

  SECTION("all-ones 3x3 depthwise on constant input sums the window") {
    auto x = Tensor<double>::filled({5, 5, 1}, 1.7);
    auto dw = Tensor<double>::filled({3, 3, 1}, 1.0);
    auto y = depthwise_conv2d(x, dw, Tensor<double>::zeros({1}));
    REQUIRE(y.data()[static_cast<size_t>(2 * 5 + 2)] == Approx(9 * 1.7));  // interior
    REQUIRE(y.data()[0] == Approx(4 * 1.7));                               // corner
  }

  SECTION("even kernel size rejected") {
    auto x = Tensor<double>::zeros({4, 4, 1});
    auto dw = Tensor<double>::zeros({2, 2, 1});
    REQUIRE_THROWS_AS(depthwise_conv2d(x, dw, Tensor<double>()), std::invalid_argument);
  }

  SECTION("gradcheck kernels and input") {
    std::mt19937 rng(13);
    auto x = random_tensor<double>({4, 3, C}, rng);
    auto dw = random_tensor<double>({3, 3, C}, rng);
    auto dwb = random_tensor<double>({C}, rng);
    auto pw = random_tensor<double>({1, 1, C, 3}, rng);
    auto pwb = random_tensor<double>({3}, rng);
    auto rep = gradient_check({x, dw, dwb, pw, pwb},
                              [&] { return probe(depthwise_separable_conv2d(x, dw, dwb, pw, pwb)); });
    REQUIRE(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("conv2d strided gradcheck") {
  std::mt19937 rng(21);
  auto x = random_tensor<double>({5, 6, 2}, rng);
  auto w = random_tensor<double>({3, 3, 2, 4}, rng);
  auto b = random_tensor<double>({4}, rng);
  auto rep =
      gradient_check({x, w, b}, [&] { return probe(conv2d(x, w, b, 2, 2, 1, 1)); });
  REQUIRE(rep.max_rel_err < 1e-4);
  auto y = conv2d(x, w, b, 2, 2, 1, 1);
  REQUIRE(y.shape() == Shape{3, 3, 4});
}

TEST_CASE("activation values") {
  auto x = dt({4}, {0.0, 0.0, 0.0, -2.0});
  REQUIRE(gelu(x).data()[0] == Approx(0.0));
  REQUIRE(tanh_act(x).data()[1] == Approx(0.0));
  REQUIRE(sigmoid(x).data()[2] == Approx(0.5));
  REQUIRE(relu(x).data()[3] == Approx(0.0));

  // gelu(3) = 3 * Phi(3); Phi(3) = 0.5 erfc(-3/sqrt 2) = 0.99865010...
  auto g3 = gelu(dt({1}, {3.0}));
  REQUIRE(g3.data()[0] == Approx(2.99595030590512).epsilon(1e-9));
}

TEST_CASE("activation gradchecks away from the relu kink") {
  std::mt19937 rng(31);
  auto x = random_tensor<double>({3, 5}, rng, -2.0, 2.0);
  for (auto& v : x.data())
    if (std::abs(v) < 1e-2) v += 0.05;  // keep clear of the kink
  for (auto kind : {Activation::relu, Activation::gelu, Activation::tanh, Activation::sigmoid}) {
    auto rep = gradient_check({x}, [&] { return probe(activation(x, kind)); });
    REQUIRE(rep.max_rel_err < 1e-4);
  }
  REQUIRE_THROWS_AS(activation(x, static_cast<Activation>(99)), std::invalid_argument);
}

TEST_CASE("gradient_check harness") {
  SECTION("exact polynomial") {
    auto x = dt({4}, {1.0, -2.0, 0.5, 3.0});
    auto rep = gradient_check({x}, [&] { return sum_all(mul(x, x)); });
    REQUIRE(rep.max_rel_err < 1e-8);
  }

  SECTION("random 3-layer network of primitives") {
    std::mt19937 rng(42);
    auto x = random_tensor<double>({2, 4}, rng);
    auto w1 = random_tensor<double>({4, 5}, rng);
    auto b1 = random_tensor<double>({5}, rng);
    auto w2 = random_tensor<double>({5, 4}, rng);
    auto b2 = random_tensor<double>({4}, rng);
    auto g = random_tensor<double>({4}, rng, 0.5, 1.5);
    auto be = random_tensor<double>({4}, rng);
    auto w3 = random_tensor<double>({4, 2}, rng);
    auto rep = gradient_check({x, w1, b1, w2, b2, g, be, w3}, [&] {
      auto h1 = gelu(add_bias(matmul(x, w1), b1));
      auto h2 = tanh_act(add_bias(matmul(h1, w2), b2));
      auto h3 = layer_norm(h2, g, be, 1e-5);
      auto h4 = softmax(matmul(h3, w3), 1);
      return probe(h4);
    });
    REQUIRE(rep.max_rel_err < 1e-4);
  }

  SECTION("relu kink coordinates are excluded and reported") {
    auto x = dt({3}, {0.0, 1.0, -1.0});
    GradCheckOptions opts;
    opts.exclude = [&](size_t, int64_t, double v) { return std::abs(v) <= 1e-3; };
    auto rep = gradient_check({x}, [&] { return sum_all(relu(x)); }, opts);
    REQUIRE(rep.excluded == 1);
    REQUIRE(rep.checked == 2);
    REQUIRE(rep.max_rel_err < 1e-8);
  }
}

TEST_CASE("shape ops gradchecks") {
  std::mt19937 rng(55);
  SECTION("reshape and permute") {
    auto x = random_tensor<double>({2, 3, 4}, rng);
    auto rep = gradient_check({x}, [&] { return probe(reshape(x, {4, 6})); });
    REQUIRE(rep.max_rel_err < 1e-4);
    auto rep2 = gradient_check({x}, [&] { return probe(permute(x, {2, 0, 1})); });
    REQUIRE(rep2.max_rel_err < 1e-4);
    auto y = permute(x, {2, 0, 1});
    REQUIRE(y.shape() == Shape{4, 2, 3});
    REQUIRE(y.data()[0] == x.data()[0]);
    // spot check: y[c,a,b] == x[a,b,c]
    REQUIRE(y.data()[static_cast<size_t>(3 * 6 + 1 * 3 + 2)] ==
            x.data()[static_cast<size_t>(1 * 12 + 2 * 4 + 3)]);
  }
  SECTION("rank-4 permute") {
    auto x = random_tensor<double>({2, 3, 2, 2}, rng);
    auto rep = gradient_check({x}, [&] { return probe(permute(x, {1, 3, 0, 2})); });
    REQUIRE(rep.max_rel_err < 1e-4);
  }
  SECTION("stack_last and expand_mid") {
    auto a = random_tensor<double>({3, 2}, rng);
    auto b = random_tensor<double>({3, 2}, rng);
    auto rep = gradient_check({a, b}, [&] { return probe(stack_last(a, b)); });
    REQUIRE(rep.max_rel_err < 1e-4);
    auto g = random_tensor<double>({2, 3}, rng);
    auto rep2 = gradient_check({g}, [&] { return probe(expand_mid(g, 4)); });
    REQUIRE(rep2.max_rel_err < 1e-4);
  }
  SECTION("bmm variants") {
    auto a = random_tensor<double>({3, 2, 4}, rng);
    auto b = random_tensor<double>({3, 4, 2}, rng);
    auto rep = gradient_check({a, b}, [&] { return probe(bmm(a, b)); });
    REQUIRE(rep.max_rel_err < 1e-4);
    auto c = random_tensor<double>({3, 5, 4}, rng);
    auto rep2 = gradient_check({a, c}, [&] { return probe(bmm_nt(a, c)); });
    REQUIRE(rep2.max_rel_err < 1e-4);
  }
  SECTION("reductions and bias") {
    auto x = random_tensor<double>({3, 4}, rng);
    auto b = random_tensor<double>({4}, rng);
    auto y = random_tensor<double>({3, 4}, rng);
    REQUIRE(gradient_check({x, b}, [&] { return probe(add_bias(x, b)); }).max_rel_err < 1e-4);
    REQUIRE(gradient_check({x}, [&] { return mean_all(x); }).max_rel_err < 1e-4);
    REQUIRE(gradient_check({x, y}, [&] { return mse(x, y); }).max_rel_err < 1e-4);
    REQUIRE(gradient_check({x}, [&] { return probe(mean_over_leading(x)); }).max_rel_err < 1e-4);
    REQUIRE(gradient_check({x, y}, [&] { return probe(mul(sub(x, y), add(x, y))); }).max_rel_err <
            1e-4);
    REQUIRE(gradient_check({x}, [&] { return probe(scale(add_scalar(x, 0.3), -1.7)); }).max_rel_err <
            1e-4);
  }
}

TEST_CASE("complex primitives") {
  std::mt19937 rng(77);
  SECTION("complex_mul identity and rotation") {
    auto z = random_tensor<double>({4, 2}, rng);
    auto one = Tensor<double>::zeros({4, 2});
    for (int i = 0; i < 4; ++i) one.data()[static_cast<size_t>(2 * i)] = 1.0;
    auto y = complex_mul(z, one);
    for (size_t i = 0; i < z.data().size(); ++i) REQUIRE(y.data()[i] == Approx(z.data()[i]));
    auto imag = Tensor<double>::zeros({4, 2});
    for (int i = 0; i < 4; ++i) imag.data()[static_cast<size_t>(2 * i + 1)] = 1.0;
    auto rot = complex_mul(z, imag);  // (a+bi) * i = -b + ai
    for (int i = 0; i < 4; ++i) {
      REQUIRE(rot.data()[static_cast<size_t>(2 * i)] == Approx(-z.data()[static_cast<size_t>(2 * i + 1)]));
      REQUIRE(rot.data()[static_cast<size_t>(2 * i + 1)] == Approx(z.data()[static_cast<size_t>(2 * i)]));
    }
  }
  SECTION("gradchecks") {
    auto a = random_tensor<double>({3, 2, 2}, rng);
    auto b = random_tensor<double>({3, 2, 2}, rng);
    REQUIRE(gradient_check({a, b}, [&] { return probe(complex_mul(a, b)); }).max_rel_err < 1e-4);
    REQUIRE(gradient_check({a}, [&] { return probe(complex_compress(a, 0.3, 1e-8)); }).max_rel_err <
            1e-4);
    REQUIRE(gradient_check({a}, [&] { return probe(complex_abs_pow(a, 0.3, 1e-8)); }).max_rel_err <
            1e-4);
    REQUIRE(gradient_check({a}, [&] { return probe(tanh_radial_clamp(a)); }).max_rel_err < 1e-4);
  }
  SECTION("tanh_radial_clamp bounds and limits") {
    auto z = dt({3, 2}, {0.0, 0.0, 100.0, 0.0, -3.0, 4.0});
    auto m = tanh_radial_clamp(z);
    REQUIRE(m.data()[0] == 0.0);
    REQUIRE(m.data()[1] == 0.0);
    REQUIRE(m.data()[2] == Approx(1.0).margin(1e-6));
    REQUIRE(m.data()[3] == Approx(0.0).margin(1e-12));
    const double mag = std::hypot(m.data()[4], m.data()[5]);
    REQUIRE(mag < 1.0);
    REQUIRE(mag == Approx(std::tanh(5.0)).margin(1e-9));
  }
}

TEST_CASE("every primitive passes gradcheck at random small shapes, 10 seeds") {
  for (unsigned seed = 0; seed < 10; ++seed) {
    std::mt19937 rng(seed + 1);
    std::uniform_int_distribution<int> d(1, 6);
    const int m = d(rng), k = d(rng), n = d(rng);
    auto a = random_tensor<double>({m, k}, rng);
    auto b = random_tensor<double>({k, n}, rng);
    REQUIRE(gradient_check({a, b}, [&] { return probe(matmul(a, b)); }).max_rel_err < 1e-4);
    auto x = random_tensor<double>({m, k}, rng);
    for (auto& v : x.data())
      if (std::abs(v) < 5e-3) v += 0.01;
    REQUIRE(gradient_check({x}, [&] { return probe(gelu(relu(x))); }).max_rel_err < 1e-4);
    REQUIRE(gradient_check({x}, [&] { return probe(softmax(x, 1)); }).max_rel_err < 1e-4);
    auto g = random_tensor<double>({k}, rng, 0.5, 1.5);
    auto be = random_tensor<double>({k}, rng);
    REQUIRE(gradient_check({x, g, be}, [&] { return probe(layer_norm(x, g, be, 1e-5)); }).max_rel_err <
            1e-4);
  }
}

TEST_CASE("tape invariants") {
  SECTION("backward touches each recorded op exactly once") {
    std::mt19937 rng(1);
    auto a = random_tensor<double>({3, 3}, rng);
    auto b = random_tensor<double>({3, 3}, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    Tape<double> tape;
    {
      TapeScope<double> scope(tape);
      auto y = sum_all(gelu(add(matmul(a, b), b)));
      REQUIRE(tape.size() == 4);
      tape.backward(y);
    }
    REQUIRE(tape.visited() == tape.size());
  }

  SECTION("entries hold topologically ordered ids") {
    std::mt19937 rng(2);
    auto a = random_tensor<double>({2, 2}, rng);
    a.set_requires_grad(true);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto y = mul(relu(a), tanh_act(a));
    for (const auto& e : tape.entries())
      for (int in : e.input_ids) REQUIRE(in < e.output_id);
  }

  SECTION("no recording without an active tape") {
    std::mt19937 rng(3);
    auto a = random_tensor<double>({2, 2}, rng);
    a.set_requires_grad(true);
    auto y = relu(a);
    REQUIRE_FALSE(y.requires_grad());
  }

  SECTION("finite checks name the offending op") {
    auto a = dt({2}, {1e308, 1e308});
    a.set_requires_grad(true);
    Tape<double> tape;
    tape.finite_checks = true;
    TapeScope<double> scope(tape);
    REQUIRE_THROWS_WITH(mul(a, a), Catch::Matchers::ContainsSubstring("mul"));
  }
}

TEST_CASE("forward determinism") {
  std::mt19937 rng1(99), rng2(99);
  auto a1 = random_tensor<float>({7, 9}, rng1);
  auto b1 = random_tensor<float>({9, 5}, rng1);
  auto a2 = random_tensor<float>({7, 9}, rng2);
  auto b2 = random_tensor<float>({9, 5}, rng2);
  auto y1 = softmax(gelu(matmul(a1, b1)), 1);
  auto y2 = softmax(gelu(matmul(a2, b2)), 1);
  REQUIRE(std::memcmp(y1.data().data(), y2.data().data(), y1.data().size() * sizeof(float)) == 0);
}

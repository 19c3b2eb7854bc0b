// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "unicontrol/gradcheck.hpp"
#include "unicontrol/gradcheck_suite.hpp"
#include "unicontrol/ops.hpp"
#include "unicontrol/rng.hpp"
#include "unicontrol/tape.hpp"
#include "unicontrol/tensor.hpp"

using namespace uc;

namespace {

Tensor rand_tensor(std::vector<int> shape, Xoshiro256pp& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values_mut()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

}  // namespace

TEST_CASE("conv2d with a 1x1 identity kernel and zero bias is the identity") {
  Xoshiro256pp rng(1);
  Tensor x = rand_tensor({2, 5, 5}, rng);
  // kernel[o][c] = 1 if o == c else 0
  Tensor w = Tensor::zeros({2, 2, 1, 1});
  w.values_mut()[0] = 1.0f;
  w.values_mut()[3] = 1.0f;
  Tensor b = Tensor::zeros({2});
  Tensor y = conv2d(x, w, b);
  CHECK(bits_equal(x, y));
}

TEST_CASE("silu(0) is 0 and mul by ones is the identity") {
  Tensor zero = Tensor::zeros({4});
  Tensor s = silu(zero);
  for (float v : s.values()) CHECK(v == 0.0f);

  Xoshiro256pp rng(2);
  Tensor x = rand_tensor({3, 4, 4}, rng);
  Tensor y = mul(x, Tensor::ones({3, 4, 4}));
  CHECK(bits_equal(x, y));
}

TEST_CASE("conv2d 3x3 matches a sliding-window oracle") {
  Xoshiro256pp rng(3);
  Tensor x = rand_tensor({1, 4, 4}, rng);
  Tensor w = rand_tensor({1, 1, 3, 3}, rng);
  Tensor b = Tensor::from({1}, {0.25f});
  Tensor y = conv2d(x, w, b, 1, 0);
  REQUIRE(y.shape() == std::vector<int>{1, 2, 2});
  // Direct sliding-window loop in 64-bit.
  for (int oi = 0; oi < 2; ++oi) {
    for (int oj = 0; oj < 2; ++oj) {
      double acc = 0.25;
      for (int ki = 0; ki < 3; ++ki) {
        for (int kj = 0; kj < 3; ++kj) {
          acc += static_cast<double>(w.values()[static_cast<std::size_t>(ki * 3 + kj)]) *
                 x.values()[static_cast<std::size_t>((oi + ki) * 4 + (oj + kj))];
        }
      }
      const double got = y.values()[static_cast<std::size_t>(oi * 2 + oj)];
      CHECK(std::abs(got - acc) < 1e-6);
    }
  }
}

TEST_CASE("conv2d with stride and padding matches the oracle") {
  Xoshiro256pp rng(4);
  Tensor x = rand_tensor({2, 5, 5}, rng);
  Tensor w = rand_tensor({3, 2, 3, 3}, rng);
  Tensor b = rand_tensor({3}, rng);
  const int stride = 2, pad = 1;
  Tensor y = conv2d(x, w, b, stride, pad);
  REQUIRE(y.shape() == std::vector<int>{3, 3, 3});
  for (int o = 0; o < 3; ++o) {
    for (int oi = 0; oi < 3; ++oi) {
      for (int oj = 0; oj < 3; ++oj) {
        double acc = b.values()[static_cast<std::size_t>(o)];
        for (int c = 0; c < 2; ++c) {
          for (int ki = 0; ki < 3; ++ki) {
            for (int kj = 0; kj < 3; ++kj) {
              const int ii = oi * stride - pad + ki;
              const int jj = oj * stride - pad + kj;
              if (ii < 0 || ii >= 5 || jj < 0 || jj >= 5) continue;
              acc += static_cast<double>(
                         w.values()[static_cast<std::size_t>(((o * 2 + c) * 3 + ki) * 3 + kj)]) *
                     x.values()[static_cast<std::size_t>((c * 5 + ii) * 5 + jj)];
            }
          }
        }
        const double got = y.values()[static_cast<std::size_t>((o * 3 + oi) * 3 + oj)];
        CHECK(std::abs(got - acc) < 1e-5);
      }
    }
  }
}

TEST_CASE("shape mismatches raise descriptive errors") {
  Tensor x = Tensor::zeros({2, 4, 4});
  Tensor w = Tensor::zeros({3, 5, 1, 1});  // wrong Cin
  Tensor b = Tensor::zeros({3});
  CHECK_THROWS_WITH_AS(conv2d(x, w, b), doctest::Contains("conv2d"), std::invalid_argument);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3, 3}), Tensor::zeros({3})), std::invalid_argument);
  CHECK_THROWS_AS(mse(Tensor::zeros({3}), Tensor::zeros({4})), std::invalid_argument);
}

TEST_CASE("non-finite outputs are an error state") {
  Tensor x = Tensor::from({2}, {1e30f, 1e30f});
  Tensor w = Tensor::from({1, 2}, {1e30f, 1e30f});
  Tensor b = Tensor::zeros({1});
  CHECK_THROWS_AS(linear(x, w, b), std::runtime_error);
}

TEST_CASE("backward of sum of squares gives 2x") {
  Tensor x = Tensor::param({2}, {1.0f, 2.0f});
  Tape tape;
  {
    TapeScope scope(tape);
    // sum(x^2) = mse(x, 0) * numel
    Tensor loss = mul(mse(x, Tensor::zeros({2})), Tensor::scalar(2.0f));
    backward(tape, loss);
  }
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("parameters the loss does not depend on get exactly zero grads") {
  Tensor x = Tensor::param({3}, {1.0f, 2.0f, 3.0f});
  Tensor unused = Tensor::param({3}, {4.0f, 5.0f, 6.0f});
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = mse(x, Tensor::zeros({3}));
    backward(tape, loss);
  }
  for (float g : unused.grad()) CHECK(g == 0.0f);
  bool any = false;
  for (float g : x.grad()) any = any || g != 0.0f;
  CHECK(any);
}

TEST_CASE("backward errors: non-scalar loss and repeated backward") {
  Tensor x = Tensor::param({2}, {1.0f, 2.0f});
  Tape tape;
  Tensor y;
  {
    TapeScope scope(tape);
    y = silu(x);
  }
  CHECK_THROWS_AS(backward(tape, y), std::invalid_argument);

  Tape tape2;
  Tensor loss;
  {
    TapeScope scope(tape2);
    loss = mse(x, Tensor::zeros({2}));
  }
  backward(tape2, loss);
  CHECK_THROWS_AS(backward(tape2, loss), std::runtime_error);
  tape2.reset();  // after reset the tape records nothing, but is reusable
  CHECK(tape2.size() == 0);
}

TEST_CASE("random 2-layer conv net passes finite differences at 1e-4") {
  Xoshiro256pp rng(11);
  const GraphBuilder builder = [](Xoshiro256pp& r) {
    BuiltGraph g;
    g.tape = std::make_shared<Tape>();
    Tensor x = Tensor::zeros({2, 6, 6});
    for (auto& v : x.values_mut()) v = static_cast<float>(r.uniform(-1.0, 1.0));
    x.set_requires_grad(true);
    Tensor w1 = Tensor::zeros({3, 2, 3, 3});
    for (auto& v : w1.values_mut()) v = static_cast<float>(r.uniform(-1.0, 1.0));
    w1.set_requires_grad(true);
    Tensor b1 = Tensor::zeros({3});
    b1.set_requires_grad(true);
    Tensor w2 = Tensor::zeros({2, 3, 3, 3});
    for (auto& v : w2.values_mut()) v = static_cast<float>(r.uniform(-1.0, 1.0));
    w2.set_requires_grad(true);
    Tensor b2 = Tensor::zeros({2});
    b2.set_requires_grad(true);
    Tensor target = Tensor::zeros({2, 6, 6});
    for (auto& v : target.values_mut()) v = static_cast<float>(r.uniform(-1.0, 1.0));
    {
      TapeScope scope(*g.tape);
      Tensor h = silu(conv2d(x, w1, b1, 1, 1));
      h = conv2d(h, w2, b2, 1, 1);
      g.loss = mse(h, target);
    }
    g.params = {{"x", x}, {"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}};
    return g;
  };
  const GradCheckReport report = gradcheck(builder, 42);
  CHECK(report.entries.size() == 5);
  CHECK(report.all_below(1e-4));
}

TEST_CASE("gradcheck: linear layer, frozen params absent, deterministic report") {
  const GraphBuilder builder = [](Xoshiro256pp& r) {
    BuiltGraph g;
    g.tape = std::make_shared<Tape>();
    Tensor x = Tensor::zeros({4});
    for (auto& v : x.values_mut()) v = static_cast<float>(r.uniform(-1.0, 1.0));
    x.set_requires_grad(true);
    Tensor w = Tensor::zeros({3, 4});
    for (auto& v : w.values_mut()) v = static_cast<float>(r.uniform(-1.0, 1.0));
    w.set_requires_grad(true);
    Tensor b = Tensor::zeros({3});  // frozen: no grad slot
    Tensor target = Tensor::zeros({3});
    {
      TapeScope scope(*g.tape);
      g.loss = mse(linear(x, w, b), target);
    }
    g.params = {{"x", x}, {"w", w}, {"frozen_b", b}};
    return g;
  };
  const GradCheckReport r1 = gradcheck(builder, 7);
  CHECK(r1.all_below(1e-4));
  CHECK(r1.entries.size() == 2);  // frozen_b absent from the report
  for (const auto& e : r1.entries) CHECK(e.name != "frozen_b");

  const GradCheckReport r2 = gradcheck(builder, 7);
  CHECK(r1.to_text() == r2.to_text());  // byte-identical report
}

TEST_CASE("reverse accumulation is linear in the loss") {
  Xoshiro256pp rng(5);
  const float a = 0.7f, b = -1.3f;
  Tensor x1 = rand_tensor({3, 4, 4}, rng);
  Tensor x2 = x1.clone();
  Tensor x3 = x1.clone();
  x1.set_requires_grad(true);
  x2.set_requires_grad(true);
  x3.set_requires_grad(true);
  Tensor t1 = rand_tensor({3, 2, 2}, rng);
  Tensor t2 = rand_tensor({3, 4, 4}, rng);

  const auto f = [&](const Tensor& x) { return mse(avgpool2x(x), t1); };
  const auto g = [&](const Tensor& x) { return mse(silu(x), t2); };

  Tape tape1;
  {
    TapeScope scope(tape1);
    backward(tape1, f(x1));
  }
  Tape tape2;
  {
    TapeScope scope(tape2);
    backward(tape2, g(x2));
  }
  Tape tape3;
  {
    TapeScope scope(tape3);
    Tensor combined = add(mul(f(x3), Tensor::scalar(a)), mul(g(x3), Tensor::scalar(b)));
    backward(tape3, combined);
  }
  for (std::size_t i = 0; i < x1.grad().size(); ++i) {
    const float expect = a * x1.grad()[i] + b * x2.grad()[i];
    CHECK(x3.grad()[i] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("forward evaluation is bit-deterministic") {
  Xoshiro256pp rng(6);
  Tensor x = rand_tensor({4, 8, 8}, rng);
  Tensor w = rand_tensor({4, 4, 3, 3}, rng);
  Tensor b = rand_tensor({4}, rng);
  Tensor y1 = conv2d(x, w, b, 1, 1);
  Tensor y2 = conv2d(x, w, b, 1, 1);
  CHECK(bits_equal(y1, y2));
  Tensor n1 = channel_norm(y1, Tensor::ones({4}), Tensor::zeros({4}));
  Tensor n2 = channel_norm(y2, Tensor::ones({4}), Tensor::zeros({4}));
  CHECK(bits_equal(n1, n2));
}

TEST_CASE("avgpool/upsample forward semantics") {
  Tensor x = Tensor::from({1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  Tensor p = avgpool2x(x);
  CHECK(p.values()[0] == doctest::Approx(2.5));
  Tensor u = upsample_nearest2x(p);
  for (float v : u.values()) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("standard gradcheck suite covers the primitive set") {
  for (const auto& [name, report] : run_standard_gradchecks(99)) {
    INFO(name, ": ", report.to_text());
    CHECK(report.all_below(1e-4));
  }
}

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "unicontrol/diffusion.hpp"
#include "unicontrol/schedule.hpp"
#include "unicontrol/tasks.hpp"

using namespace uc;

namespace {

Tensor rand_tensor(std::vector<int> shape, Xoshiro256pp& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values_mut()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

BatchItem make_item(const Tensor& image, const std::string& task, int index) {
  BatchItem it;
  it.image = image;
  it.cond = Tensor::zeros(image.shape());
  it.text_emb = encode_text("a blue circle on a black background");
  it.task_key = task;
  it.task_index = index;
  return it;
}

}  // namespace

TEST_CASE("make_schedule: single step and range validation") {
  const NoiseSchedule s = make_schedule(1, 0.1, 0.1);
  CHECK(s.beta.size() == 1);
  CHECK(s.beta[0] == doctest::Approx(0.1));
  CHECK(s.alpha_bar[0] == doctest::Approx(0.9));

  CHECK_THROWS_AS(make_schedule(0, 0.1, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("make_schedule: alpha_bar strictly decreasing in (0,1)") {
  const NoiseSchedule s = make_schedule(64, 1e-4, 0.05);
  double prev = 1.0;
  for (int t = 1; t <= 64; ++t) {
    const double ab = s.alpha_bar_at(t);
    CHECK(ab > 0.0);
    CHECK(ab < 1.0);
    CHECK(ab < prev);
    prev = ab;
    if (t > 1) CHECK(s.beta_at(t) > s.beta_at(t - 1));
  }
}

TEST_CASE("make_schedule: T=200 cumulative product matches a direct-loop oracle to 1e-12") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  double prod = 1.0;
  for (int t = 1; t <= 200; ++t) {
    const double beta = 1e-4 + (static_cast<double>(t - 1) / 199.0) * (0.02 - 1e-4);
    prod *= 1.0 - beta;
  }
  CHECK(std::abs(s.alpha_bar_at(200) - prod) < 1e-12);
}

TEST_CASE("add_noise closed forms") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  Xoshiro256pp rng(3);
  Tensor x0 = rand_tensor({3, 4, 4}, rng);
  Tensor eps = rand_tensor({3, 4, 4}, rng);
  const int t = 100;

  Tensor from_zero_eps = add_noise(x0, t, Tensor::zeros({3, 4, 4}), s);
  Tensor from_zero_sig = add_noise(Tensor::zeros({3, 4, 4}), t, eps, s);
  Tensor full = add_noise(x0, t, eps, s);
  const double ab = s.alpha_bar_at(t);
  for (std::size_t i = 0; i < full.values().size(); ++i) {
    CHECK(from_zero_eps.values()[i] ==
          doctest::Approx(std::sqrt(ab) * x0.values()[i]).epsilon(1e-6));
    CHECK(from_zero_sig.values()[i] ==
          doctest::Approx(std::sqrt(1.0 - ab) * eps.values()[i]).epsilon(1e-6));
    const double oracle = std::sqrt(ab) * static_cast<double>(x0.values()[i]) +
                          std::sqrt(1.0 - ab) * static_cast<double>(eps.values()[i]);
    CHECK(std::abs(full.values()[i] - oracle) < 1e-6);
  }
  CHECK_THROWS_AS(add_noise(x0, 0, eps, s), std::invalid_argument);
  CHECK_THROWS_AS(add_noise(x0, 201, eps, s), std::invalid_argument);
}

TEST_CASE("training_loss: perfect predictor reaches zero loss") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  Xoshiro256pp data_rng(4);
  std::vector<BatchItem> batch;
  for (int i = 0; i < 2; ++i) batch.push_back(make_item(rand_tensor({3, 8, 8}, data_rng), "canny", 1));

  const DenoiseFn perfect = [&](const Tensor& x_t, int t, const Tensor&, const BatchItem& item) {
    const double ab = s.alpha_bar_at(t);
    Tensor eps = Tensor::zeros(x_t.shape());
    for (std::size_t i = 0; i < eps.values().size(); ++i) {
      eps.values_mut()[i] = static_cast<float>(
          (x_t.values()[i] - std::sqrt(ab) * item.image.values()[i]) / std::sqrt(1.0 - ab));
    }
    return eps;
  };
  Xoshiro256pp rng(5);
  const Tensor loss = training_loss(perfect, batch, s, 0.3, rng);
  CHECK(loss.item() < 1e-8);
}

TEST_CASE("training_loss: zero predictor gives the unit-normal expectation") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  Xoshiro256pp data_rng(6);
  std::vector<BatchItem> batch;
  for (int i = 0; i < 2; ++i) {
    batch.push_back(make_item(rand_tensor({3, 32, 32}, data_rng), "seg", 2));  // 6144 elements
  }
  const DenoiseFn zero = [](const Tensor& x_t, int, const Tensor&, const BatchItem&) {
    return Tensor::zeros(x_t.shape());
  };
  Xoshiro256pp rng(7);
  const Tensor loss = training_loss(zero, batch, s, 0.3, rng);
  CHECK(loss.item() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("training_loss: drop_prob boundaries are observable") {
  const NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
  Xoshiro256pp data_rng(8);
  std::vector<BatchItem> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(make_item(rand_tensor({3, 4, 4}, data_rng), "hed", 0));

  int null_count = 0, total = 0;
  const DenoiseFn probe = [&](const Tensor& x_t, int, const Tensor& text, const BatchItem&) {
    double n = 0.0;
    for (float v : text.values()) n += static_cast<double>(v) * v;
    ++total;
    if (n == 0.0) ++null_count;
    return Tensor::zeros(x_t.shape());
  };
  Xoshiro256pp rng(9);
  training_loss(probe, batch, s, 1.0, rng);
  CHECK(null_count == total);

  null_count = total = 0;
  training_loss(probe, batch, s, 0.0, rng);
  CHECK(null_count == 0);
  CHECK(total == 4);
}

TEST_CASE("training_loss rejects mixed-task batches") {
  const NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
  Xoshiro256pp data_rng(10);
  std::vector<BatchItem> batch;
  batch.push_back(make_item(rand_tensor({3, 4, 4}, data_rng), "canny", 1));
  batch.push_back(make_item(rand_tensor({3, 4, 4}, data_rng), "seg", 2));
  const DenoiseFn zero = [](const Tensor& x_t, int, const Tensor&, const BatchItem&) {
    return Tensor::zeros(x_t.shape());
  };
  Xoshiro256pp rng(11);
  CHECK_THROWS_AS(training_loss(zero, batch, s, 0.3, rng), std::invalid_argument);
}

TEST_CASE("cfg_combine closed forms") {
  Xoshiro256pp rng(12);
  Tensor c = rand_tensor({3, 4, 4}, rng);
  Tensor u = rand_tensor({3, 4, 4}, rng);
  CHECK(bits_equal(cfg_combine(c, u, 1.0), c));
  CHECK(bits_equal(cfg_combine(c, u, 0.0), u));

  Tensor ones = Tensor::ones({4});
  Tensor zeros = Tensor::zeros({4});
  Tensor nine = cfg_combine(ones, zeros, 9.0);
  for (float v : nine.values()) CHECK(v == doctest::Approx(9.0));

  CHECK_THROWS_AS(cfg_combine(c, Tensor::zeros({3}), 9.0), std::invalid_argument);
}

TEST_CASE("ddim_sample: guidance weight is irrelevant when cond == uncond") {
  const NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
  const GuidedDenoiseFn stub = [](const Tensor& x_t, int, bool) {
    Tensor eps = Tensor::zeros(x_t.shape());
    for (std::size_t i = 0; i < eps.values().size(); ++i) {
      eps.values_mut()[i] = 0.3f * x_t.values()[i];
    }
    return eps;
  };
  GuidanceConfig g1{1.0, 10, 0.3};
  GuidanceConfig g9{9.0, 10, 0.3};
  const Tensor a = ddim_sample(stub, s, g1, 77, {3, 8, 8});
  const Tensor b = ddim_sample(stub, s, g9, 77, {3, 8, 8});
  CHECK(bits_equal(a, b));
}

TEST_CASE("ddim_sample: steps=1 matches the single-step closed form") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  const float c = 0.125f;
  const GuidedDenoiseFn stub = [&](const Tensor& x_t, int, bool) {
    return Tensor::full(x_t.shape(), c);
  };
  GuidanceConfig g{9.0, 1, 0.3};
  const std::uint64_t seed = 123;
  const Tensor img = ddim_sample(stub, s, g, seed, {3, 8, 8});

  Xoshiro256pp rng(seed);
  const Tensor x_T = gaussian_tensor({3, 8, 8}, rng);
  const double ab = s.alpha_bar_at(200);
  for (std::size_t i = 0; i < img.values().size(); ++i) {
    double x0 = (static_cast<double>(x_T.values()[i]) - std::sqrt(1.0 - ab) * c) / std::sqrt(ab);
    x0 = std::min(1.0, std::max(-1.0, x0));
    CHECK(std::abs(img.values()[i] - x0) < 1e-5);
  }
}

TEST_CASE("ddim_sample: deterministic, bounded, validates steps") {
  const NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
  const GuidedDenoiseFn stub = [](const Tensor& x_t, int, bool with_text) {
    Tensor eps = Tensor::zeros(x_t.shape());
    for (std::size_t i = 0; i < eps.values().size(); ++i) {
      eps.values_mut()[i] = (with_text ? 0.2f : 0.1f) * x_t.values()[i];
    }
    return eps;
  };
  GuidanceConfig g{9.0, 50, 0.3};
  const Tensor a = ddim_sample(stub, s, g, 5, {3, 8, 8});
  const Tensor b = ddim_sample(stub, s, g, 5, {3, 8, 8});
  CHECK(bits_equal(a, b));
  for (float v : a.values()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  GuidanceConfig bad{9.0, 51, 0.3};
  CHECK_THROWS_AS(ddim_sample(stub, s, bad, 5, {3, 8, 8}), std::invalid_argument);
}

TEST_CASE("x0-prediction identity under the true-eps model") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  Xoshiro256pp rng(13);
  const Tensor x0 = rand_tensor({3, 8, 8}, rng);
  for (int t : {1, 50, 100, 199, 200}) {
    const Tensor eps = gaussian_tensor({3, 8, 8}, rng);
    const Tensor x_t = add_noise(x0, t, eps, s);
    const Tensor pred = predict_x0(x_t, t, eps, s);
    for (std::size_t i = 0; i < pred.values().size(); ++i) {
      CHECK(pred.values()[i] == doctest::Approx(x0.values()[i]).epsilon(1e-4));
    }
  }
}

TEST_CASE("sampling with steps=T and the true noise function reconstructs the image") {
  const NoiseSchedule s = make_schedule(64, 1e-4, 0.02);
  Xoshiro256pp rng(14);
  const Tensor x0 = rand_tensor({3, 8, 8}, rng);
  const GuidedDenoiseFn true_eps = [&](const Tensor& x_t, int t, bool) {
    const double ab = s.alpha_bar_at(t);
    Tensor eps = Tensor::zeros(x_t.shape());
    for (std::size_t i = 0; i < eps.values().size(); ++i) {
      eps.values_mut()[i] = static_cast<float>(
          (x_t.values()[i] - std::sqrt(ab) * x0.values()[i]) / std::sqrt(1.0 - ab));
    }
    return eps;
  };
  GuidanceConfig g{9.0, 64, 0.3};
  const Tensor img = ddim_sample(true_eps, s, g, 15, {3, 8, 8});
  double mean_img = 0.0, mean_x0 = 0.0;
  for (std::size_t i = 0; i < img.values().size(); ++i) {
    mean_img += img.values()[i];
    mean_x0 += x0.values()[i];
  }
  mean_img /= static_cast<double>(img.numel());
  mean_x0 /= static_cast<double>(x0.numel());
  CHECK(std::abs(mean_img - mean_x0) < 0.1);
}

TEST_CASE("guidance config defaults and validation") {
  GuidanceConfig g;
  CHECK(g.weight == doctest::Approx(9.0));
  CHECK(g.steps == 50);
  CHECK(g.prompt_drop_prob == doctest::Approx(0.30));
  g.validate(200);
  GuidanceConfig neg{-1.0, 10, 0.3};
  CHECK_THROWS_AS(neg.validate(200), std::invalid_argument);
  GuidanceConfig badp{1.0, 10, 1.5};
  CHECK_THROWS_AS(badp.validate(200), std::invalid_argument);
}

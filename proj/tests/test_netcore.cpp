#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "repose/blocks.hpp"
#include "repose/checkpoint.hpp"
#include "repose/grad_check.hpp"
#include "repose/rng.hpp"
#include "repose/tape.hpp"

using namespace repose;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<int> dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(dims));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// keeps ReLU inputs away from the kink so finite differences stay valid
template <typename T>
void push_from_zero(Tensor<T>& t, double margin) {
  for (std::int64_t i = 0; i < t.size(); ++i) {
    if (std::abs(static_cast<double>(t[i])) < margin) t[i] = t[i] < T(0) ? static_cast<T>(-margin) : static_cast<T>(margin);
  }
}

}  // namespace

TEST_CASE("conv_block follows the (K,S,F)^r shape rules") {
  Rng rng(7);
  ParamStore<float> store;
  SUBCASE("stride-1 block preserves spatial dims") {
    ConvBlock<float> block(store, "b", {3, 1, 64, 4, true}, 32, rng);
    Tape<float> tape;
    int x = tape.leaf(random_tensor<float>({1, 32, 16, 16}, rng));
    int y = block.apply(tape, x, kTrainMode);
    CHECK(tape.value(y).dims() == std::vector<int>{1, 64, 16, 16});
  }
  SUBCASE("stride-2 block halves spatial dims") {
    ConvBlock<float> block(store, "b", {5, 2, 64, 1, true}, 64, rng);
    Tape<float> tape;
    int x = tape.leaf(random_tensor<float>({1, 64, 32, 32}, rng));
    int y = block.apply(tape, x, kTrainMode);
    CHECK(tape.value(y).dims() == std::vector<int>{1, 64, 16, 16});
  }
  SUBCASE("unnormalized block output is non-negative") {
    ConvBlock<float> block(store, "b", {3, 1, 8, 2, false}, 4, rng);
    Tape<float> tape;
    int x = tape.leaf(random_tensor<float>({2, 4, 6, 6}, rng));
    int y = block.apply(tape, x, kTrainMode);
    for (std::int64_t i = 0; i < tape.value(y).size(); ++i) CHECK(tape.value(y)[i] >= 0.0f);
  }
}

TEST_CASE("conv_block output shape is a pure function of spec and input shape") {
  Rng rng(11);
  for (int kernel : {1, 3, 5})
    for (int stride : {1, 2})
      for (int repeat : {1, 2, 3}) {
        ConvBlockSpec spec{kernel, stride, 6, repeat, true};
        ParamStore<float> store;
        ConvBlock<float> block(store, "b", spec, 3, rng);
        Tape<float> tape;
        int x = tape.leaf(random_tensor<float>({2, 3, 16, 12}, rng));
        int y = block.apply(tape, x, kTrainMode);
        CHECK(tape.value(y).dims() == conv_block_output_dims(spec, {2, 3, 16, 12}));
      }
}

TEST_CASE("conv_block rejects channel mismatches with both shapes in the message") {
  Rng rng(3);
  ParamStore<float> store;
  ConvBlock<float> block(store, "b", {3, 1, 8, 1, true}, 16, rng);
  Tape<float> tape;
  int x = tape.leaf(random_tensor<float>({1, 4, 8, 8}, rng));
  try {
    block.apply(tape, x, kTrainMode);
    FAIL("expected shape error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1,4,8,8]") != std::string::npos);
    CHECK(msg.find("16") != std::string::npos);
  }
}

TEST_CASE("invalid conv specs are rejected") {
  CHECK_THROWS_AS(ConvBlockSpec({4, 1, 8, 1, true}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ConvBlockSpec({3, 0, 8, 1, true}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ConvBlockSpec({3, 1, 0, 1, true}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ConvBlockSpec({3, 1, 8, 0, true}).validate(), std::invalid_argument);
}

TEST_CASE("bilinear resize preserves constants and is an exact identity") {
  Tensor<float> x({1, 2, 5, 7}, 3.25f);
  Tensor<float> up = bilinear_resize(x, 13, 20);
  for (std::int64_t i = 0; i < up.size(); ++i) CHECK(up[i] == doctest::Approx(3.25f));

  Rng rng(5);
  Tensor<float> r = random_tensor<float>({2, 3, 9, 9}, rng, 0.0, 1.0);
  Tensor<float> same = bilinear_resize(r, 9, 9);
  CHECK(same == r);  // bitwise

  Tensor<float> small({1, 1, 16, 16});
  Tensor<float> big = bilinear_resize(small, 128, 128);
  CHECK(big.dims() == std::vector<int>{1, 1, 128, 128});
}

TEST_CASE("bilinear resize is linear") {
  Rng rng(13);
  Tensor<double> x = random_tensor<double>({1, 2, 6, 8}, rng);
  Tensor<double> y = random_tensor<double>({1, 2, 6, 8}, rng);
  const double a = 1.7, b = -0.6;
  Tensor<double> mix({1, 2, 6, 8});
  for (std::int64_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  Tensor<double> lhs = bilinear_resize(mix, 11, 5);
  Tensor<double> rx = bilinear_resize(x, 11, 5);
  Tensor<double> ry = bilinear_resize(y, 11, 5);
  for (std::int64_t i = 0; i < lhs.size(); ++i)
    CHECK(lhs[i] == doctest::Approx(a * rx[i] + b * ry[i]).epsilon(1e-5));
}

TEST_CASE("concat_channels stacks channels in order") {
  Rng rng(17);
  Tensor<float> a = random_tensor<float>({1, 32, 16, 16}, rng);
  Tensor<float> b = random_tensor<float>({1, 32, 16, 16}, rng);
  Tensor<float> y = concat_channels<float>({a, b});
  CHECK(y.dims() == std::vector<int>{1, 64, 16, 16});
  CHECK(y.at(0, 0, 3, 4) == a.at(0, 0, 3, 4));
  CHECK(y.at(0, 32, 3, 4) == b.at(0, 0, 3, 4));

  std::vector<Tensor<float>> many(14, a);
  CHECK(concat_channels(many).c() == 448);

  Tape<float> tape;
  int single = tape.leaf(a);
  CHECK(concat_channels_op(tape, {single}) == single);  // identity case

  Tensor<float> bad = random_tensor<float>({1, 32, 8, 16}, rng);
  CHECK_THROWS_AS(concat_channels<float>({a, bad}), std::invalid_argument);
}

TEST_CASE("residual mix strategies") {
  Rng rng(23);
  ParamStore<float> store;
  Param<float>& lambda = store.create("lambda", {1});
  Tensor<float> f = random_tensor<float>({1, 4, 5, 5}, rng);
  Tensor<float> d = random_tensor<float>({1, 4, 5, 5}, rng);

  Tape<float> tape;
  int f_id = tape.leaf(f), d_id = tape.leaf(d);
  SUBCASE("trainable with lambda 0 returns f exactly") {
    int y = residual_mix(tape, f_id, d_id, UpdateStrategy::trainable, tape.param(lambda));
    CHECK(tape.value(y) == f);
  }
  SUBCASE("add with zero delta returns f") {
    int z = tape.leaf(Tensor<float>({1, 4, 5, 5}));
    int y = residual_mix(tape, f_id, z, UpdateStrategy::add);
    CHECK(tape.value(y) == f);
  }
  SUBCASE("replace ignores f") {
    int y = residual_mix(tape, f_id, d_id, UpdateStrategy::replace);
    CHECK(tape.value(y) == d);
  }
  SUBCASE("shape mismatch is rejected") {
    int bad = tape.leaf(random_tensor<float>({1, 4, 5, 4}, rng));
    CHECK_THROWS_AS(residual_mix(tape, f_id, bad, UpdateStrategy::add), std::invalid_argument);
  }
}

TEST_CASE("batchnorm training output is normalized per channel") {
  Rng rng(29);
  ParamStore<float> store;
  ConvBlockSpec spec{3, 1, 6, 1, true};
  (void)spec;
  Param<float>& gamma = store.create("gamma", {3});
  Param<float>& beta = store.create("beta", {3});
  Param<float>& rm = store.create("rm", {3}, false);
  Param<float>& rv = store.create("rv", {3}, false);
  gamma.value.fill(1.0f);
  rv.value.fill(1.0f);

  Tape<float> tape;
  int x = tape.leaf(random_tensor<float>({4, 3, 7, 7}, rng, 0.0, 4.0));
  int y = batchnorm(tape, x, tape.param(gamma), tape.param(beta), rm, rv, kTrainMode);
  const Tensor<float>& out = tape.value(y);
  const std::int64_t plane = 49;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int b = 0; b < 4; ++b)
      for (std::int64_t i = 0; i < plane; ++i) {
        const double v = out.at(b, c, static_cast<int>(i / 7), static_cast<int>(i % 7));
        sum += v;
        sq += v * v;
      }
    const double mean = sum / (4 * plane);
    const double var = sq / (4 * plane) - mean * mean;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("gradient checks for the differentiable primitives") {
  Rng rng(31);
  GradCheckSettings settings;
  settings.eps = 1e-5;

  SUBCASE("concat + weighted sum is linear: error < 1e-10") {
    GradCheckSettings linear = settings;
    linear.eps = 1e-3;  // linear maps: no truncation term, larger step cuts roundoff
    std::vector<Tensor<double>> inputs{random_tensor<double>({2, 3, 4, 4}, rng), random_tensor<double>({2, 2, 4, 4}, rng)};
    auto op = [](Tape<double>& t, const std::vector<int>& ids) { return concat_channels_op(t, ids); };
    auto report = grad_check<double>("concat", op, inputs, nullptr, linear);
    CHECK(report.max_rel_error < 1e-10);
  }

  SUBCASE("bilinear resize is linear: error < 1e-10") {
    GradCheckSettings linear = settings;
    linear.eps = 1e-3;
    std::vector<Tensor<double>> inputs{random_tensor<double>({1, 2, 5, 6}, rng)};
    auto op = [](Tape<double>& t, const std::vector<int>& ids) { return bilinear_resize_op(t, ids[0], 9, 4); };
    auto report = grad_check<double>("bilinear_resize", op, inputs, nullptr, linear);
    CHECK(report.max_rel_error < 1e-10);
  }

  SUBCASE("conv_block without batchnorm") {
    ParamStore<double> store;
    ConvBlock<double> block(store, "b", {3, 1, 4, 2, false}, 3, rng);
    Tensor<double> x = random_tensor<double>({2, 3, 5, 5}, rng);
    push_from_zero(x, 10 * settings.eps);
    auto op = [&](Tape<double>& t, const std::vector<int>& ids) { return block.apply(t, ids[0], kTrainMode); };
    auto report = grad_check<double>("conv_block_u", op, {x}, &store, settings);
    CHECK(report.max_rel_error < 1e-4);
  }

  SUBCASE("conv_block with batchnorm (training mode, frozen running stats)") {
    ParamStore<double> store;
    ConvBlock<double> block(store, "b", {3, 1, 4, 1, true}, 2, rng);
    Tensor<double> x = random_tensor<double>({2, 2, 5, 5}, rng);
    push_from_zero(x, 10 * settings.eps);
    EvalMode mode{true, false};
    auto op = [&](Tape<double>& t, const std::vector<int>& ids) { return block.apply(t, ids[0], mode); };
    auto report = grad_check<double>("conv_block_bn", op, {x}, &store, settings);
    CHECK(report.max_rel_error < 1e-4);
  }

  SUBCASE("batchnorm inference mode") {
    ParamStore<double> store;
    Param<double>& gamma = store.create("gamma", {3});
    Param<double>& beta = store.create("beta", {3});
    Param<double>& rm = store.create("rm", {3}, false);
    Param<double>& rv = store.create("rv", {3}, false);
    gamma.value[0] = 1.3;
    gamma.value[1] = 0.7;
    gamma.value[2] = -0.4;
    rm.value[0] = 0.2;
    rv.value.fill(1.5);
    auto op = [&](Tape<double>& t, const std::vector<int>& ids) {
      return batchnorm(t, ids[0], t.param(gamma), t.param(beta), rm, rv, kInferenceMode);
    };
    auto report = grad_check<double>("batchnorm_infer", op, {random_tensor<double>({2, 3, 4, 4}, rng)}, &store, settings);
    CHECK(report.max_rel_error < 1e-4);
  }

  SUBCASE("trainable residual mix") {
    ParamStore<double> store;
    Param<double>& lambda = store.create("lambda", {1});
    lambda.value[0] = 0.37;
    auto op = [&](Tape<double>& t, const std::vector<int>& ids) {
      return residual_mix_trainable(t, ids[0], ids[1], t.param(lambda));
    };
    std::vector<Tensor<double>> inputs{random_tensor<double>({1, 3, 4, 4}, rng), random_tensor<double>({1, 3, 4, 4}, rng)};
    auto report = grad_check<double>("residual_mix", op, inputs, &store, settings);
    CHECK(report.max_rel_error < 1e-8);
  }
}

TEST_CASE("grad_check reports non-finite values with the op name") {
  auto op = [](Tape<double>& t, const std::vector<int>& ids) {
    Tensor<double> bad = t.value(ids[0]);
    bad[0] = std::numeric_limits<double>::quiet_NaN();
    return t.leaf(std::move(bad), true);
  };
  Rng rng(37);
  try {
    grad_check<double>("poisoned_op", op, {random_tensor<double>({1, 1, 2, 2}, rng)}, nullptr, {});
    FAIL("expected failure");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("poisoned_op") != std::string::npos);
  }
}

TEST_CASE("checkpoint container round trip and mismatch reporting") {
  namespace fs = std::filesystem;
  Rng rng(41);
  const std::string path = (fs::temp_directory_path() / "repose_ckpt_test.bin").string();

  ParamStore<float> store;
  Param<float>& w = store.create("m/w", {4, 3, 3, 3});
  Param<float>& b = store.create("m/b", {4});
  for (std::int64_t i = 0; i < w.value.size(); ++i) w.value[i] = static_cast<float>(rng.uniform(-1, 1));
  for (std::int64_t i = 0; i < b.value.size(); ++i) b.value[i] = static_cast<float>(rng.uniform(-1, 1));
  save_checkpoint(path, store);

  ParamStore<float> restored;
  restored.create("m/w", {4, 3, 3, 3});
  restored.create("m/b", {4});
  const auto extras = load_checkpoint(path, restored);
  CHECK(extras.empty());
  CHECK(restored.at("m/w").value == w.value);
  CHECK(restored.at("m/b").value == b.value);

  ParamStore<float> wrong;
  wrong.create("m/w", {4, 3, 3, 3});
  wrong.create("m/missing", {2});
  try {
    load_checkpoint(path, wrong);
    FAIL("expected mismatch error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("m/missing") != std::string::npos);
  }

  ParamStore<float> badshape;
  badshape.create("m/w", {4, 3, 3, 3});
  badshape.create("m/b", {5});
  try {
    load_checkpoint(path, badshape);
    FAIL("expected shape mismatch error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("m/b") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("tensors reject invalid shapes and track finiteness") {
  CHECK_THROWS_AS(Tensor<float>({0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<float>({1, 2, 3, 4, 5}), std::invalid_argument);
  Tensor<float> t({2, 2});
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<float>::infinity();
  CHECK(!t.all_finite());
}

#include <doctest.h>

#include <cmath>

#include "repose/lossmetrics.hpp"
#include "repose/metrics.hpp"
#include "repose/model.hpp"
#include "repose/rng.hpp"

using namespace repose;

namespace {

SkeletonGraph tiny_skel() {
  SkeletonGraph g;
  g.keypoint_count = 4;
  g.names = {"kp0", "kp1", "kp2", "kp3"};
  g.edges = {{0, 1}, {0, 3}, {1, 2}, {2, 3}};
  g.ordering = {0, 1, 2, 3};
  g.flip_pairs = {0, 1, 2, 3};
  return g;
}

}  // namespace

TEST_CASE("partial_mse equals the hand-computed value") {
  // one example, two annotated keypoints, 2x2 maps, one element off by 1:
  // (1/1) * (1/2) * (1^2 / 4) = 0.125
  Tensor<double> pred({1, 2, 2, 2});
  Tensor<double> gt({1, 2, 2, 2});
  pred[0] = 1.0;
  std::vector<AnnotationMask> masks{AnnotationMask{{1, 1}}};
  CHECK(partial_mse(pred, gt, masks) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(std::abs(partial_mse(pred, gt, masks) - 0.125) < 1e-12);

  SUBCASE("perfect prediction scores zero") {
    pred[0] = 0.0;
    CHECK(partial_mse(pred, gt, masks) == 0.0);
  }
  SUBCASE("empty mask is rejected") {
    masks[0].bits = {0, 0};
    CHECK_THROWS_AS(partial_mse(pred, gt, masks), std::invalid_argument);
  }
  SUBCASE("shape mismatch is rejected") {
    Tensor<double> widegt({1, 2, 2, 3});
    CHECK_THROWS_AS(partial_mse(pred, widegt, masks), std::invalid_argument);
  }
}

TEST_CASE("masked channels are invariant under arbitrary values") {
  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    const int B = 1 + rng.uniform_int(0, 2), H = 3, W = 3;
    Tensor<float> pred({B, 3, H, W});
    Tensor<float> gt({B, 3, H, W});
    for (std::int64_t i = 0; i < pred.size(); ++i) {
      pred[i] = static_cast<float>(rng.uniform(-1, 1));
      gt[i] = static_cast<float>(rng.uniform(-1, 1));
    }
    std::vector<AnnotationMask> masks;
    for (int b = 0; b < B; ++b) {
      AnnotationMask m{{1, 0, 0}};
      m.bits[1] = rng.bernoulli(0.5) ? 1 : 0;
      masks.push_back(m);
    }
    const double before = partial_mse(pred, gt, masks);
    // rewrite every masked-out channel with garbage
    Tensor<float> vandalized = pred;
    for (int b = 0; b < B; ++b)
      for (int k = 0; k < 3; ++k)
        if (!masks[static_cast<std::size_t>(b)].bits[static_cast<std::size_t>(k)])
          for (int i = 0; i < H * W; ++i)
            vandalized[((static_cast<std::int64_t>(b) * 3 + k) * H * W) + i] = static_cast<float>(rng.uniform(-99, 99));
    CHECK(partial_mse(vandalized, gt, masks) == before);
  }
}

TEST_CASE("partial_mse is invariant under identical channel permutations") {
  Rng rng(56);
  Tensor<float> pred({2, 4, 3, 3});
  Tensor<float> gt({2, 4, 3, 3});
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    pred[i] = static_cast<float>(rng.uniform(-1, 1));
    gt[i] = static_cast<float>(rng.uniform(-1, 1));
  }
  std::vector<AnnotationMask> masks{AnnotationMask{{1, 0, 1, 1}}, AnnotationMask{{0, 1, 1, 0}}};
  const double base = partial_mse(pred, gt, masks);

  const std::vector<int> perm{2, 0, 3, 1};
  Tensor<float> pred_p({2, 4, 3, 3});
  Tensor<float> gt_p({2, 4, 3, 3});
  std::vector<AnnotationMask> masks_p = masks;
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < 4; ++k) {
      const int src = perm[static_cast<std::size_t>(k)];
      masks_p[static_cast<std::size_t>(b)].bits[static_cast<std::size_t>(k)] =
          masks[static_cast<std::size_t>(b)].bits[static_cast<std::size_t>(src)];
      for (int i = 0; i < 9; ++i) {
        pred_p[(static_cast<std::int64_t>(b) * 4 + k) * 9 + i] = pred[(static_cast<std::int64_t>(b) * 4 + src) * 9 + i];
        gt_p[(static_cast<std::int64_t>(b) * 4 + k) * 9 + i] = gt[(static_cast<std::int64_t>(b) * 4 + src) * 9 + i];
      }
    }
  CHECK(partial_mse(pred_p, gt_p, masks_p) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("total loss sums the partial loss over all supervised stacks") {
  Rng rng(57);
  Tensor<float> gt({1, 2, 4, 4});
  Tensor<float> stack({1, 2, 4, 4});
  for (std::int64_t i = 0; i < stack.size(); ++i) stack[i] = static_cast<float>(rng.uniform(0, 1));
  std::vector<AnnotationMask> masks{AnnotationMask{{1, 1}}};

  Tape<float> tape;
  PosePrediction pred;
  for (int s = 0; s < 5; ++s) {
    pred.stacks.push_back(tape.leaf(stack));
    pred.labels.push_back("stack" + std::to_string(s));
  }
  pred.final_id = pred.stacks.back();
  const double single = partial_mse(stack, gt, masks);
  const int total = total_loss_op(tape, pred, gt, masks);
  CHECK(tape.value(total)[0] == doctest::Approx(5.0 * single).epsilon(1e-6));

  SUBCASE("perfect stacks give zero") {
    Tape<float> t2;
    PosePrediction p2;
    for (int s = 0; s < 3; ++s) p2.stacks.push_back(t2.leaf(gt));
    p2.final_id = p2.stacks.back();
    CHECK(t2.value(total_loss_op(t2, p2, gt, masks))[0] == 0.0f);
  }
}

TEST_CASE("gradient reaches pre-update head parameters through intermediate supervision") {
  SkeletonGraph skel = tiny_skel();
  ReposeConfig c;
  c.keypoints = 4;
  c.input_size = 32;
  c.coarsest_size = 8;
  c.decoupled_channels = 4;
  c.trunk_channels = 6;
  c.update_conv_blocks = 1;
  c.head_conv_blocks = 1;
  ReposeModel<float> model = ReposeModel<float>::build(c, skel, 77);

  Rng rng(58);
  Tensor<float> image({1, 3, 32, 32});
  for (std::int64_t i = 0; i < image.size(); ++i) image[i] = static_cast<float>(rng.uniform(0, 1));
  Tensor<float> gt({1, 4, 32, 32});
  for (std::int64_t i = 0; i < gt.size(); ++i) gt[i] = static_cast<float>(rng.uniform(0, 1));
  std::vector<AnnotationMask> masks{AnnotationMask{{1, 1, 1, 1}}};

  Tape<float> tape;
  PosePrediction pred = model.forward(tape, image, kTrainMode);
  model.params().zero_grad();
  tape.backward(total_loss_op(tape, pred, gt, masks));

  // pre-update heads do not feed the final heatmap, yet their supervision
  // produces gradient
  double pre_head_grad = 0.0;
  for (auto* p : model.params().entries())
    if (p->name.find("pre_head") != std::string::npos)
      for (std::int64_t i = 0; i < p->grad.size(); ++i) pre_head_grad += std::abs(static_cast<double>(p->grad[i]));
  CHECK(pre_head_grad > 0.0);
}

TEST_CASE("reference lengths follow the torso and head conventions") {
  SkeletonGraph skel = default_skeleton(14);
  PoseExample ex;
  ex.keypoints.assign(14, Keypoint2D{});
  ex.keypoints[static_cast<std::size_t>(skel.index_of("right_shoulder"))] = {10, 20, true};
  ex.keypoints[static_cast<std::size_t>(skel.index_of("left_hip"))] = {110, 20, true};
  ex.scale = 100;

  PckSpec torso{0.2, PckSpec::Reference::torso_diameter};
  CHECK(reference_length(ex, torso, skel) == doctest::Approx(100.0));
  // axis-aligned torso of 100 px at alpha 0.2 -> 20 px threshold
  CHECK(torso.alpha * reference_length(ex, torso, skel) == doctest::Approx(20.0));

  PckSpec head{0.5, PckSpec::Reference::head_length};
  SUBCASE("head box diagonal (3-4-5)") {
    ex.head_box = HeadBox{10, 10, 40, 50};
    CHECK(reference_length(ex, head, skel) == doctest::Approx(50.0));
  }
  SUBCASE("head length from keypoints when no box is present") {
    ex.keypoints[static_cast<std::size_t>(skel.index_of("head_top"))] = {0, 0, true};
    ex.keypoints[static_cast<std::size_t>(skel.index_of("neck"))] = {0, 30, true};
    CHECK(reference_length(ex, head, skel) == doctest::Approx(30.0));
  }
  SUBCASE("missing keypoints give a zero reference") {
    PoseExample bare;
    bare.keypoints.assign(14, Keypoint2D{});
    CHECK(reference_length(bare, torso, skel) == 0.0);
  }
  SUBCASE("degenerate zero-length reference is excluded from pck") {
    PoseExample degen = ex;
    degen.keypoints[static_cast<std::size_t>(skel.index_of("left_hip"))] = {10, 20, true};
    std::vector<std::vector<Keypoint2D>> decoded{degen.keypoints};
    PckResult r = pck(decoded, {degen}, torso, skel);
    CHECK(r.excluded_examples == 1);
    CHECK(r.evaluated == 0);
  }
}

namespace {

// independent double-loop oracle used to pin the vectorized implementation
double brute_force_mean_pck(const std::vector<std::vector<Keypoint2D>>& decoded,
                            const std::vector<PoseExample>& gt, const PckSpec& spec, const SkeletonGraph& skel) {
  long correct = 0, total = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double ref = reference_length(gt[i], spec, skel);
    if (!(ref > 0)) continue;
    for (std::size_t k = 0; k < gt[i].keypoints.size(); ++k) {
      if (!gt[i].keypoints[k].annotated) continue;
      ++total;
      if (!decoded[i][k].annotated) continue;
      const double dx = decoded[i][k].x - gt[i].keypoints[k].x;
      const double dy = decoded[i][k].y - gt[i].keypoints[k].y;
      if (std::sqrt(dx * dx + dy * dy) <= spec.alpha * ref) ++correct;
    }
  }
  return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

std::pair<std::vector<PoseExample>, std::vector<std::vector<Keypoint2D>>> random_eval_set(int count, Rng& rng,
                                                                                          const SkeletonGraph& skel) {
  std::vector<PoseExample> gt;
  std::vector<std::vector<Keypoint2D>> decoded;
  for (int i = 0; i < count; ++i) {
    PoseExample ex;
    ex.scale = 100;
    ex.keypoints.resize(static_cast<std::size_t>(skel.keypoint_count));
    std::vector<Keypoint2D> dec(static_cast<std::size_t>(skel.keypoint_count));
    for (int k = 0; k < skel.keypoint_count; ++k) {
      ex.keypoints[static_cast<std::size_t>(k)] = {rng.uniform(0, 200), rng.uniform(0, 200), rng.bernoulli(0.85)};
      dec[static_cast<std::size_t>(k)] = {ex.keypoints[static_cast<std::size_t>(k)].x + rng.uniform(-30, 30),
                                          ex.keypoints[static_cast<std::size_t>(k)].y + rng.uniform(-30, 30),
                                          rng.bernoulli(0.95)};
    }
    gt.push_back(std::move(ex));
    decoded.push_back(std::move(dec));
  }
  return {gt, decoded};
}

}  // namespace

TEST_CASE("pck matches a brute-force oracle on 200 randomized examples") {
  SkeletonGraph skel = default_skeleton(14);
  Rng rng(59);
  auto [gt, decoded] = random_eval_set(200, rng, skel);
  PckSpec spec{0.2, PckSpec::Reference::torso_diameter};
  PckResult r = pck(decoded, gt, spec, skel);
  CHECK(r.mean == brute_force_mean_pck(decoded, gt, spec, skel));  // exact

  SUBCASE("exact predictions score 1.0") {
    std::vector<std::vector<Keypoint2D>> perfect;
    for (const auto& ex : gt) perfect.push_back(ex.keypoints);
    PckResult p = pck(perfect, gt, spec, skel);
    CHECK(p.mean == 1.0);
    for (std::size_t g = 0; g < pck_groups().size(); ++g)
      if (p.group_total[g] > 0) CHECK(p.group_accuracy[g] == 1.0);
  }
  SUBCASE("predictions beyond every threshold score 0.0") {
    std::vector<std::vector<Keypoint2D>> far;
    for (const auto& ex : gt) {
      auto kp = ex.keypoints;
      for (auto& p : kp) {
        p.x += 5000;
        p.annotated = true;
      }
      far.push_back(kp);
    }
    CHECK(pck(far, gt, spec, skel).mean == 0.0);
  }
}

TEST_CASE("pck is monotone in alpha and saturates at 1") {
  SkeletonGraph skel = default_skeleton(14);
  Rng rng(61);
  auto [gt, decoded] = random_eval_set(60, rng, skel);
  // make every decode available so alpha -> infinity reaches 1.0
  for (auto& dec : decoded)
    for (auto& p : dec) p.annotated = true;
  double prev = -1.0;
  for (int t = 1; t <= 20; ++t) {
    PckSpec spec{0.05 * t, PckSpec::Reference::torso_diameter};
    const double mean = pck(decoded, gt, spec, skel).mean;
    CHECK(mean >= prev);
    prev = mean;
  }
  PckSpec huge{1e9, PckSpec::Reference::torso_diameter};
  CHECK(pck(decoded, gt, huge, skel).mean == 1.0);
}

TEST_CASE("pck is invariant under a global similarity transform") {
  SkeletonGraph skel = default_skeleton(14);
  Rng rng(63);
  auto [gt, decoded] = random_eval_set(40, rng, skel);
  PckSpec spec{0.2, PckSpec::Reference::torso_diameter};
  const double base = pck(decoded, gt, spec, skel).mean;

  const double s = 2.75, theta = 0.6, tx = 31.0, ty = -11.0;
  auto tf = [&](Keypoint2D p) {
    const double x = s * (std::cos(theta) * p.x - std::sin(theta) * p.y) + tx;
    const double y = s * (std::sin(theta) * p.x + std::cos(theta) * p.y) + ty;
    return Keypoint2D{x, y, p.annotated};
  };
  std::vector<PoseExample> gt2 = gt;
  std::vector<std::vector<Keypoint2D>> dec2 = decoded;
  for (std::size_t i = 0; i < gt2.size(); ++i) {
    for (auto& p : gt2[i].keypoints) p = tf(p);
    for (auto& p : dec2[i]) p = tf(p);
  }
  CHECK(pck(dec2, gt2, spec, skel).mean == doctest::Approx(base).epsilon(1e-12));
}

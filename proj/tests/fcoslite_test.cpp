#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "oada/fcoslite.hpp"
#include "oada/scenegen.hpp"

namespace {

using namespace oada::fcos;
using oada::diff::Tape;
using oada::diff::Tensor;
using oada::scene::Scene;

DetectorConfig small_config(int image_size) {
  DetectorConfig c;
  c.image_size = image_size;
  return c;
}

// Independent reference: every (level, location, box) triple is tested
// directly and the smallest-area (then lowest-index) box is kept.
AssignedTargets brute_force_assign(const std::vector<Box>& boxes, const std::vector<int>& labels,
                                   const DetectorConfig& cfg) {
  AssignedTargets out;
  for (std::size_t l = 0; l < cfg.levels.size(); ++l) {
    const int stride = 1 << cfg.levels[l].lv;
    const double lo = l == 0 ? 0.0 : cfg.levels[l - 1].max_offset;
    const double hi = cfg.levels[l].max_offset;
    const int n = cfg.image_size / stride;
    LevelTargets t;
    t.lv = cfg.levels[l].lv;
    t.stride = stride;
    t.height = t.width = n;
    t.cls.assign(static_cast<std::size_t>(n * n), -1);
    t.box_index.assign(static_cast<std::size_t>(n * n), -1);
    t.offsets = Tensor({4, n, n});
    t.centerness = Tensor({1, n, n});
    t.fg = Tensor({1, n, n});
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double px = x * stride + stride / 2.0, py = y * stride + stride / 2.0;
        int best = -1;
        for (std::size_t k = 0; k < boxes.size(); ++k) {
          const Box& b = boxes[k];
          const double o[4] = {px - b.x1, py - b.y1, b.x2 - px, b.y2 - py};
          if (*std::min_element(o, o + 4) <= 0.0) continue;
          const double m = *std::max_element(o, o + 4);
          if (m <= lo || m > hi) continue;
          if (best < 0 || b.area() < boxes[static_cast<std::size_t>(best)].area()) best = static_cast<int>(k);
        }
        if (best < 0) continue;
        const Box& b = boxes[static_cast<std::size_t>(best)];
        const std::size_t i = static_cast<std::size_t>(y * n + x);
        const std::size_t plane = static_cast<std::size_t>(n * n);
        t.cls[i] = labels[static_cast<std::size_t>(best)];
        t.box_index[i] = best;
        const double l_ = px - b.x1, t_ = py - b.y1, r_ = b.x2 - px, b_ = b.y2 - py;
        t.offsets[i] = l_;
        t.offsets[plane + i] = t_;
        t.offsets[2 * plane + i] = r_;
        t.offsets[3 * plane + i] = b_;
        t.centerness[i] = std::sqrt(std::min(l_, r_) / std::max(l_, r_) * std::min(t_, b_) / std::max(t_, b_));
        t.fg[i] = 1.0;
        ++t.num_fg;
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

void expect_same_targets(const AssignedTargets& a, const AssignedTargets& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t l = 0; l < a.size(); ++l) {
    EXPECT_EQ(a[l].cls, b[l].cls) << "level " << l;
    EXPECT_EQ(a[l].box_index, b[l].box_index) << "level " << l;
    EXPECT_EQ(a[l].num_fg, b[l].num_fg);
    for (std::size_t i = 0; i < a[l].offsets.size(); ++i) ASSERT_DOUBLE_EQ(a[l].offsets[i], b[l].offsets[i]);
    for (std::size_t i = 0; i < a[l].centerness.size(); ++i) {
      ASSERT_NEAR(a[l].centerness[i], b[l].centerness[i], 1e-12);
    }
  }
}

TEST(Detector, LevelSizes) {
  const Detector det(DetectorConfig{}, 1);
  const Scene s = oada::scene::generate_scene(5, {});
  const auto preds = det.predict(s.image);
  ASSERT_EQ(preds.size(), 3u);
  const int expected[3] = {16, 8, 4};
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(preds[l].cls_logits.shape(), (oada::diff::Shape{3, expected[l], expected[l]}));
    EXPECT_EQ(preds[l].reg.shape(), (oada::diff::Shape{4, expected[l], expected[l]}));
    for (double v : preds[l].reg.data()) EXPECT_GT(v, 0.0);
  }
}

TEST(Detector, DeterministicAndShapeChecked) {
  const Detector det(DetectorConfig{}, 1);
  const Scene s = oada::scene::generate_scene(5, {});
  const auto a = det.predict(s.image);
  const auto b = det.predict(s.image);
  for (std::size_t l = 0; l < a.size(); ++l) {
    EXPECT_TRUE(a[l].cls_logits == b[l].cls_logits);
    EXPECT_TRUE(a[l].reg == b[l].reg);
  }
  EXPECT_THROW(det.predict(Tensor({3, 64, 64})), oada::diff::ShapeError);
}

TEST(Detector, BackboneGradientReachesEveryParameter) {
  Detector det(small_config(32), 3);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor img({3, 32, 32});
  for (double& v : img.data()) v = u(rng);
  std::vector<Tensor> readout;
  auto loss_of = [&](Tape& tape) {
    const auto feats = det.backbone_forward(tape, tape.constant(img, "image"));
    if (readout.empty()) {
      for (const auto& f : feats) {
        Tensor r(f.shape());
        for (double& v : r.data()) v = u(rng) - 0.5;
        readout.push_back(std::move(r));
      }
    }
    std::vector<Var> parts;
    for (std::size_t l = 0; l < feats.size(); ++l) {
      parts.push_back(oada::diff::sum(oada::diff::mul(feats[l], tape.constant(readout[l], "w"))));
    }
    Var total = parts[0];
    for (std::size_t l = 1; l < parts.size(); ++l) total = oada::diff::add(total, parts[l]);
    return total;
  };
  {
    Tape tape;
    tape.backward(loss_of(tape));
  }
  auto value = [&] {
    Tape tape(false);
    return loss_of(tape).value()[0];
  };
  const double eps = 1e-6;
  int checked = 0;
  for (NamedParam& p : det.parameters()) {
    if (p.name.rfind("backbone.", 0) != 0) continue;
    double grad_mass = 0.0;
    for (double g : p.tensor->grad()) grad_mass += std::abs(g);
    EXPECT_GT(grad_mass, 0.0) << p.name;
    std::uniform_int_distribution<std::size_t> pick(0, p.tensor->size() - 1);
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = pick(rng);
      const double analytic = p.tensor->grad()[i];
      const double w0 = (*p.tensor)[i];
      (*p.tensor)[i] = w0 + eps;
      const double fp = value();
      (*p.tensor)[i] = w0 - eps;
      const double fm = value();
      (*p.tensor)[i] = w0;
      const double numeric = (fp - fm) / (2 * eps);
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
      EXPECT_LT(rel, 1e-4) << p.name << "[" << i << "] analytic " << analytic << " numeric " << numeric;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 3 * 12);
}

TEST(Assign, CenterOfSquareBoxHasUnitCenterness) {
  const DetectorConfig cfg = small_config(64);
  // Location (3, 3) at stride 8 sits at pixel (28, 28).
  const std::vector<Box> boxes{{18, 18, 38, 38}};
  const std::vector<int> labels{2};
  const auto t = assign_targets(boxes, labels, cfg);
  const std::size_t i = t[0].index(3, 3), plane = 64;
  EXPECT_EQ(t[0].cls[i], 2);
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(t[0].offsets[k * plane + i], 10.0);
  EXPECT_DOUBLE_EQ(t[0].centerness[i], 1.0);
}

TEST(Assign, NoBoxesIsAllBackground) {
  const auto t = assign_targets(std::vector<Box>{}, std::vector<int>{}, DetectorConfig{});
  EXPECT_EQ(total_foreground(t), 0);
  for (const auto& l : t) {
    for (int c : l.cls) EXPECT_EQ(c, -1);
    for (double v : l.fg.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Assign, SingleBoxOnEightByEightGrid) {
  const DetectorConfig cfg = small_config(64);
  const std::vector<Box> boxes{{13, 21, 33, 33}};
  const std::vector<int> labels{1};
  const auto got = assign_targets(boxes, labels, cfg);
  ASSERT_EQ(got[0].height, 8);
  EXPECT_GT(got[0].num_fg, 0);
  expect_same_targets(got, brute_force_assign(boxes, labels, cfg));
  for (const auto& l : got) {
    const std::size_t plane = static_cast<std::size_t>(l.height) * l.width;
    for (std::size_t i = 0; i < plane; ++i) {
      if (l.fg[i] == 0.0) continue;
      for (int k = 0; k < 4; ++k) EXPECT_GT(l.offsets[k * plane + i], 0.0);
    }
  }
}

TEST(Assign, MatchesBruteForceOnRandomScenes) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> pos(0.0, 120.0), side(2.0, 100.0);
  std::uniform_int_distribution<int> count(0, 6), cls(0, 2);
  const DetectorConfig cfg;
  for (int seed = 0; seed < 250; ++seed) {
    std::vector<Box> boxes;
    std::vector<int> labels;
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      const double x = pos(rng), y = pos(rng);
      // Integer-aligned boxes exercise exact boundary and equal-area ties.
      boxes.push_back({std::floor(x), std::floor(y), std::min(128.0, std::floor(x + side(rng))),
                       std::min(128.0, std::floor(y + side(rng)))});
      labels.push_back(cls(rng));
    }
    if (seed % 10 == 0 && n >= 2) boxes[1] = boxes[0];
    SCOPED_TRACE("seed " + std::to_string(seed));
    expect_same_targets(assign_targets(boxes, labels, cfg), brute_force_assign(boxes, labels, cfg));
  }
  // The generator's own scenes as well.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = oada::scene::generate_scene(seed, {});
    expect_same_targets(assign_targets(s.boxes, s.labels, cfg), brute_force_assign(s.boxes, s.labels, cfg));
  }
}

TEST(Assign, SmallestBoxWinsOverlap) {
  const DetectorConfig cfg = small_config(64);
  const std::vector<Box> boxes{{0, 0, 60, 60}, {20, 20, 40, 40}};
  const std::vector<int> labels{0, 1};
  const auto t = assign_targets(boxes, labels, cfg);
  EXPECT_EQ(t[0].cls[t[0].index(3, 3)], 1);
  EXPECT_EQ(t[0].box_index[t[0].index(3, 3)], 1);
}

std::vector<LevelOutput> constant_outputs(Tape& tape, const AssignedTargets& t, int num_classes, double cls_logit,
                                          bool offsets_from_targets) {
  std::vector<LevelOutput> outs;
  for (const auto& l : t) {
    LevelOutput o;
    o.cls_logits = tape.constant(Tensor({num_classes, l.height, l.width}, cls_logit), "cls");
    o.ctr_logits = tape.constant(Tensor({1, l.height, l.width}, 0.0), "ctr");
    Tensor reg = l.offsets;
    for (double& v : reg.data()) v = offsets_from_targets && v > 0.0 ? v : 5.0;
    o.reg = tape.constant(reg, "reg");
    o.feature = o.ctr_logits;
    outs.push_back(o);
  }
  return outs;
}

TEST(DetectionLoss, AllBackgroundWithConfidentNegativesIsNearZero) {
  const auto t = assign_targets(std::vector<Box>{}, std::vector<int>{}, DetectorConfig{});
  Tape tape(false);
  std::vector<std::vector<LevelOutput>> outs{constant_outputs(tape, t, 3, -12.0, false)};
  std::vector<AssignedTargets> targets{t};
  const DetectionLoss loss = detection_loss(tape, outs, targets);
  EXPECT_EQ(loss.num_fg, 0);
  EXPECT_LT(loss.total.value()[0], 1e-6);
  EXPECT_EQ(loss.reg, 0.0);
}

TEST(DetectionLoss, IouTermZeroWhenOffsetsMatch) {
  const std::vector<Box> boxes{{20, 20, 44, 50}};
  const std::vector<int> labels{0};
  const auto t = assign_targets(boxes, labels, DetectorConfig{});
  ASSERT_GT(total_foreground(t), 0);
  Tape tape(false);
  std::vector<std::vector<LevelOutput>> outs{constant_outputs(tape, t, 3, 0.0, true)};
  std::vector<AssignedTargets> targets{t};
  const DetectionLoss loss = detection_loss(tape, outs, targets);
  EXPECT_NEAR(loss.reg, 0.0, 1e-12);
  EXPECT_GT(loss.cls, 0.0);
}

TEST(DetectionLoss, FocalMatchesElementwiseOracle) {
  const std::vector<Box> boxes{{10, 10, 50, 40}, {70, 60, 120, 126}};
  const std::vector<int> labels{2, 0};
  const auto t = assign_targets(boxes, labels, DetectorConfig{});
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, 2.0);
  Tape tape(false);
  std::vector<LevelOutput> outs = constant_outputs(tape, t, 3, 0.0, true);
  double oracle = 0.0;
  const double a = 0.25, g = 2.0;
  for (std::size_t l = 0; l < t.size(); ++l) {
    Tensor logits({3, t[l].height, t[l].width});
    const std::size_t plane = static_cast<std::size_t>(t[l].height) * t[l].width;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double z = n(rng);
        logits[c * plane + i] = z;
        const double p = 1.0 / (1.0 + std::exp(-z));
        const bool pos = t[l].cls[i] == static_cast<int>(c);
        oracle += pos ? -a * std::pow(1 - p, g) * std::log(p) : -(1 - a) * std::pow(p, g) * std::log(1 - p);
      }
    }
    outs[l].cls_logits = tape.constant(logits, "cls");
  }
  std::vector<std::vector<LevelOutput>> batch{outs};
  std::vector<AssignedTargets> targets{t};
  const DetectionLoss loss = detection_loss(tape, batch, targets);
  EXPECT_NEAR(loss.cls, oracle / total_foreground(t), 1e-9);
}

LevelPrediction single_location(int stride, int n, int y, int x, int label, double cls_logit,
                                const double offsets[4]) {
  LevelPrediction p;
  p.stride = stride;
  p.cls_logits = Tensor({3, n, n}, -30.0);
  p.ctr_logits = Tensor({1, n, n}, 30.0);
  p.reg = Tensor({4, n, n}, 1.0);
  const std::size_t plane = static_cast<std::size_t>(n * n), i = static_cast<std::size_t>(y * n + x);
  p.cls_logits[static_cast<std::size_t>(label) * plane + i] = cls_logit;
  for (int k = 0; k < 4; ++k) p.reg[static_cast<std::size_t>(k) * plane + i] = offsets[k];
  return p;
}

TEST(Decode, WorkedExample) {
  // Stride 8, cell (3, 3) is pixel (28, 28); stride 16 cell (1, 1) is (24, 24);
  // stride 32 cell (0, 0) is (16, 16). Pixel (32, 32) needs stride 64 cell 0.
  const double off[4] = {4, 6, 10, 2};
  const LevelPrediction p = single_location(64, 2, 0, 0, 1, 10.0, off);
  const auto dets = decode_and_nms(std::vector<LevelPrediction>{p}, 128);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].box, (Box{28, 26, 42, 34}));
  EXPECT_EQ(dets[0].label, 1);
  EXPECT_EQ(decode_box(32, 32, 4, 6, 10, 2), (Box{28, 26, 42, 34}));
}

TEST(Decode, NothingAboveThreshold) {
  LevelPrediction p;
  p.stride = 8;
  p.cls_logits = Tensor({3, 4, 4}, -10.0);
  p.ctr_logits = Tensor({1, 4, 4}, 0.0);
  p.reg = Tensor({4, 4, 4}, 3.0);
  EXPECT_TRUE(decode_and_nms(std::vector<LevelPrediction>{p}, 32).empty());
}

TEST(Decode, NmsKeepsHighestDuplicate) {
  const Box b{10, 10, 30, 30};
  const auto kept = nms({{b, 0, 0.8, 0.8}, {b, 0, 0.9, 0.9}}, 0.5, 100);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_DOUBLE_EQ(kept[0].score, 0.9);
  // Different classes do not suppress each other.
  EXPECT_EQ(nms({{b, 0, 0.8, 0.8}, {b, 1, 0.9, 0.9}}, 0.5, 100).size(), 2u);
}

TEST(Decode, BoxesWellOrderedAndClipped) {
  const Detector det(DetectorConfig{}, 9);
  DecodeParams p;
  p.score_thresh = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene s = oada::scene::generate_scene(seed, {});
    for (const Detection& d : decode_and_nms(det.predict(s.image), 128, p)) {
      EXPECT_LT(d.box.x1, d.box.x2);
      EXPECT_LT(d.box.y1, d.box.y2);
      EXPECT_GE(d.box.x1, 0.0);
      EXPECT_LE(d.box.y2, 128.0);
    }
  }
}

TEST(Map, PerfectDetectionsScoreOne) {
  std::vector<GroundTruth> gt{{{{1, 1, 20, 20}, {30, 30, 60, 50}}, {0, 2}}, {{{5, 5, 40, 40}}, {2}}};
  std::vector<std::vector<Detection>> dets(2);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (std::size_t k = 0; k < gt[i].boxes.size(); ++k) dets[i].push_back({gt[i].boxes[k], gt[i].labels[k], 1.0, 1.0});
  }
  const MapReport r = evaluate_map(dets, gt, 3);
  EXPECT_DOUBLE_EQ(r.map, 1.0);
  EXPECT_EQ(r.classes_present, 2);
  EXPECT_FALSE(r.per_class_ap[1].has_value());
}

TEST(Map, EmptyDetectionsScoreZero) {
  std::vector<GroundTruth> gt{{{{1, 1, 20, 20}}, {0}}};
  std::vector<std::vector<Detection>> dets(1);
  EXPECT_DOUBLE_EQ(evaluate_map(dets, gt, 3).map, 0.0);
}

TEST(Map, HandComputedThreeImageCase) {
  // Class 0 ranked hits: TP(0.9), FP(0.8), TP(0.7), duplicate FP(0.6); one GT
  // never found. Recall/precision: (1/3,1) (1/3,1/2) (2/3,2/3) (2/3,1/2).
  // Interpolated area = 1/3 * 1 + 1/3 * 2/3 = 5/9. Class 1 is perfect.
  const Box g1{0, 0, 20, 20}, g2{10, 10, 40, 40}, g3{50, 50, 90, 90}, g4{60, 0, 100, 30};
  std::vector<GroundTruth> gt{{{g1, g4}, {0, 1}}, {{g2}, {0}}, {{g3}, {0}}};
  std::vector<std::vector<Detection>> dets(3);
  dets[0].push_back({g1, 0, 0.9, 0.9});
  dets[2].push_back({{0, 60, 30, 100}, 0, 0.8, 0.8});
  dets[1].push_back({{11, 10, 40, 41}, 0, 0.7, 0.7});
  dets[0].push_back({{1, 0, 20, 21}, 0, 0.6, 0.6});
  dets[0].push_back({g4, 1, 0.5, 0.5});
  const MapReport r = evaluate_map(dets, gt, 2);
  ASSERT_TRUE(r.per_class_ap[0].has_value());
  EXPECT_NEAR(*r.per_class_ap[0], 5.0 / 9.0, 1e-12);
  EXPECT_NEAR(*r.per_class_ap[1], 1.0, 1e-12);
  EXPECT_NEAR(r.map, 7.0 / 9.0, 1e-12);
}

TEST(Map, MonotoneWhenCorrectDetectionsDeleted) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<GroundTruth> gt;
    std::vector<std::vector<Detection>> dets;
    for (std::uint64_t img = 0; img < 4; ++img) {
      const Scene s = oada::scene::generate_scene(seed * 100 + img, {});
      gt.push_back(to_ground_truth(s));
      std::vector<Detection> d;
      for (std::size_t k = 0; k < s.boxes.size(); ++k) {
        if (u(rng) < 0.8) d.push_back({s.boxes[k], s.labels[k], u(rng), 0.0});
        if (u(rng) < 0.4) d.push_back({{10 * u(rng), 10 * u(rng), 30 + 90 * u(rng), 30 + 90 * u(rng)},
                                       static_cast<int>(3 * u(rng)) % 3, u(rng), 0.0});
      }
      dets.push_back(d);
    }
    double prev = evaluate_map(dets, gt, 3).map;
    EXPECT_GE(prev, 0.0);
    EXPECT_LE(prev, 1.0);
    for (std::size_t img = 0; img < dets.size(); ++img) {
      for (std::size_t k = 0; k < dets[img].size();) {
        const Detection& d = dets[img][k];
        bool correct = false;
        for (std::size_t j = 0; j < gt[img].boxes.size(); ++j) {
          correct = correct || (gt[img].labels[j] == d.label && gt[img].boxes[j] == d.box);
        }
        if (!correct) {
          ++k;
          continue;
        }
        dets[img].erase(dets[img].begin() + static_cast<std::ptrdiff_t>(k));
        const double now = evaluate_map(dets, gt, 3).map;
        EXPECT_LE(now, prev + 1e-12);
        prev = now;
      }
    }
  }
}

TEST(Optimizer, StepScheduleDecays) {
  StepSchedule s;
  EXPECT_DOUBLE_EQ(s.lr_at(0, 2000), 0.0001);
  EXPECT_DOUBLE_EQ(s.lr_at(49, 2000), 0.005);
  EXPECT_DOUBLE_EQ(s.lr_at(100, 2000), 0.01);
  EXPECT_DOUBLE_EQ(s.lr_at(1199, 2000), 0.01);
  EXPECT_NEAR(s.lr_at(1200, 2000), 0.001, 1e-15);
  EXPECT_NEAR(s.lr_at(1800, 2000), 0.0001, 1e-15);
  EXPECT_EQ(s.milestone_iters(2000), (std::vector<int>{1200, 1800}));
}

TEST(Optimizer, MomentumAndWeightDecay) {
  Tensor w({1}, 1.0);
  w.set_requires_grad(true);
  Sgd opt({&w}, {0.9, 0.1, 0.0});
  w.grad()[0] = 2.0;
  opt.step(0.5);  // v = 2 + 0.1 = 2.1; w = 1 - 1.05
  EXPECT_NEAR(w[0], -0.05, 1e-15);
  w.grad()[0] = 0.0;
  opt.step(0.5);  // v = 0.9 * 2.1 - 0.005 = 1.885
  EXPECT_NEAR(w[0], -0.05 - 0.9425, 1e-12);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Detector a(DetectorConfig{}, 4);
  const auto path = std::filesystem::temp_directory_path() / "oada_fcos_ckpt_test.bin";
  Checkpoint ck = make_checkpoint(a, 321);
  ck.tensors[0].value[0] = -0.0;
  ck.tensors[0].value[1] = 1e-310;
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.iteration, 321);
  EXPECT_EQ(back.config_hash, config_hash(a.config()));
  ASSERT_EQ(back.tensors.size(), ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].name, ck.tensors[i].name);
    ASSERT_EQ(back.tensors[i].value.size(), ck.tensors[i].value.size());
    EXPECT_EQ(std::memcmp(back.tensors[i].value.data().data(), ck.tensors[i].value.data().data(),
                          8 * ck.tensors[i].value.size()),
              0);
  }
  Detector b = detector_from_checkpoint(load_checkpoint(path));
  const Scene s = oada::scene::generate_scene(1, {});
  Detector a2(DetectorConfig{}, 4);
  load_into(a2, ck);
  EXPECT_TRUE(b.predict(s.image)[0].cls_logits == a2.predict(s.image)[0].cls_logits);
  // Size on disk: header line plus 8 bytes per value.
  std::size_t values = 0;
  for (const auto& t : ck.tensors) values += t.value.size();
  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(std::filesystem::file_size(path), header.size() + 1 + 8 * values);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsMismatchedConfig) {
  Detector a(DetectorConfig{}, 4);
  DetectorConfig other;
  other.feature_channels = 16;
  Detector b(other, 4);
  EXPECT_THROW(load_into(b, make_checkpoint(a, 0)), CheckpointError);
}

// Source-only training on 50 scenes should fit them well.
TEST(Training, SourceSanityRun) {
  oada::scene::SceneSpec spec;
  std::vector<Scene> scenes;
  std::vector<AssignedTargets> targets;
  for (std::uint64_t i = 0; i < 50; ++i) {
    scenes.push_back(oada::scene::generate_scene(oada::derive_seed(31, "sanity", i), spec));
    targets.push_back(assign_targets(scenes.back().boxes, scenes.back().labels, DetectorConfig{}));
  }
  Detector det(DetectorConfig{}, 8);
  std::vector<Tensor*> params;
  for (NamedParam& p : det.parameters()) params.push_back(p.tensor);
  Sgd opt(params, SgdParams{});
  StepSchedule sched;
  sched.base_lr = 0.02;
  sched.warmup_iters = 200;
  const int iters = 3000;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> pick(0, scenes.size() - 1);
  for (int it = 0; it < iters; ++it) {
    Tape tape;
    std::vector<std::vector<LevelOutput>> outs;
    std::vector<AssignedTargets> batch_targets;
    for (int b = 0; b < 2; ++b) {
      const std::size_t k = pick(rng);
      outs.push_back(det.forward(tape, tape.constant(scenes[k].image, "image")));
      batch_targets.push_back(targets[k]);
    }
    const DetectionLoss loss = detection_loss(tape, outs, batch_targets);
    tape.backward(loss.total);
    opt.step(sched.lr_at(it, iters));
  }
  std::vector<std::vector<Detection>> dets;
  std::vector<GroundTruth> gt;
  for (const Scene& s : scenes) {
    dets.push_back(decode_and_nms(det.predict(s.image), 128));
    gt.push_back(to_ground_truth(s));
  }
  const double map = evaluate_map(dets, gt, 3).map;
  RecordProperty("map", std::to_string(map));
  EXPECT_GT(map, 0.8);
}

}  // namespace

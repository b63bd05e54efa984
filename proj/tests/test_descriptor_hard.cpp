#include <doctest.h>

#include <algorithm>

#include "oracles.hpp"
#include "semscene/descriptor_hard.hpp"
#include "semscene/error.hpp"

using namespace semscene;

namespace {

struct Fixture {
  DatasetManifest train;
  PosteriorModel post;
  DiscriminantSelection sel;

  explicit Fixture(std::uint64_t seed, std::size_t classes = 3, std::size_t objects = 6, std::size_t keep = 4) {
    Rng rng(seed);
    train = oracle::random_manifest(rng, classes, objects, 40);
    post = build_posterior_model(build_occurrence_model(train, ThresholdGrid()), ClassPrior::uniform(classes));
    sel = select_objects(post, keep);
  }
};

Box centered(double cx, double cy, double half = 0.05) { return {cx - half, cy - half, cx + half, cy + half}; }

ImageRecord with(std::vector<HardDetection> dets) {
  ImageRecord r;
  r.image_id = "probe";
  r.detections = std::move(dets);
  return r;
}

}  // namespace

TEST_CASE("pyramid layout parsing") {
  PyramidLayout def;
  CHECK(def.region_count() == 8);
  CHECK(def.to_string() == "1x1,2x2,3x1");
  CHECK(PyramidLayout::parse("1x1,2x2,3x1") == def);
  CHECK(def.level_offset(2) == 5);
  CHECK(PyramidLayout::parse("4x4").region_count() == 16);
  CHECK_THROWS_AS(PyramidLayout::parse("2by2"), Error);
  CHECK_THROWS_AS(PyramidLayout::parse("0x2"), Error);
  CHECK_THROWS_AS(PyramidLayout::parse("1x1,"), Error);
}

TEST_CASE("region assignment by box center") {
  PyramidLevel quad{2, 2}, bands{3, 1}, whole{1, 1};
  CHECK(assign_region(centered(0.25, 0.25), quad) == 0);
  CHECK(assign_region(centered(0.75, 0.25), quad) == 1);
  CHECK(assign_region(centered(0.25, 0.75), quad) == 2);
  CHECK(assign_region(centered(0.75, 0.75), quad) == 3);
  CHECK(assign_region(Box{0.0, 0.0, 1.0, 1.0}, quad) == 0);  // center on both boundaries
  CHECK(assign_region(Box{0.4, 0.0, 0.6, 0.2}, quad) == 0);
  CHECK(assign_region(centered(0.5, 0.1), bands) == 0);
  CHECK(assign_region(centered(0.5, 0.5), bands) == 1);
  CHECK(assign_region(centered(0.5, 0.9), bands) == 2);
  CHECK(assign_region(Box{0.0, 0.0, 0.1, 0.1}, whole) == 0);
  CHECK(assign_region(Box{0.98, 0.98, 1.0, 1.0}, quad) == 3);
}

TEST_CASE("descriptor length") {
  CHECK(hard_descriptor_length(140, 18, PyramidLayout()) == 20160);
  Fixture f(1);
  CHECK(encode_hard(with({}), f.post, f.sel, PyramidLayout()).size() == 4 * 3 * 8);
}

TEST_CASE("image without selected detections encodes to zeros") {
  Fixture f(2);
  auto v = encode_hard(with({}), f.post, f.sel, PyramidLayout());
  CHECK(std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));

  std::size_t unselected = 0;
  while (std::find(f.sel.selected.begin(), f.sel.selected.end(), unselected) != f.sel.selected.end()) ++unselected;
  auto w = encode_hard(with({{unselected, 0.8, centered(0.3, 0.3)}}), f.post, f.sel, PyramidLayout());
  CHECK(std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; }));
}

TEST_CASE("single detection places its posterior column in each level") {
  Fixture f(3);
  const std::size_t o = f.sel.selected[1];
  PyramidLayout layout;
  auto v = encode_hard(with({{o, 0.62, centered(0.8, 0.2)}}), f.post, f.sel, layout);
  const auto col = posterior_at_score(f.post, o, 0.62);
  const std::size_t C = 3, R = f.sel.selected.size();
  // whole image, top-right quadrant, top band
  for (std::size_t region : {std::size_t{0}, std::size_t{1 + 1}, std::size_t{5 + 0}})
    for (std::size_t c = 0; c < C; ++c) CHECK(v[(region * R + 1) * C + c] == col[c]);
  double total = 0;
  for (double x : v) total += x;
  double coltotal = 0;
  for (double x : col) coltotal += x;
  CHECK(total == doctest::Approx(3 * coltotal));
}

TEST_CASE("two detections in one region average their columns") {
  Fixture f(4);
  const std::size_t o = f.sel.selected[0];
  auto v = encode_hard(with({{o, 0.2, centered(0.2, 0.2)}, {o, 0.9, centered(0.3, 0.1)}}), f.post, f.sel,
                       PyramidLayout());
  const auto u = posterior_at_score(f.post, o, 0.2), w = posterior_at_score(f.post, o, 0.9);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(v[c] == doctest::Approx((u[c] + w[c]) / 2).epsilon(1e-15));
    CHECK(v[(1 * 4) * 3 + c] == doctest::Approx((u[c] + w[c]) / 2).epsilon(1e-15));
  }
}

TEST_CASE("detection order does not change the descriptor") {
  Fixture f(5);
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<HardDetection> dets;
    for (int k = 0; k < 12; ++k) {
      const double cx = rng.uniform(0.1, 0.9), cy = rng.uniform(0.1, 0.9);
      dets.push_back({rng.index(6), rng.uniform(), centered(cx, cy, 0.05)});
    }
    auto a = encode_hard(with(dets), f.post, f.sel, PyramidLayout());
    rng.shuffle(dets);
    CHECK(encode_hard(with(dets), f.post, f.sel, PyramidLayout()) == a);
  }
}

TEST_CASE("coarsest level equals the pooled average over the whole image") {
  Fixture f(6);
  Rng rng(66);
  std::vector<HardDetection> dets;
  for (int k = 0; k < 15; ++k) dets.push_back({rng.index(6), rng.uniform(), centered(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9))});
  auto v = encode_hard(with(dets), f.post, f.sel, PyramidLayout());
  for (std::size_t i = 0; i < f.sel.selected.size(); ++i) {
    const std::size_t o = f.sel.selected[i];
    std::vector<double> sum(3, 0.0);
    std::size_t n = 0;
    for (const auto& d : dets)
      if (d.object_index == o) {
        auto col = posterior_at_score(f.post, o, d.score);
        for (std::size_t c = 0; c < 3; ++c) sum[c] += col[c];
        ++n;
      }
    for (std::size_t c = 0; c < 3; ++c) CHECK(v[i * 3 + c] == doctest::Approx(n ? sum[c] / n : 0.0).epsilon(1e-12));
  }
}

TEST_CASE("score perturbations inside a grid cell leave the descriptor unchanged") {
  Fixture f(7);
  Rng rng(77);
  const double step = f.post.grid.step();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<HardDetection> dets, moved;
    for (int k = 0; k < 10; ++k) {
      const std::size_t t = rng.index(f.post.grid.size());
      HardDetection d{rng.index(6), f.post.grid.value(t), centered(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9))};
      dets.push_back(d);
      d.score += rng.uniform(-0.45, 0.45) * step;
      moved.push_back(d);
    }
    CHECK(encode_hard(with(dets), f.post, f.sel, PyramidLayout()) ==
          encode_hard(with(moved), f.post, f.sel, PyramidLayout()));
  }
}

TEST_CASE("soft records are rejected") {
  Fixture f(8);
  ImageRecord r;
  r.detections = std::vector<SoftPatch>{};
  CHECK_THROWS_AS(encode_hard(r, f.post, f.sel, PyramidLayout()), Error);
}

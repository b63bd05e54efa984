#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "semscene/error.hpp"
#include "semscene/occurrence.hpp"

using namespace semscene;

namespace {

// Occurrence model over `classes` classes and one threshold column per
// entry of `columns[o]` (class-major), for direct posterior tests.
OccurrenceModel manual_model(const std::vector<std::vector<std::vector<double>>>& probs) {
  const std::size_t O = probs.size(), C = probs[0].size(), T = probs[0][0].size();
  std::vector<std::string> on, cn;
  for (std::size_t o = 0; o < O; ++o) on.push_back("o" + std::to_string(o));
  for (std::size_t c = 0; c < C; ++c) cn.push_back("c" + std::to_string(c));
  OccurrenceModel m{ThresholdGrid(0.0, (T - 1) * 0.5, 0.5), ObjectVocabulary(on), SceneClassSet(cn), Tensor3(O, C, T)};
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) m.probs.at(o, c, t) = probs[o][c][t];
  return m;
}

}  // namespace

TEST_CASE("threshold grid") {
  ThresholdGrid g;
  CHECK(g.size() == 21);
  CHECK(g.value(20) == doctest::Approx(1.0));
  CHECK(ThresholdGrid(0.0, 0.12, 0.05).size() == 3);
  CHECK_THROWS(ThresholdGrid(0.5, 0.5, 0.1));
  CHECK_THROWS(ThresholdGrid(0.0, 1.0, 0.0));
  CHECK_THROWS(ThresholdGrid(0.0, 0.04, 0.05));  // one point only
}

TEST_CASE("nearest grid index") {
  ThresholdGrid g(0.0, 1.0, 0.1);
  CHECK(g.nearest_index(0.3) == 3);
  CHECK(g.nearest_index(g.value(7)) == 7);
  CHECK(g.nearest_index(5.0) == 10);
  CHECK(g.nearest_index(-1.0) == 0);
  CHECK(g.nearest_index(0.34) == 3);
  CHECK(g.nearest_index(0.36) == 4);
  ThresholdGrid h(0.0, 1.0, 0.25);  // midpoints exactly representable
  CHECK(h.nearest_index(0.125) == 0);
  CHECK(h.nearest_index(0.625) == 2);
}

TEST_CASE("occurrence counts per class") {
  auto m = parse_manifest_text(
      "#vocab chair\n#classes cafe office\n#mode hard\n"
      "img a cafe\ndet chair 0.9 0 0 1 1\n\nimg b cafe\ndet chair 0.6 0 0 1 1\n\n"
      "img c cafe\ndet chair 0.7 0 0 1 1\n\nimg d cafe\n\nimg e office\ndet chair 0.95 0 0 1 1\n");
  auto occ = build_occurrence_model(m, ThresholdGrid(0.0, 1.0, 0.5));
  CHECK(occ.probs.at(0, 0, 0) == 0.75);   // 3 of 4 at theta = 0
  CHECK(occ.probs.at(0, 0, 1) == 0.75);   // 0.6, 0.7, 0.9 >= 0.5
  CHECK(occ.probs.at(0, 0, 2) == 0.0);
  CHECK(occ.probs.at(0, 1, 0) == 1.0);    // every office image has a chair
}

TEST_CASE("empty class is a model error naming the class") {
  auto m = parse_manifest_text("#vocab a\n#classes x lonely\n#mode hard\nimg i x\n");
  try {
    build_occurrence_model(m, ThresholdGrid());
    FAIL("expected model error");
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::Model);
    CHECK(std::string(e.what()).find("lonely") != std::string::npos);
  }
}

TEST_CASE("occurrence model equals brute-force recount and is monotone") {
  Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = oracle::random_manifest(rng, 3, 5, 20);
    ThresholdGrid grid(0.0, 1.0, 0.05);
    auto occ = build_occurrence_model(m, grid);
    CHECK(occ.probs.data == oracle::occurrence_recount(m, grid));
    for (std::size_t o = 0; o < 5; ++o)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t t = 0; t + 1 < grid.size(); ++t) CHECK(occ.probs.at(o, c, t) >= occ.probs.at(o, c, t + 1));
  }
}

TEST_CASE("soft manifests count the max patch score") {
  auto m = parse_manifest_text("#vocab a b\n#classes x\n#mode soft\nimg i x\npatch 0 0.2 0.9\npatch 1 0.6 0.1\n");
  auto occ = build_occurrence_model(m, ThresholdGrid(0.0, 1.0, 0.5));
  CHECK(occ.probs.at(0, 0, 1) == 1.0);  // max 0.6
  CHECK(occ.probs.at(0, 0, 2) == 0.0);
  CHECK(occ.probs.at(1, 0, 1) == 1.0);
}

TEST_CASE("posterior by Bayes rule") {
  auto occ = manual_model({{{0.9, 0.0}, {0.1, 0.0}}});
  auto post = build_posterior_model(occ, ClassPrior::uniform(2));
  CHECK(post.posteriors.at(0, 0, 0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK_FALSE(post.is_fallback(0, 0));
  CHECK(post.is_fallback(0, 1));
  CHECK(post.column(0, 1) == std::vector<double>{0.5, 0.5});

  auto last = build_posterior_model(occ, ClassPrior::uniform(2), FallbackRule::LastValid);
  CHECK(last.is_fallback(0, 1));
  CHECK(last.column(0, 1) == last.column(0, 0));

  // last-valid with no valid column before it falls back to the prior
  auto none = build_posterior_model(manual_model({{{0.0, 0.0}, {0.0, 0.0}}}), ClassPrior::uniform(2),
                                    FallbackRule::LastValid);
  CHECK(none.column(0, 0) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("posterior matches an oracle Bayes evaluation") {
  Rng rng(7);
  std::vector<std::vector<std::vector<double>>> probs(4, std::vector<std::vector<double>>(3, std::vector<double>(1)));
  for (auto& o : probs)
    for (auto& c : o) c[0] = rng.uniform();
  // manual_model needs at least 2 thresholds
  for (auto& o : probs)
    for (auto& c : o) c.push_back(0.0);
  ClassPrior prior{{0.5, 0.3, 0.2}};
  auto post = build_posterior_model(manual_model(probs), prior);
  for (std::size_t o = 0; o < 4; ++o) {
    auto expect = oracle::bayes({probs[o][0][0], probs[o][1][0], probs[o][2][0]}, prior.weights);
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(post.posteriors.at(o, c, 0) - expect[c]) <= 1e-12);
  }
}

TEST_CASE("prior validation") {
  CHECK_THROWS(ClassPrior{{0.5, 0.6}}.validate(2));
  CHECK_THROWS(ClassPrior{{1.0}}.validate(2));
  CHECK_NOTHROW(ClassPrior::uniform(7).validate(7));
}

TEST_CASE("one-hot prior makes non-fallback columns one-hot") {
  Rng rng(8);
  auto m = oracle::random_manifest(rng, 3, 6, 25);
  auto occ = build_occurrence_model(m, ThresholdGrid());
  auto post = build_posterior_model(occ, ClassPrior::one_hot(3, 1));
  for (std::size_t o = 0; o < 6; ++o)
    for (std::size_t t = 0; t < post.grid.size(); ++t) {
      if (post.is_fallback(o, t)) continue;
      CHECK(occ.probs.at(o, 1, t) > 0);
      CHECK(post.column(o, t) == std::vector<double>{0, 1, 0});
    }
}

TEST_CASE("discriminability examples") {
  CHECK(max_ranked_gap(std::vector<double>{0.6, 0.3, 0.08, 0.02}) == doctest::Approx(0.3));
  CHECK(max_ranked_gap(std::vector<double>{0.02, 0.08, 0.6, 0.3}) == doctest::Approx(0.3));
  CHECK(max_ranked_gap(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == 0.0);
  CHECK(max_ranked_gap(std::vector<double>{0, 1, 0}) == 1.0);
  CHECK_THROWS(max_ranked_gap(std::vector<double>{1.0}));

  auto post = build_posterior_model(manual_model({{{0.9, 0.0}, {0.1, 0.0}}}), ClassPrior::uniform(2));
  CHECK(discriminability_at(post, 0, 0) == doctest::Approx(0.8));
  CHECK(discriminability_at(post, 0, 1) == 0.0);  // fallback cell

  auto single = build_posterior_model(manual_model({{{0.5, 0.2}}}), ClassPrior::uniform(1));
  CHECK_THROWS_AS(discriminability_at(single, 0, 0), Error);
}

TEST_CASE("discriminability matches the oracle on random columns") {
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> col(2 + rng.index(8));
    double s = 0;
    for (auto& v : col) s += v = rng.uniform();
    for (auto& v : col) v /= s;
    const double phi = max_ranked_gap(col);
    CHECK(phi == oracle::ranked_gap(col));
    CHECK(phi >= 0);
    CHECK(phi <= 1);
  }
}

TEST_CASE("select objects") {
  // Object 0 profile (0.1, 0.9); object 1 profile (0.2, 0.2) as posterior gaps.
  auto occ = manual_model({{{0.55, 0.95}, {0.45, 0.05}}, {{0.6, 0.6}, {0.4, 0.4}}});
  auto post = build_posterior_model(occ, ClassPrior::uniform(2));
  CHECK(discriminability_at(post, 0, 0) == doctest::Approx(0.1));
  CHECK(discriminability_at(post, 0, 1) == doctest::Approx(0.9));
  CHECK(discriminability_at(post, 1, 1) == doctest::Approx(0.2));

  auto sel = select_objects(post, 1, Aggregation::Max);
  CHECK(sel.selected == std::vector<std::size_t>{0});
  auto all = select_objects(post, 2, Aggregation::Mean);
  CHECK(all.selected == std::vector<std::size_t>{0, 1});
  CHECK(all.scores[0] == doctest::Approx(0.5));

  CHECK_THROWS_AS(select_objects(post, 0), Error);
  CHECK_THROWS_AS(select_objects(post, 3), Error);

  // ties go to the lower object index
  auto tied = build_posterior_model(manual_model({{{0.5, 0}, {0.5, 0}}, {{0.5, 0}, {0.5, 0}}}), ClassPrior::uniform(2));
  CHECK(select_objects(tied, 2).selected == std::vector<std::size_t>{0, 1});
}

TEST_CASE("planted class-specific objects rank first") {
  // Objects 2, 5 and 7 occur in exactly one class; the rest everywhere.
  Rng rng(3);
  std::vector<std::vector<std::vector<double>>> probs(10, std::vector<std::vector<double>>(4, std::vector<double>(3)));
  for (std::size_t o = 0; o < 10; ++o)
    for (std::size_t c = 0; c < 4; ++c) {
      const bool planted = o == 2 || o == 5 || o == 7;
      const double base = planted ? (c == o % 4 ? 0.9 : 0.0) : rng.uniform(0.4, 0.6);
      probs[o][c] = {base, base * 0.8, base * 0.5};
    }
  auto sel = select_objects(build_posterior_model(manual_model(probs), ClassPrior::uniform(4)), 3);
  CHECK(std::set<std::size_t>(sel.selected.begin(), sel.selected.end()) == std::set<std::size_t>{2, 5, 7});
}

TEST_CASE("permuting classes permutes posteriors and keeps the selection") {
  Rng rng(12);
  auto m = oracle::random_manifest(rng, 4, 8, 30);
  auto permuted = m;
  const std::vector<std::size_t> perm{2, 0, 3, 1};  // old class -> new class
  std::vector<std::string> names(4);
  for (std::size_t c = 0; c < 4; ++c) names[perm[c]] = m.classes.name(c);
  permuted.classes = SceneClassSet(names);
  for (auto& r : permuted.records) r.scene_class = perm[*r.scene_class];

  auto a = build_posterior_model(build_occurrence_model(m, ThresholdGrid()), ClassPrior::uniform(4));
  auto b = build_posterior_model(build_occurrence_model(permuted, ThresholdGrid()), ClassPrior::uniform(4));
  for (std::size_t o = 0; o < 8; ++o)
    for (std::size_t t = 0; t < a.grid.size(); ++t) {
      for (std::size_t c = 0; c < 4; ++c)
        CHECK(a.posteriors.at(o, c, t) == doctest::Approx(b.posteriors.at(o, perm[c], t)).epsilon(1e-12));
      CHECK(discriminability_at(a, o, t) == doctest::Approx(discriminability_at(b, o, t)).epsilon(1e-12));
    }
  auto sa = select_objects(a, 4), sb = select_objects(b, 4);
  CHECK(std::set<std::size_t>(sa.selected.begin(), sa.selected.end()) ==
        std::set<std::size_t>(sb.selected.begin(), sb.selected.end()));
}

TEST_CASE("posterior_at_score lookup") {
  auto occ = manual_model({{{0.8, 0.6, 0.2}, {0.2, 0.4, 0.1}}});
  auto post = build_posterior_model(occ, ClassPrior::uniform(2));  // grid 0, 0.5, 1.0
  CHECK(posterior_at_score(post, 0, 0.5) == post.column(0, 1));
  CHECK(posterior_at_score(post, 0, 7.0) == post.column(0, 2));
  CHECK(posterior_at_score(post, 0, 0.25) == post.column(0, 0));  // equidistant -> lower
  CHECK(posterior_at_score(post, 0, 0.3) == post.column(0, 1));
  CHECK_THROWS(posterior_at_score(post, 1, 0.3));
}

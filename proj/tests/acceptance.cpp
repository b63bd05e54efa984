// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "harness.hpp"
#include "oracles.hpp"
#include "semscene/binary_io.hpp"
#include "semscene/descriptor_soft.hpp"
#include "semscene/ensemble.hpp"

using namespace semscene;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::string failures;

  void require(bool ok, const std::string& what) {
    if (!ok && failures.find(what) == std::string::npos) failures += (failures.empty() ? "" : ", ") + what;
    pass = pass && ok;
  }
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// ---------------------------------------------------------------- 1

void occurrence_oracle(Outcome& out) {
  const auto start = Clock::now();
  Rng rng(101);
  std::size_t cells = 0;
  for (int m = 0; m < 25; ++m) {
    const std::size_t C = 1 + rng.index(5), O = 1 + rng.index(10), N = C + rng.index(31 - C);
    auto manifest = oracle::random_manifest(rng, C, O, N, rng.uniform(0.1, 0.7));
    const ThresholdGrid grid;
    auto occ = build_occurrence_model(manifest, grid);
    out.require(occ.probs.data == oracle::occurrence_recount(manifest, grid), "recount mismatch");
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t + 1 < grid.size(); ++t)
          out.require(occ.probs.at(o, c, t + 1) <= occ.probs.at(o, c, t), "monotonicity");
    cells += occ.probs.data.size();
  }
  const double secs = seconds_since(start);
  out.require(secs < 10.0, "runtime");
  out.detail << "25 manifests, " << cells << " cells exact, " << secs << " s";
}

// ---------------------------------------------------------------- 2

void posterior_oracle(Outcome& out) {
  Rng rng(202);
  double worst_sum = 0, worst_entry = 0;
  std::size_t columns = 0;
  for (int m = 0; m < 25; ++m) {
    const std::size_t C = 2 + rng.index(4), O = 1 + rng.index(10), N = C + rng.index(31 - C);
    auto manifest = oracle::random_manifest(rng, C, O, N, rng.uniform(0.1, 0.7));
    auto occ = build_occurrence_model(manifest, ThresholdGrid());
    ClassPrior prior;
    if (m % 3 == 0) {
      prior = ClassPrior::uniform(C);
    } else if (m % 3 == 1) {
      prior = ClassPrior::empirical(manifest);
    } else {
      double s = 0;
      for (std::size_t c = 0; c < C; ++c) s += prior.weights.emplace_back(rng.uniform(0.05, 1.0));
      for (auto& w : prior.weights) w /= s;
    }
    auto post = build_posterior_model(occ, prior, m % 2 ? FallbackRule::LastValid : FallbackRule::Prior);
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t t = 0; t < post.grid.size(); ++t) {
        if (post.is_fallback(o, t)) continue;
        ++columns;
        std::vector<double> lik(C);
        for (std::size_t c = 0; c < C; ++c) lik[c] = occ.probs.at(o, c, t);
        const auto want = oracle::bayes(lik, prior.weights);
        out.require(!want.empty(), "non-fallback column with zero evidence");
        double s = 0;
        for (std::size_t c = 0; c < C; ++c) {
          s += post.posteriors.at(o, c, t);
          if (!want.empty()) worst_entry = std::max(worst_entry, std::abs(post.posteriors.at(o, c, t) - want[c]));
        }
        worst_sum = std::max(worst_sum, std::abs(s - 1));
      }
  }
  out.require(worst_sum <= 1e-9, "normalization");
  out.require(worst_entry <= 1e-12, "Bayes oracle");
  out.detail << columns << " columns, max |sum-1| " << worst_sum << ", max entry error " << worst_entry;
}

// ---------------------------------------------------------------- 3

void discriminability(Outcome& out) {
  Rng rng(303);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> col(2 + rng.index(17));
    double s = 0;
    for (auto& v : col) s += v = rng.bernoulli(0.1) ? 0.0 : rng.uniform();
    if (s == 0) col[0] = s = 1;
    for (auto& v : col) v /= s;
    out.require(max_ranked_gap(col) == oracle::ranked_gap(col), "column mismatch");
  }

  int trials = 0;
  for (; trials < 50; ++trials) {
    const std::size_t C = 2 + rng.index(6), O = 4 + rng.index(20);
    const ThresholdGrid grid;
    OccurrenceModel occ{grid, {}, {}, Tensor3(O, C, grid.size())};
    std::vector<std::string> on, cn;
    for (std::size_t o = 0; o < O; ++o) on.push_back("o" + std::to_string(o));
    for (std::size_t c = 0; c < C; ++c) cn.push_back("c" + std::to_string(c));
    occ.vocabulary = ObjectVocabulary(on);
    occ.classes = SceneClassSet(cn);
    std::vector<char> planted(O);
    std::size_t n_planted = 0;
    for (std::size_t o = 0; o < O; ++o) {
      planted[o] = rng.bernoulli(0.4);
      n_planted += planted[o];
      const std::size_t home = rng.index(C);
      const double p = rng.uniform(0.2, 1.0);
      const std::size_t cutoff = 1 + rng.index(grid.size());
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < cutoff; ++t) occ.probs.at(o, c, t) = planted[o] ? (c == home ? p : 0.0) : p;
    }
    for (auto agg : {Aggregation::Max, Aggregation::Mean}) {
      auto sel = select_objects(build_posterior_model(occ, ClassPrior::uniform(C)), O, agg);
      for (std::size_t k = 0; k < O; ++k)
        out.require((k < n_planted) == static_cast<bool>(planted[sel.selected[k]]), "planted ranking");
    }
  }
  out.detail << "1000 columns exact; planted one-hot objects ranked first in " << trials << " models";
}

// ---------------------------------------------------------------- 4

void descriptor_length(Outcome& out) {
  out.require(hard_descriptor_length(140, 18, PyramidLayout()) == 20160, "formula");
  Rng rng(404);
  auto m = oracle::random_manifest(rng, 18, 150, 60, 0.05);
  auto post = build_posterior_model(build_occurrence_model(m, ThresholdGrid()), ClassPrior::uniform(18));
  auto sel = select_objects(post, 140);
  std::size_t len = 0;
  for (const auto& r : m.records) {
    len = encode_hard(r, post, sel, PyramidLayout()).size();
    out.require(len == 20160, "encoded length");
  }
  out.detail << "R=140, |C|=18, pyramid 1x1,2x2,3x1 -> " << len;
}

// ---------------------------------------------------------------- 5-7

struct SeedRun {
  harness::DomainResult oom1, oom3, raw1;
  double ari = 0;
  bool subgrid_invariant = true;
};

SynthData seed_data(std::uint64_t seed, DatasetManifest& held_out) {
  auto spec = harness::domain_spec(seed, 0.15, 100);
  auto data = generate(spec);
  auto held = spec;
  held.seed = Rng::derive(seed, 77);
  held.shift = {};
  held_out = generate(held).source;
  return data;
}

// Moves every score to another value inside the same threshold cell.
DatasetManifest jitter_within_cells(const DatasetManifest& m, const ThresholdGrid& grid, Rng& rng) {
  DatasetManifest out = m;
  for (auto& r : out.records)
    for (auto& d : std::get<std::vector<HardDetection>>(r.detections))
      d.score = grid.value(grid.nearest_index(d.score)) + rng.uniform(-0.49, 0.49) * grid.step();
  return out;
}

std::vector<SeedRun> run_seeds(double& seconds) {
  const auto start = Clock::now();
  std::vector<SeedRun> runs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DatasetManifest held;
    auto data = seed_data(seed, held);
    SeedRun run;
    const auto c1 = harness::harness_config(1, seed), c3 = harness::harness_config(3, seed);
    run.oom1 = harness::run_domain(data.source, held, data.target, c1);
    run.oom3 = harness::run_domain(data.source, held, data.target, c3);
    run.raw1 = harness::run_domain(data.source, held, data.target, harness::harness_config(1, seed, Encoder::RawScore));

    auto tr = train_pipeline(data.source, c1);
    auto topics = fit_topics(tr.train_descriptors.rows, 3, seed);
    std::vector<std::size_t> found;
    for (const auto& row : tr.train_descriptors.rows) found.push_back(assign_topic(topics, row).topic_index);
    run.ari = adjusted_rand_index(found, data.source_topics);

    Rng rng(Rng::derive(seed, 5));
    auto jittered = jitter_within_cells(data.target, tr.bundle.posterior.grid, rng);
    for (std::size_t i = 0; i < jittered.records.size(); ++i)
      run.subgrid_invariant = run.subgrid_invariant &&
                              tr.bundle.encode(jittered.records[i]) == tr.bundle.encode(data.target.records[i]);
    runs.push_back(run);
  }
  seconds = seconds_since(start);
  return runs;
}

void quantization_robustness(Outcome& out, const std::vector<SeedRun>& runs, double seconds) {
  double oom = 0, raw = 0;
  bool invariant = true;
  out.detail << "per-seed drop oom/raw:";
  for (const auto& r : runs) {
    oom += r.oom1.drop() / runs.size();
    raw += r.raw1.drop() / runs.size();
    invariant = invariant && r.subgrid_invariant;
    out.detail << ' ' << r.oom1.drop() << '/' << r.raw1.drop();
  }
  out.detail << ';';
  out.require(oom <= raw, "mean OOM drop exceeds raw-score drop");
  out.require(invariant, "sub-grid invariance");
  out.require(seconds < 300, "runtime");
  out.detail << " mean drop oom " << oom << " raw " << raw << "; sub-grid invariance "
             << (invariant ? "bit-exact" : "violated") << "; " << seconds << " s";
}

void clustering_gain(Outcome& out, const std::vector<SeedRun>& runs) {
  int wins = 0;
  double avg = 0, mx = 0;
  out.detail << "target accuracy D=1/D=3:";
  for (const auto& r : runs) {
    wins += r.oom3.target_accuracy >= r.oom1.target_accuracy;
    avg += r.oom3.target_accuracy / runs.size();
    mx += r.oom3.target_accuracy_max_pool / runs.size();
    out.detail << ' ' << r.oom1.target_accuracy << '/' << r.oom3.target_accuracy;
  }
  out.require(wins >= 4, "D=3 below D=1 in more than one seed");
  out.require(avg >= mx, "max pooling ahead");
  out.detail << "; wins " << wins << "/5; mean average pooling " << avg << " vs max pooling " << mx;
}

void clustering_recovery(Outcome& out, const std::vector<SeedRun>& runs) {
  std::vector<double> aris;
  for (const auto& r : runs) aris.push_back(r.ari);
  std::sort(aris.begin(), aris.end());
  const double median = aris[aris.size() / 2];
  out.require(median >= 0.8, "median ARI");
  out.detail << "ARI";
  for (double a : aris) out.detail << ' ' << a;
  out.detail << "; median " << median;
}

// ---------------------------------------------------------------- 8

void svm_optimizer(Outcome& out) {
  Rng rng(808);
  std::size_t separable_errors = 0;
  for (int p = 0; p < 20; ++p) {
    const double angle = rng.uniform(0, 6.283185307179586), off = rng.uniform(-1, 1);
    const double wx = std::cos(angle), wy = std::sin(angle);
    std::vector<Vector> x;
    std::vector<int> y;
    while (x.size() < 60) {
      Vector v{rng.uniform(-3, 3), rng.uniform(-3, 3)};
      const double m = wx * v[0] + wy * v[1] + off;
      if (std::abs(m) < 0.5) continue;
      y.push_back(m > 0 ? 1 : -1);
      x.push_back(v);
    }
    if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), -1) == 0) continue;
    auto clf = train_labeled(x, y, {1e-4, 0.1, 100, static_cast<std::uint64_t>(p)});
    for (std::size_t i = 0; i < x.size(); ++i) separable_errors += y[i] * clf.decision(x[i]) <= 0;
  }
  out.require(separable_errors == 0, "separable problems misclassified");

  double worst = 0;
  for (int p = 0; p < 10; ++p) {
    std::vector<Vector> x;
    std::vector<int> y;
    for (int i = 0; i < 80; ++i) {
      const int label = i % 2 ? 1 : -1;
      x.push_back({label * 0.8 + rng.normal(), label * 0.4 + rng.normal()});
      y.push_back(label);
    }
    const double lambda = 0.01;
    const double best = oracle::batch_subgradient_optimum(x, y, lambda, 20000);
    auto clf = train_labeled(x, y, {lambda, 0.1, 200, static_cast<std::uint64_t>(p)});
    const double ratio = svm_objective(clf, x, y, lambda) / best;
    worst = std::max(worst, ratio);
  }
  out.require(worst <= 1.05, "objective gap");
  out.detail << "separable errors " << separable_errors << "; worst objective / oracle " << worst;
}

// ---------------------------------------------------------------- 9

void soft_path(Outcome& out) {
  Rng rng(909);
  double recon = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t dim = 6 + rng.index(10), rank = 1 + rng.index(4);
    std::vector<Vector> dirs(rank, Vector(dim));
    for (auto& d : dirs)
      for (auto& v : d) v = rng.normal();
    std::vector<Vector> xs;
    for (int i = 0; i < 30; ++i) {
      Vector x(dim, 1.5);
      for (const auto& d : dirs) {
        const double a = rng.normal();
        for (std::size_t j = 0; j < dim; ++j) x[j] += a * d[j];
      }
      xs.push_back(x);
    }
    auto pca = fit_pca(xs, rank);
    for (const auto& x : xs) {
      auto back = pca.reconstruct(pca.project(x));
      for (std::size_t j = 0; j < dim; ++j) recon = std::max(recon, std::abs(back[j] - x[j]));
    }
  }
  out.require(recon <= 1e-6, "PCA reconstruction");

  double vlad = 0, weights = 0;
  for (int trial = 0; trial < 20; ++trial) {
    VladCodebook cb;
    const std::size_t k = 1 + rng.index(6), p = 1 + rng.index(6);
    for (std::size_t j = 0; j < k; ++j) {
      cb.centers.emplace_back(p);
      for (auto& v : cb.centers.back()) v = rng.normal();
    }
    cb.sigma = rng.uniform(0.3, 3);
    std::vector<Vector> vs(1 + rng.index(10), Vector(p));
    for (auto& v : vs)
      for (auto& e : v) e = rng.normal();
    const auto got = vlad_accumulate(cb, vs), want = oracle::naive_vlad(vs, cb.centers, cb.sigma);
    for (std::size_t i = 0; i < got.size(); ++i) vlad = std::max(vlad, std::abs(got[i] - want[i]));
    for (const auto& v : vs) {
      const auto w = soft_assignment(cb, v);
      double s = 0;
      for (double e : w) s += e;
      weights = std::max(weights, std::abs(s - 1));
    }
  }
  out.require(vlad <= 1e-9, "VLAD oracle");
  out.require(weights <= 1e-12, "assignment weights");

  auto spec = harness::domain_spec(9, 0.0, 10);
  spec.mode = DetectionMode::Soft;
  spec.patches_per_image = 6;
  auto data = generate(spec);
  auto cfg = harness::harness_config(2, 9);
  cfg.mode = DetectionMode::Soft;
  cfg.objects = 12;
  cfg.pca_dim = 10;
  cfg.codebook_size = 6;
  auto tr = train_pipeline(data.source, cfg);
  bool invariant = true;
  for (auto r : data.target.records) {
    const auto v = tr.bundle.encode(r);
    rng.shuffle(std::get<std::vector<SoftPatch>>(r.detections));
    invariant = invariant && tr.bundle.encode(r) == v;
  }
  out.require(invariant, "patch order");
  out.detail << "PCA error " << recon << "; VLAD error " << vlad << "; weight-sum error " << weights
             << "; patch order invariance " << (invariant ? "exact" : "violated");
}

// ---------------------------------------------------------------- 10

void determinism(Outcome& out) {
  auto data = generate(harness::domain_spec(10, 0.15, 30));
  PipelineConfig cfg;
  cfg.objects = 30;
  cfg.topics = 3;
  cfg.seed = 10;
  cfg.folds = 3;
  const auto dir = std::filesystem::temp_directory_path() / "semscene_acceptance";
  std::filesystem::create_directories(dir);

  std::string bundles[2], metrics[2], predictions[2];
  for (int run = 0; run < 2; ++run) {
    const auto path = (dir / ("bundle" + std::to_string(run) + ".bin")).string();
    save_bundle(path, train_pipeline(data.source, cfg).bundle);
    bundles[run] = read_file(path);
    const auto rep = evaluate(load_bundle(path), data.target);
    metrics[run] = rep.metrics_csv() + rep.confusion_csv();
    predictions[run] = rep.predictions_csv();
  }
  out.require(bundles[0] == bundles[1], "bundle bytes");
  out.require(metrics[0] == metrics[1] && predictions[0] == predictions[1], "metrics bytes");

  const auto model = train_pipeline(data.source, cfg).bundle;
  const auto path = (dir / "roundtrip.bin").string();
  save_bundle(path, model);
  const auto loaded = load_bundle(path);
  bool identical = serialize_bundle(loaded) == serialize_bundle(model);
  for (const auto& r : data.target.records) {
    const auto x = model.encode(r), y = loaded.encode(r);
    identical = identical && x == y && predict(model.ensemble, x).scores == predict(loaded.ensemble, y).scores;
  }
  out.require(identical, "round trip");
  std::filesystem::remove_all(dir);
  out.detail << "bundle " << bundles[0].size() << " bytes identical across runs; metrics identical; round trip bit-exact";
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<void(Outcome&)>& fn) {
    Outcome out;
    try {
      fn(out);
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << "exception: " << e.what();
    }
    failed += !out.pass;
    std::cout << (out.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << out.detail.str();
    if (!out.failures.empty()) std::cout << " | failed: " << out.failures;
    std::cout << std::endl;
  };

  report(1, "occurrence model matches brute-force recount", occurrence_oracle);
  report(2, "posterior normalization and Bayes oracle", posterior_oracle);
  report(3, "discriminability and object selection", discriminability);
  report(4, "hard descriptor length", descriptor_length);

  double seconds = 0;
  std::vector<SeedRun> runs;
  std::string setup_error;
  try {
    runs = run_seeds(seconds);
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  auto with_runs = [&](auto fn) {
    return [&, fn](Outcome& out) {
      if (runs.empty()) throw std::runtime_error("synthetic harness failed: " + setup_error);
      fn(out);
    };
  };
  report(5, "quantization robustness under score shift",
         with_runs([&](Outcome& o) { quantization_robustness(o, runs, seconds); }));
  report(6, "semantic clustering gain", with_runs([&](Outcome& o) { clustering_gain(o, runs); }));
  report(7, "topic recovery", with_runs([&](Outcome& o) { clustering_recovery(o, runs); }));
  report(8, "SVM optimizer", svm_optimizer);
  report(9, "soft path", soft_path);
  report(10, "determinism and persistence", determinism);

  std::cout << (10 - failed) << "/10 criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}

#include "semscene/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "semscene/binary_io.hpp"
#include "semscene/error.hpp"
#include "semscene/parallel.hpp"
#include "semscene/random.hpp"
#include "semscene/synth.hpp"

namespace semscene {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("write failed for " + path);
}

std::string_view to_string(PriorChoice p) { return p == PriorChoice::Uniform ? "uniform" : "empirical"; }
std::string_view to_string(Encoder e) { return e == Encoder::Oom ? "oom" : "rawscore"; }
std::string_view to_string(Pooling p) { return p == Pooling::Average ? "average" : "max"; }

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------- config

std::size_t PipelineConfig::object_count() const {
  if (objects) return *objects;
  const bool hard = mode == DetectionMode::Hard;
  if (profile == "snapstore") return hard ? 140 : 300;
  if (profile == "mit67") return hard ? 200 : 500;
  throw argument_error("unknown profile '" + profile + "'");
}

std::vector<SgdConfig> PipelineConfig::sgd_grid() const {
  std::vector<SgdConfig> grid;
  for (double l : lambdas)
    for (double e : eta0s) grid.push_back({l, e, epochs, seed});
  if (grid.empty()) throw argument_error("empty SGD hyperparameter grid");
  for (const auto& g : grid) g.validate();
  return grid;
}

namespace {

double to_real(std::string_view key, std::string_view v) {
  double x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw argument_error("'" + std::string(key) + "' expects a number");
  return x;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw argument_error("'" + std::string(key) + "' expects a non-negative integer");
  return x;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw argument_error("'" + std::string(key) + "' expects true or false");
}

std::vector<double> to_reals(std::string_view key, std::string_view v) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    std::size_t comma = v.find(',', pos);
    if (comma == std::string_view::npos) comma = v.size();
    out.push_back(to_real(key, v.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

std::string join_reals(const std::vector<double>& v) {
  std::string s;
  for (double x : v) {
    if (!s.empty()) s += ',';
    s += format_real(x);
  }
  return s;
}

}  // namespace

void PipelineConfig::set(std::string_view key, std::string_view value) {
  if (key == "mode") mode = detection_mode_from_string(value);
  else if (key == "profile") {
    if (value != "snapstore" && value != "mit67") throw argument_error("unknown profile '" + std::string(value) + "'");
    profile = std::string(value);
  } else if (key == "theta_min") theta_min = to_real(key, value);
  else if (key == "theta_max") theta_max = to_real(key, value);
  else if (key == "theta_step") theta_step = to_real(key, value);
  else if (key == "prior") {
    if (value == "uniform") prior = PriorChoice::Uniform;
    else if (value == "empirical") prior = PriorChoice::Empirical;
    else throw argument_error("unknown prior '" + std::string(value) + "'");
  } else if (key == "fallback") fallback = fallback_rule_from_string(value);
  else if (key == "objects") objects = to_uint(key, value);
  else if (key == "aggregation") aggregation = aggregation_from_string(value);
  else if (key == "layout") {
    PyramidLayout::parse(value);
    layout = std::string(value);
  } else if (key == "pca_dim") pca_dim = to_uint(key, value);
  else if (key == "codebook_size") codebook_size = to_uint(key, value);
  else if (key == "soft_normalize") soft_normalize = to_bool(key, value);
  else if (key == "encoder") {
    if (value == "oom") encoder = Encoder::Oom;
    else if (value == "rawscore") encoder = Encoder::RawScore;
    else throw argument_error("unknown encoder '" + std::string(value) + "'");
  } else if (key == "topics") topics = to_uint(key, value);
  else if (key == "kmeans_max_iter") kmeans_max_iter = to_uint(key, value);
  else if (key == "kmeans_tol") kmeans_tol = to_real(key, value);
  else if (key == "lambdas") lambdas = to_reals(key, value);
  else if (key == "eta0s") eta0s = to_reals(key, value);
  else if (key == "epochs") epochs = to_uint(key, value);
  else if (key == "folds") folds = to_uint(key, value);
  else if (key == "global_cv") global_cv = to_bool(key, value);
  else if (key == "seed") seed = to_uint(key, value);
  else throw argument_error("unknown config key '" + std::string(key) + "'");
}

void PipelineConfig::load_file(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key=value in " + path);
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string PipelineConfig::to_text() const {
  std::ostringstream o;
  o << "mode=" << to_string(mode) << '\n'
    << "profile=" << profile << '\n'
    << "theta_min=" << format_real(theta_min) << '\n'
    << "theta_max=" << format_real(theta_max) << '\n'
    << "theta_step=" << format_real(theta_step) << '\n'
    << "prior=" << to_string(prior) << '\n'
    << "fallback=" << to_string(fallback) << '\n';
  if (objects) o << "objects=" << *objects << '\n';
  o << "aggregation=" << to_string(aggregation) << '\n'
    << "layout=" << layout << '\n'
    << "pca_dim=" << pca_dim << '\n'
    << "codebook_size=" << codebook_size << '\n'
    << "soft_normalize=" << (soft_normalize ? "true" : "false") << '\n'
    << "encoder=" << to_string(encoder) << '\n'
    << "topics=" << topics << '\n'
    << "kmeans_max_iter=" << kmeans_max_iter << '\n'
    << "kmeans_tol=" << format_real(kmeans_tol) << '\n'
    << "lambdas=" << join_reals(lambdas) << '\n'
    << "eta0s=" << join_reals(eta0s) << '\n'
    << "epochs=" << epochs << '\n'
    << "folds=" << folds << '\n'
    << "global_cv=" << (global_cv ? "true" : "false") << '\n'
    << "seed=" << seed << '\n';
  return o.str();
}

// ---------------------------------------------------------------- encoding

Vector ModelBundle::encode(const ImageRecord& record) const {
  if (config.encoder == Encoder::RawScore) return encode_rawscore_baseline(record, posterior.vocabulary.size(), layout);
  if (record.is_hard()) return encode_hard(record, posterior, selection, layout);
  if (!pca || !codebook) throw model_error("bundle has no PCA/codebook for soft records");
  return encode_soft(record, posterior, selection, *pca, *codebook, {config.soft_normalize});
}

void ModelBundle::check_compatible(const DatasetManifest& m) const {
  if (!(m.vocabulary == posterior.vocabulary)) throw compatibility_error("manifest vocabulary differs from the model");
  if (!(m.classes == posterior.classes)) throw compatibility_error("manifest classes differ from the model");
  if (m.mode != config.mode)
    throw compatibility_error("manifest is " + std::string(to_string(m.mode)) + ", model was trained on " +
                              std::string(to_string(config.mode)));
}

std::uint64_t selection_hash(const DiscriminantSelection& sel) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 1099511628211ULL;
    }
  };
  mix(sel.selected.size());
  for (auto o : sel.selected) mix(o);
  return h;
}

DescriptorSet encode_manifest(const ModelBundle& bundle, const DatasetManifest& m) {
  bundle.check_compatible(m);
  DescriptorSet d;
  d.layout = bundle.layout.to_string();
  d.selection_hash = selection_hash(bundle.selection);
  d.rows.resize(m.records.size());
  parallel_for(m.records.size(), [&](std::size_t i) { d.rows[i] = bundle.encode(m.records[i]); });
  for (const auto& r : m.records) {
    d.image_ids.push_back(r.image_id);
    d.labels.push_back(r.scene_class);
  }
  return d;
}

// ---------------------------------------------------------------- training

namespace {

class StageTimer {
 public:
  StageTimer(std::ostream* log, std::string name) : log_(log), name_(std::move(name)), start_(Clock::now()) {}
  ~StageTimer() {
    if (!log_) return;
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
    *log_ << "[stage] " << name_ << ": " << ms << " ms" << (detail_.empty() ? "" : " (" + detail_ + ")") << '\n';
  }
  void detail(std::string d) { detail_ = std::move(d); }

 private:
  using Clock = std::chrono::steady_clock;
  std::ostream* log_;
  std::string name_, detail_;
  Clock::time_point start_;
};

}  // namespace

TrainResult train_pipeline(const DatasetManifest& train, const PipelineConfig& config, std::ostream* log) {
  if (train.mode != config.mode)
    throw format_error("training manifest is " + std::string(to_string(train.mode)) + ", config expects " +
                       std::string(to_string(config.mode)));
  for (const auto& r : train.records)
    if (!r.scene_class) throw format_error("training record '" + r.image_id + "' has no class label");

  TrainResult out;
  ModelBundle& b = out.bundle;
  b.config = config;
  b.layout = PyramidLayout::parse(config.layout);

  {
    StageTimer t(log, "occurrence model");
    b.occurrence = build_occurrence_model(train, config.grid());
    t.detail(std::to_string(train.records.size()) + " images, " + std::to_string(config.grid().size()) + " thresholds");
  }
  {
    StageTimer t(log, "posterior model");
    const ClassPrior prior = config.prior == PriorChoice::Uniform ? ClassPrior::uniform(train.classes.size())
                                                                  : ClassPrior::empirical(train);
    b.posterior = build_posterior_model(b.occurrence, prior, config.fallback);
  }
  {
    StageTimer t(log, "object selection");
    b.selection = select_objects(b.posterior, config.object_count(), config.aggregation);
    t.detail(std::to_string(b.selection.selected.size()) + " of " + std::to_string(train.vocabulary.size()) + " objects");
  }

  if (config.mode == DetectionMode::Soft && config.encoder == Encoder::Oom) {
    StageTimer t(log, "pca + codebook");
    std::vector<Vector> samples;
    for (const auto& r : train.records)
      for (auto& f : flattened_patches(r, b.posterior, b.selection)) samples.push_back(std::move(f));
    b.pca = fit_pca(samples, config.pca_dim);
    std::vector<Vector> projected(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) { projected[i] = b.pca->project(samples[i]); });
    b.codebook = fit_codebook(projected, config.codebook_size, Rng::derive(config.seed, 11));
    t.detail(std::to_string(samples.size()) + " patches");
  }

  {
    StageTimer t(log, "encode");
    out.train_descriptors = encode_manifest(b, train);
    t.detail(std::to_string(out.train_descriptors.rows.size()) + " descriptors of dim " +
             std::to_string(out.train_descriptors.rows.empty() ? 0 : out.train_descriptors.rows.front().size()));
  }

  KMeansModel topics;
  {
    StageTimer t(log, "topics");
    topics = fit_topics(out.train_descriptors.rows, config.topics, Rng::derive(config.seed, 12),
                        config.kmeans_max_iter, config.kmeans_tol);
    t.detail(std::to_string(config.topics) + " topics, " + std::to_string(topics.iterations_run) + " iterations");
  }
  {
    StageTimer t(log, "ensemble");
    LabeledSet data{out.train_descriptors.rows, {}, train.classes.size()};
    for (const auto& l : out.train_descriptors.labels) data.y.push_back(*l);
    b.ensemble = train_ensemble(data, topics, {config.sgd_grid(), config.folds, config.global_cv});
    std::string counts;
    for (const auto& m : b.ensemble.meta) counts += (counts.empty() ? "" : "/") + std::to_string(m.samples);
    t.detail("samples per topic " + counts);
  }
  return out;
}

// ---------------------------------------------------------------- evaluation

EvalReport evaluate_descriptors(const TopicEnsemble& ens, const SceneClassSet& classes, const DescriptorSet& d,
                                Pooling pooling) {
  if (d.rows.empty()) throw argument_error("no records to evaluate");
  EvalReport rep;
  rep.class_names = classes.names();
  rep.image_ids = d.image_ids;
  rep.truth = d.labels;
  const std::size_t C = classes.size();
  rep.predictions.resize(d.rows.size());
  parallel_for(d.rows.size(), [&](std::size_t i) {
    rep.predictions[i] = pooling == Pooling::Average ? predict(ens, d.rows[i]) : predict_max_pool(ens, d.rows[i]);
  });
  rep.per_class_total.assign(C, 0);
  rep.per_class_correct.assign(C, 0);
  rep.confusion.assign(C, std::vector<std::size_t>(C, 0));
  bool any = false;
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    if (!d.labels[i]) continue;
    any = true;
    const std::size_t t = *d.labels[i], p = rep.predictions[i].label;
    ++rep.per_class_total[t];
    rep.per_class_correct[t] += t == p;
    ++rep.confusion[t][p];
  }
  if (any) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < C; ++c)
      if (rep.per_class_total[c] > 0) {
        sum += static_cast<double>(rep.per_class_correct[c]) / static_cast<double>(rep.per_class_total[c]);
        ++n;
      }
    rep.class_mean_accuracy = sum / static_cast<double>(n);
  }
  return rep;
}

EvalReport evaluate(const ModelBundle& bundle, const DatasetManifest& test, Pooling pooling) {
  if (test.records.empty()) throw argument_error("empty test manifest");
  return evaluate_descriptors(bundle.ensemble, bundle.posterior.classes, encode_manifest(bundle, test), pooling);
}

std::string EvalReport::predictions_csv() const {
  std::string s = "image_id,predicted_class";
  for (const auto& c : class_names) s += ",score_" + c;
  s += '\n';
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    s += image_ids[i] + ',' + class_names[predictions[i].label];
    for (double v : predictions[i].scores) s += ',' + format_real(v);
    s += '\n';
  }
  return s;
}

std::string EvalReport::metrics_csv() const {
  std::string s = "class,images,correct,accuracy\n";
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    s += class_names[c] + ',' + std::to_string(per_class_total[c]) + ',' + std::to_string(per_class_correct[c]) + ',';
    s += per_class_total[c] ? format_real(double(per_class_correct[c]) / double(per_class_total[c])) : "n/a";
    s += '\n';
  }
  s += "class_mean,,,";
  s += class_mean_accuracy ? format_real(*class_mean_accuracy) : "n/a";
  s += '\n';
  return s;
}

std::string EvalReport::confusion_csv() const {
  std::string s = "truth";
  for (const auto& c : class_names) s += ',' + c;
  s += '\n';
  for (std::size_t t = 0; t < class_names.size(); ++t) {
    s += class_names[t];
    for (std::size_t p = 0; p < class_names.size(); ++p) s += ',' + std::to_string(confusion[t][p]);
    s += '\n';
  }
  return s;
}

std::vector<AblationRow> run_ablation(const DatasetManifest& train, const DatasetManifest& test,
                                      const PipelineConfig& config, const std::vector<std::size_t>& object_counts,
                                      std::ostream* log) {
  std::vector<std::size_t> topic_counts{1};
  if (config.topics != 1) topic_counts.push_back(config.topics);
  std::vector<AblationRow> rows;
  for (std::size_t r : object_counts) {
    for (std::size_t d : topic_counts) {
      PipelineConfig cfg = config;
      cfg.objects = r;
      cfg.topics = d;
      if (log) *log << "[ablate] objects=" << r << " topics=" << d << '\n';
      TrainResult tr = train_pipeline(train, cfg, nullptr);
      const DescriptorSet test_desc = encode_manifest(tr.bundle, test);
      for (Pooling p : {Pooling::Average, Pooling::Max}) {
        AblationRow row{r, d, p, 0, 0};
        row.train_accuracy =
            evaluate_descriptors(tr.bundle.ensemble, train.classes, tr.train_descriptors, p).class_mean_accuracy.value_or(0);
        row.test_accuracy =
            evaluate_descriptors(tr.bundle.ensemble, train.classes, test_desc, p).class_mean_accuracy.value_or(0);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string s = "objects,topics,pooling,train_accuracy,test_accuracy\n";
  for (const auto& r : rows)
    s += std::to_string(r.objects) + ',' + std::to_string(r.topics) + ',' + std::string(to_string(r.pooling)) + ',' +
         format_real(r.train_accuracy) + ',' + format_real(r.test_accuracy) + '\n';
  return s;
}

}  // namespace semscene

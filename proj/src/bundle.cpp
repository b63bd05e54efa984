#include <sstream>

#include "semscene/binary_io.hpp"
#include "semscene/error.hpp"
#include "semscene/pipeline.hpp"

namespace semscene {

namespace {

constexpr std::uint32_t kOomVersion = 1;
constexpr std::uint32_t kDescriptorVersion = 1;

void put_names(BinaryWriter& w, const NameIndex& n) {
  w.u64(n.size());
  for (const auto& s : n.names()) w.str(s);
}

NameIndex get_names(BinaryReader& r, std::string_view what) {
  std::vector<std::string> names(r.count(1 << 24));
  for (auto& s : names) s = r.str();
  return NameIndex(std::move(names), what);
}

void put_grid(BinaryWriter& w, const ThresholdGrid& g) {
  w.f64(g.theta_min());
  w.f64(g.theta_max());
  w.f64(g.step());
}

ThresholdGrid get_grid(BinaryReader& r) {
  const double a = r.f64(), b = r.f64(), s = r.f64();
  return {a, b, s};
}

void put_tensor(BinaryWriter& w, const Tensor3& t) {
  w.u64(t.objects);
  w.u64(t.classes);
  w.u64(t.thresholds);
  w.f64s(t.data);
}

Tensor3 get_tensor(BinaryReader& r) {
  Tensor3 t;
  t.objects = r.count();
  t.classes = r.count();
  t.thresholds = r.count();
  t.data = r.f64s();
  if (t.data.size() != t.objects * t.classes * t.thresholds) throw format_error("corrupt artifact: tensor size");
  return t;
}

void put_vectors(BinaryWriter& w, const std::vector<Vector>& vs) {
  w.u64(vs.size());
  for (const auto& v : vs) w.f64s(v);
}

std::vector<Vector> get_vectors(BinaryReader& r) {
  std::vector<Vector> vs(r.count());
  for (auto& v : vs) v = r.f64s();
  return vs;
}

void put_indices(BinaryWriter& w, const std::vector<std::size_t>& v) {
  w.u64(v.size());
  for (auto x : v) w.u64(x);
}

std::vector<std::size_t> get_indices(BinaryReader& r) {
  std::vector<std::size_t> v(r.count());
  for (auto& x : v) x = r.count();
  return v;
}

// Writes grid, names, occurrence tensor and posterior model.
void put_models(BinaryWriter& w, const OccurrenceModel& occ, const PosteriorModel& post) {
  put_grid(w, occ.grid);
  put_names(w, occ.vocabulary);
  put_names(w, occ.classes);
  put_tensor(w, occ.probs);
  put_tensor(w, post.posteriors);
  w.f64s(post.prior.weights);
  w.u8(post.fallback == FallbackRule::Prior ? 0 : 1);
  w.u64(post.fallback_mask.size());
  for (char c : post.fallback_mask) w.u8(static_cast<std::uint8_t>(c));
}

void get_models(BinaryReader& r, OccurrenceModel& occ, PosteriorModel& post) {
  occ.grid = get_grid(r);
  occ.vocabulary = get_names(r, "object name");
  occ.classes = get_names(r, "class name");
  occ.probs = get_tensor(r);
  post.grid = occ.grid;
  post.vocabulary = occ.vocabulary;
  post.classes = occ.classes;
  post.posteriors = get_tensor(r);
  post.prior.weights = r.f64s();
  post.fallback = r.u8() == 0 ? FallbackRule::Prior : FallbackRule::LastValid;
  post.fallback_mask.resize(r.count());
  for (auto& c : post.fallback_mask) c = static_cast<char>(r.u8());
  const std::size_t O = occ.vocabulary.size(), C = occ.classes.size(), T = occ.grid.size();
  for (const Tensor3* t : {&occ.probs, &post.posteriors})
    if (t->objects != O || t->classes != C || t->thresholds != T) throw format_error("corrupt artifact: model shape");
  if (post.prior.weights.size() != C || post.fallback_mask.size() != O * T)
    throw format_error("corrupt artifact: model shape");
}

void put_classifier(BinaryWriter& w, const LinearClassifier& c) {
  w.f64s(c.weights);
  w.f64(c.bias);
}

LinearClassifier get_classifier(BinaryReader& r) {
  LinearClassifier c;
  c.weights = r.f64s();
  c.bias = r.f64();
  return c;
}

void put_sgd(BinaryWriter& w, const SgdConfig& s) {
  w.f64(s.lambda);
  w.f64(s.eta0);
  w.u64(s.epochs);
  w.u64(s.seed);
}

SgdConfig get_sgd(BinaryReader& r) {
  SgdConfig s;
  s.lambda = r.f64();
  s.eta0 = r.f64();
  s.epochs = r.count();
  s.seed = r.u64();
  return s;
}

}  // namespace

std::string serialize_bundle(const ModelBundle& b) {
  BinaryWriter w;
  w.header("BNDL", ModelBundle::kVersion);
  w.str(b.config.to_text());
  put_models(w, b.occurrence, b.posterior);

  w.f64s(b.selection.scores);
  put_indices(w, b.selection.selected);
  w.u8(b.selection.aggregation == Aggregation::Max ? 0 : 1);
  w.str(b.layout.to_string());

  w.u8(b.pca ? 1 : 0);
  if (b.pca) {
    w.u64(b.pca->input_dim);
    w.u64(b.pca->output_dim);
    w.f64s(b.pca->mean);
    w.f64s(b.pca->basis);
    w.f64s(b.pca->eigenvalues);
  }
  w.u8(b.codebook ? 1 : 0);
  if (b.codebook) {
    put_vectors(w, b.codebook->centers);
    w.f64(b.codebook->sigma);
  }

  const auto& km = b.ensemble.topics;
  put_vectors(w, km.centroids);
  w.f64(km.inertia);
  w.u64(km.seed);
  w.u64(km.iterations_run);
  w.f64s(km.inertia_history);
  w.u64(b.ensemble.classes);
  w.u64(b.ensemble.classifiers.size());
  for (const auto& c : b.ensemble.classifiers) put_classifier(w, c);
  w.u64(b.ensemble.meta.size());
  for (const auto& m : b.ensemble.meta) {
    w.u64(m.samples);
    put_sgd(w, m.config);
    w.u8(m.cross_validated ? 1 : 0);
    w.u64(m.degenerate.size());
    for (char d : m.degenerate) w.u8(static_cast<std::uint8_t>(d));
  }
  return w.bytes();
}

ModelBundle deserialize_bundle(const std::string& bytes) {
  BinaryReader r(bytes);
  const auto version = r.header("BNDL");
  if (version != ModelBundle::kVersion)
    throw format_error("bundle format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(ModelBundle::kVersion) + ")");
  ModelBundle b;
  {
    std::istringstream cfg(r.str());
    std::string line;
    while (std::getline(cfg, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) b.config.set(line.substr(0, eq), line.substr(eq + 1));
    }
  }
  get_models(r, b.occurrence, b.posterior);

  b.selection.scores = r.f64s();
  b.selection.selected = get_indices(r);
  b.selection.aggregation = r.u8() == 0 ? Aggregation::Max : Aggregation::Mean;
  b.layout = PyramidLayout::parse(r.str());

  if (r.u8()) {
    PcaTransform p;
    p.input_dim = r.count();
    p.output_dim = r.count();
    p.mean = r.f64s();
    p.basis = r.f64s();
    p.eigenvalues = r.f64s();
    if (p.mean.size() != p.input_dim || p.basis.size() != p.input_dim * p.output_dim)
      throw format_error("corrupt bundle: PCA shape");
    b.pca = std::move(p);
  }
  if (r.u8()) {
    VladCodebook cb;
    cb.centers = get_vectors(r);
    cb.sigma = r.f64();
    b.codebook = std::move(cb);
  }

  auto& km = b.ensemble.topics;
  km.centroids = get_vectors(r);
  km.inertia = r.f64();
  km.seed = r.u64();
  km.iterations_run = r.count();
  km.inertia_history = r.f64s();
  b.ensemble.classes = r.count();
  b.ensemble.classifiers.resize(r.count());
  for (auto& c : b.ensemble.classifiers) c = get_classifier(r);
  b.ensemble.meta.resize(r.count());
  for (auto& m : b.ensemble.meta) {
    m.samples = r.count();
    m.config = get_sgd(r);
    m.cross_validated = r.u8() != 0;
    m.degenerate.resize(r.count());
    for (auto& d : m.degenerate) d = static_cast<char>(r.u8());
  }
  if (!r.done()) throw format_error("trailing bytes in bundle");

  const std::size_t C = b.posterior.classes.size();
  if (b.ensemble.classes != C || b.ensemble.classifiers.size() != C * km.centroids.size() ||
      b.ensemble.meta.size() != km.centroids.size())
    throw format_error("corrupt bundle: ensemble shape");
  for (const auto& c : b.ensemble.classifiers)
    if (c.weights.size() != km.dim()) throw format_error("corrupt bundle: classifier dimension");
  for (auto o : b.selection.selected)
    if (o >= b.posterior.vocabulary.size()) throw format_error("corrupt bundle: selection index");
  return b;
}

void save_bundle(const std::string& path, const ModelBundle& b) { write_file(path, serialize_bundle(b)); }
ModelBundle load_bundle(const std::string& path) { return deserialize_bundle(read_file(path)); }

std::string serialize_oom(const OccurrenceModel& occ, const PosteriorModel& post) {
  BinaryWriter w;
  w.header("OOMM", kOomVersion);
  put_models(w, occ, post);
  return w.bytes();
}

OomArtifact deserialize_oom(const std::string& bytes) {
  BinaryReader r(bytes);
  const auto version = r.header("OOMM");
  if (version != kOomVersion) throw format_error("occurrence model version " + std::to_string(version) + " is not supported");
  OomArtifact a;
  get_models(r, a.occurrence, a.posterior);
  if (!r.done()) throw format_error("trailing bytes in occurrence model");
  return a;
}

std::string serialize_descriptors(const DescriptorSet& d) {
  BinaryWriter w;
  w.header("DESC", kDescriptorVersion);
  const std::size_t dim = d.rows.empty() ? 0 : d.rows.front().size();
  w.u64(d.rows.size());
  w.u64(dim);
  w.str(d.layout);
  w.u64(d.selection_hash);
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    if (d.rows[i].size() != dim) throw dimension_error("descriptor rows differ in length");
    w.str(d.image_ids[i]);
    w.i64(d.labels[i] ? static_cast<std::int64_t>(*d.labels[i]) : -1);
    for (double x : d.rows[i]) w.f64(x);
  }
  return w.bytes();
}

DescriptorSet deserialize_descriptors(const std::string& bytes) {
  BinaryReader r(bytes);
  const auto version = r.header("DESC");
  if (version != kDescriptorVersion) throw format_error("descriptor file version " + std::to_string(version) + " is not supported");
  DescriptorSet d;
  const std::size_t n = r.count(), dim = r.count();
  d.layout = r.str();
  d.selection_hash = r.u64();
  for (std::size_t i = 0; i < n; ++i) {
    d.image_ids.push_back(r.str());
    const auto label = r.i64();
    d.labels.push_back(label < 0 ? std::nullopt : std::optional<std::size_t>(static_cast<std::size_t>(label)));
    Vector row(dim);
    for (auto& x : row) x = r.f64();
    d.rows.push_back(std::move(row));
  }
  if (!r.done()) throw format_error("trailing bytes in descriptor file");
  return d;
}

std::string descriptors_csv(const DescriptorSet& d) {
  std::string s = "image_id,label";
  const std::size_t dim = d.rows.empty() ? 0 : d.rows.front().size();
  for (std::size_t j = 0; j < dim; ++j) s += ",d" + std::to_string(j);
  s += '\n';
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    s += d.image_ids[i] + ',' + (d.labels[i] ? std::to_string(*d.labels[i]) : std::string("?"));
    for (double x : d.rows[i]) s += ',' + format_real(x);
    s += '\n';
  }
  return s;
}

}  // namespace semscene

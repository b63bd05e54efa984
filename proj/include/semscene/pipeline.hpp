#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semscene/descriptor_hard.hpp"
#include "semscene/descriptor_soft.hpp"
#include "semscene/ensemble.hpp"
#include "semscene/ingest.hpp"
#include "semscene/occurrence.hpp"
#include "semscene/topics.hpp"

namespace semscene {

enum class PriorChoice { Uniform, Empirical };
enum class Encoder { Oom, RawScore };
enum class Pooling { Average, Max };

std::string_view to_string(PriorChoice p);
std::string_view to_string(Encoder e);
std::string_view to_string(Pooling p);

struct PipelineConfig {
  DetectionMode mode = DetectionMode::Hard;
  std::string profile = "snapstore";  // snapstore: R=140 hard / 300 soft; mit67: 200 / 500
  double theta_min = 0.0, theta_max = 1.0, theta_step = 0.05;
  PriorChoice prior = PriorChoice::Uniform;
  FallbackRule fallback = FallbackRule::Prior;
  std::optional<std::size_t> objects;  // R; profile default when unset
  Aggregation aggregation = Aggregation::Max;
  std::string layout = "1x1,2x2,3x1";
  std::size_t pca_dim = 500;
  std::size_t codebook_size = 100;
  bool soft_normalize = true;
  Encoder encoder = Encoder::Oom;
  std::size_t topics = 5;
  std::size_t kmeans_max_iter = 300;
  double kmeans_tol = 1e-6;
  std::vector<double> lambdas{1e-5, 1e-4, 1e-3};
  std::vector<double> eta0s{0.1, 1.0};
  std::size_t epochs = 30;
  std::size_t folds = 5;
  bool global_cv = false;
  std::uint64_t seed = 0;

  std::size_t object_count() const;
  ThresholdGrid grid() const { return {theta_min, theta_max, theta_step}; }
  std::vector<SgdConfig> sgd_grid() const;

  // key=value setting; throws an argument error on unknown keys or values.
  void set(std::string_view key, std::string_view value);
  // Flat key=value file, '#' comments.
  void load_file(const std::string& path);
  std::string to_text() const;
};

struct ModelBundle {
  static constexpr std::uint32_t kVersion = 1;

  PipelineConfig config;
  OccurrenceModel occurrence;
  PosteriorModel posterior;
  DiscriminantSelection selection;
  PyramidLayout layout;
  std::optional<PcaTransform> pca;
  std::optional<VladCodebook> codebook;
  TopicEnsemble ensemble;

  Vector encode(const ImageRecord& record) const;
  void check_compatible(const DatasetManifest& m) const;
};

std::string serialize_bundle(const ModelBundle& b);
ModelBundle deserialize_bundle(const std::string& bytes);
void save_bundle(const std::string& path, const ModelBundle& b);
ModelBundle load_bundle(const std::string& path);

// Standalone occurrence/posterior artifact written by build-oom.
struct OomArtifact {
  OccurrenceModel occurrence;
  PosteriorModel posterior;
};
std::string serialize_oom(const OccurrenceModel& occ, const PosteriorModel& post);
OomArtifact deserialize_oom(const std::string& bytes);

struct DescriptorSet {
  std::vector<std::string> image_ids;
  std::vector<std::optional<std::size_t>> labels;
  std::vector<Vector> rows;
  std::string layout;
  std::uint64_t selection_hash = 0;
};

std::uint64_t selection_hash(const DiscriminantSelection& sel);
std::string serialize_descriptors(const DescriptorSet& d);
DescriptorSet deserialize_descriptors(const std::string& bytes);
std::string descriptors_csv(const DescriptorSet& d);

// Shortest round-trip decimal form.
std::string format_real(double v);

struct TrainResult {
  ModelBundle bundle;
  DescriptorSet train_descriptors;
};

// occurrence -> posterior -> selection -> encode -> (PCA, codebook) ->
// topics -> ensemble. Stage timings go to `log` when given.
TrainResult train_pipeline(const DatasetManifest& train, const PipelineConfig& config, std::ostream* log = nullptr);

DescriptorSet encode_manifest(const ModelBundle& bundle, const DatasetManifest& m);

struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<std::string> image_ids;
  std::vector<std::optional<std::size_t>> truth;
  std::vector<Prediction> predictions;
  std::vector<std::size_t> per_class_total, per_class_correct;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
  std::optional<double> class_mean_accuracy;       // empty when no record is labeled

  std::string predictions_csv() const;
  std::string metrics_csv() const;
  std::string confusion_csv() const;
};

EvalReport evaluate(const ModelBundle& bundle, const DatasetManifest& test, Pooling pooling = Pooling::Average);
EvalReport evaluate_descriptors(const TopicEnsemble& ens, const SceneClassSet& classes, const DescriptorSet& d,
                                Pooling pooling = Pooling::Average);

struct AblationRow {
  std::size_t objects = 0;
  std::size_t topics = 0;
  Pooling pooling = Pooling::Average;
  double train_accuracy = 0;
  double test_accuracy = 0;
};

std::vector<AblationRow> run_ablation(const DatasetManifest& train, const DatasetManifest& test,
                                      const PipelineConfig& config, const std::vector<std::size_t>& object_counts,
                                      std::ostream* log = nullptr);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace semscene

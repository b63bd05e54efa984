#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "semscene/descriptor_hard.hpp"
#include "semscene/ingest.hpp"

namespace semscene {

struct DomainShift {
  double score_offset = 0.0;
  double score_scale = 1.0;
  double dropout = 0.0;  // probability of deleting a target-domain detection

  void validate() const;
};

// Detection model for one object: how likely it is to be detected and the
// score distribution of a true detection.
struct ObjectScoreModel {
  double probability = 0;
  double mean = 0.5;
  double spread = 0.1;
};

struct SynthSpec {
  std::size_t n_classes = 6;
  std::size_t n_objects = 40;
  std::size_t n_topics_true = 3;
  std::size_t images_per_class = 100;         // source domain
  std::size_t target_images_per_class = 100;
  DetectionMode mode = DetectionMode::Hard;

  // [topic][class][object]
  std::vector<std::vector<std::vector<ObjectScoreModel>>> score_model;
  // Probability that a class's image falls in each hidden topic, [class][topic].
  std::vector<std::vector<double>> topic_given_class;

  double false_positive_rate = 0.1;  // per absent object per image
  double false_positive_mean = 0.25;
  double false_positive_spread = 0.08;
  double extra_detection_rate = 0.3;  // chance of a second box for a present object
  std::size_t patches_per_image = 8;  // soft mode

  DomainShift shift;
  std::uint64_t seed = 0;

  void validate() const;
};

// Parameters of the planted structure used to fill a SynthSpec.
struct PlantedStructure {
  std::size_t n_classes = 6;
  std::size_t n_objects = 40;
  std::size_t n_topics = 3;
  std::size_t topic_objects = 8;      // per topic, shared by the topic's classes
  std::size_t signature_objects = 2;  // per class
  double topic_purity = 0.6;          // chance an image sits in its class's home topic
  double p_topic = 0.8;
  double p_signature = 0.7;
  double p_common = 0.4;
  double p_stray = 0.05;  // planted objects outside their topic or class
  double score_mean_lo = 0.55, score_mean_hi = 0.8;
  double score_spread = 0.08;
};

// Each class has a home topic (class c -> topic c mod n_topics) and its
// images fall there with probability topic_purity, otherwise uniformly in
// another topic, so topics span several classes. Topic objects co-occur across all classes of a topic;
// signature objects mark a single class; the rest are common clutter.
SynthSpec planted_spec(const PlantedStructure& s, std::uint64_t seed);

struct SynthData {
  DatasetManifest source, target;
  std::vector<std::size_t> source_topics, target_topics;  // hidden labels
};

SynthData generate(const SynthSpec& spec);

// Applies score' = scale * score + offset and dropout to a copy of the
// manifest. Scores are not clamped.
DatasetManifest apply_shift(const DatasetManifest& m, const DomainShift& shift, std::uint64_t seed);

// Per-region, per-object maximum raw score. Soft patches carry no location,
// so every region sees every patch.
std::vector<double> encode_rawscore_baseline(const ImageRecord& record, std::size_t vocab_size,
                                             const PyramidLayout& layout = {});

}  // namespace semscene

#include "semscene/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "semscene/error.hpp"
#include "semscene/random.hpp"

namespace semscene {

void DomainShift::validate() const {
  if (!(score_scale > 0)) throw argument_error("domain shift scale must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw argument_error("dropout must lie in [0, 1)");
  if (!std::isfinite(score_offset)) throw argument_error("domain shift offset must be finite");
}

void SynthSpec::validate() const {
  if (n_classes == 0 || n_objects == 0 || n_topics_true == 0) throw argument_error("synthetic spec with zero classes, objects or topics");
  if (images_per_class == 0) throw argument_error("synthetic spec needs images per class");
  if (score_model.size() != n_topics_true) throw dimension_error("score model topic axis mismatch");
  for (const auto& per_topic : score_model) {
    if (per_topic.size() != n_classes) throw dimension_error("score model class axis mismatch");
    for (const auto& per_class : per_topic) {
      if (per_class.size() != n_objects) throw dimension_error("score model object axis mismatch");
      for (const auto& m : per_class)
        if (!(m.probability >= 0 && m.probability <= 1) || !(m.spread > 0))
          throw argument_error("score model needs probabilities in [0,1] and positive spreads");
    }
  }
  if (topic_given_class.size() != n_classes) throw dimension_error("topic distribution class axis mismatch");
  for (const auto& row : topic_given_class) {
    if (row.size() != n_topics_true) throw dimension_error("topic distribution topic axis mismatch");
    double s = 0;
    for (double p : row) {
      if (!(p >= 0)) throw argument_error("negative topic probability");
      s += p;
    }
    if (std::abs(s - 1) > 1e-9) throw argument_error("topic probabilities must sum to 1");
  }
  for (double p : {false_positive_rate, extra_detection_rate})
    if (!(p >= 0 && p <= 1)) throw argument_error("rates must lie in [0, 1]");
  if (!(false_positive_spread > 0)) throw argument_error("false-positive spread must be positive");
  if (mode == DetectionMode::Soft && patches_per_image == 0) throw argument_error("soft mode needs patches");
  shift.validate();
}

SynthSpec planted_spec(const PlantedStructure& s, std::uint64_t seed) {
  if (s.n_classes == 0 || s.n_objects == 0 || s.n_topics == 0) throw argument_error("planted structure with zero classes, objects or topics");
  const std::size_t planted = s.n_topics * s.topic_objects + s.n_classes * s.signature_objects;
  if (planted > s.n_objects) throw argument_error("planted objects exceed the vocabulary");

  Rng rng(Rng::derive(seed, 0xC0FFEE));
  std::vector<double> means(s.n_objects);
  for (auto& m : means) m = rng.uniform(s.score_mean_lo, s.score_mean_hi);

  SynthSpec spec;
  spec.n_classes = s.n_classes;
  spec.n_objects = s.n_objects;
  spec.n_topics_true = s.n_topics;
  spec.seed = seed;
  spec.score_model.assign(s.n_topics, std::vector<std::vector<ObjectScoreModel>>(
                                          s.n_classes, std::vector<ObjectScoreModel>(s.n_objects)));
  const std::size_t sig_begin = s.n_topics * s.topic_objects;
  for (std::size_t t = 0; t < s.n_topics; ++t)
    for (std::size_t c = 0; c < s.n_classes; ++c)
      for (std::size_t o = 0; o < s.n_objects; ++o) {
        double p = s.p_common;
        if (o < sig_begin) p = o / s.topic_objects == t ? s.p_topic : s.p_stray;
        else if (o < planted) p = (o - sig_begin) / s.signature_objects == c ? s.p_signature : s.p_stray;
        spec.score_model[t][c][o] = {p, means[o], s.score_spread};
      }

  spec.topic_given_class.assign(s.n_classes, std::vector<double>(s.n_topics, 0.0));
  for (std::size_t c = 0; c < s.n_classes; ++c) {
    const std::size_t home = c % s.n_topics;
    for (std::size_t t = 0; t < s.n_topics; ++t)
      spec.topic_given_class[c][t] =
          s.n_topics == 1 ? 1.0 : (t == home ? s.topic_purity : (1 - s.topic_purity) / double(s.n_topics - 1));
  }
  return spec;
}

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

Box random_box(Rng& rng) {
  const double w = rng.uniform(0.1, 0.4), h = rng.uniform(0.1, 0.4);
  const double x0 = rng.uniform(0.0, 1.0 - w), y0 = rng.uniform(0.0, 1.0 - h);
  return {x0, y0, x0 + w, y0 + h};
}

std::size_t draw_topic(const std::vector<double>& dist, Rng& rng) {
  double r = rng.uniform();
  for (std::size_t t = 0; t + 1 < dist.size(); ++t) {
    if (r < dist[t]) return t;
    r -= dist[t];
  }
  return dist.size() - 1;
}

ImageRecord draw_image(const SynthSpec& spec, std::size_t cls, std::size_t topic, Rng& rng) {
  ImageRecord rec;
  rec.scene_class = cls;
  const auto& model = spec.score_model[topic][cls];
  if (spec.mode == DetectionMode::Hard) {
    std::vector<HardDetection> dets;
    for (std::size_t o = 0; o < spec.n_objects; ++o) {
      if (rng.bernoulli(model[o].probability)) {
        const std::size_t copies = rng.bernoulli(spec.extra_detection_rate) ? 2 : 1;
        for (std::size_t k = 0; k < copies; ++k)
          dets.push_back({o, clamp01(rng.normal(model[o].mean, model[o].spread)), random_box(rng)});
      } else if (rng.bernoulli(spec.false_positive_rate)) {
        dets.push_back({o, clamp01(rng.normal(spec.false_positive_mean, spec.false_positive_spread)), random_box(rng)});
      }
    }
    rec.detections = std::move(dets);
  } else {
    std::vector<SoftPatch> patches(spec.patches_per_image);
    for (std::size_t k = 0; k < patches.size(); ++k) {
      patches[k].patch_id = static_cast<long>(k);
      patches[k].scores.resize(spec.n_objects);
    }
    for (std::size_t o = 0; o < spec.n_objects; ++o) {
      const bool present = rng.bernoulli(model[o].probability);
      // A present object is seen well in one patch and weakly elsewhere.
      const std::size_t home = rng.index(patches.size());
      for (std::size_t k = 0; k < patches.size(); ++k) {
        const double score = present && k == home
                                 ? rng.normal(model[o].mean, model[o].spread)
                                 : rng.normal(spec.false_positive_mean, spec.false_positive_spread);
        patches[k].scores[o] = clamp01(score);
      }
    }
    rec.detections = std::move(patches);
  }
  return rec;
}

DatasetManifest empty_manifest(const SynthSpec& spec, std::string split) {
  std::vector<std::string> objects, classes;
  for (std::size_t o = 0; o < spec.n_objects; ++o) objects.push_back("obj" + std::to_string(o));
  for (std::size_t c = 0; c < spec.n_classes; ++c) classes.push_back("class" + std::to_string(c));
  DatasetManifest m;
  m.vocabulary = ObjectVocabulary(objects, "object name");
  m.classes = SceneClassSet(classes, "class name");
  m.mode = spec.mode;
  m.split_tag = std::move(split);
  return m;
}

void fill_domain(const SynthSpec& spec, std::size_t per_class, std::uint64_t stream, const std::string& tag,
                 DatasetManifest& m, std::vector<std::size_t>& topics) {
  std::size_t serial = 0;
  for (std::size_t c = 0; c < spec.n_classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i, ++serial) {
      Rng rng(Rng::derive(Rng::derive(spec.seed, stream), serial));
      const std::size_t topic = draw_topic(spec.topic_given_class[c], rng);
      ImageRecord rec = draw_image(spec, c, topic, rng);
      char id[32];
      std::snprintf(id, sizeof id, "%s%06zu", tag.c_str(), serial);
      rec.image_id = id;
      rec.domain_tag = tag;
      m.records.push_back(std::move(rec));
      topics.push_back(topic);
    }
}

}  // namespace

DatasetManifest apply_shift(const DatasetManifest& m, const DomainShift& shift, std::uint64_t seed) {
  shift.validate();
  DatasetManifest out = m;
  for (std::size_t r = 0; r < out.records.size(); ++r) {
    Rng rng(Rng::derive(seed, r));
    auto& rec = out.records[r];
    if (rec.is_hard()) {
      auto& dets = std::get<0>(rec.detections);
      std::vector<HardDetection> kept;
      for (auto d : dets) {
        if (shift.dropout > 0 && rng.bernoulli(shift.dropout)) continue;
        d.score = shift.score_scale * d.score + shift.score_offset;
        kept.push_back(d);
      }
      dets = std::move(kept);
    } else {
      auto& patches = std::get<1>(rec.detections);
      std::vector<SoftPatch> kept;
      for (auto p : patches) {
        if (shift.dropout > 0 && rng.bernoulli(shift.dropout)) continue;
        for (auto& s : p.scores) s = shift.score_scale * s + shift.score_offset;
        kept.push_back(std::move(p));
      }
      // Keep one patch so the bag is never empty.
      if (kept.empty() && !patches.empty()) {
        kept.push_back(patches.front());
        for (auto& s : kept.back().scores) s = shift.score_scale * s + shift.score_offset;
      }
      patches = std::move(kept);
    }
  }
  return out;
}

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  SynthData data;
  data.source = empty_manifest(spec, "source");
  data.target = empty_manifest(spec, "target");
  fill_domain(spec, spec.images_per_class, 1, "source", data.source, data.source_topics);
  DatasetManifest unshifted = empty_manifest(spec, "target");
  fill_domain(spec, spec.target_images_per_class, 2, "target", unshifted, data.target_topics);
  data.target = apply_shift(unshifted, spec.shift, Rng::derive(spec.seed, 3));
  return data;
}

std::vector<double> encode_rawscore_baseline(const ImageRecord& record, std::size_t vocab_size,
                                             const PyramidLayout& layout) {
  std::vector<double> out(layout.region_count() * vocab_size, 0.0);
  std::vector<char> seen(out.size(), 0);
  auto put = [&](std::size_t region, std::size_t o, double s) {
    const std::size_t k = region * vocab_size + o;
    if (!seen[k] || s > out[k]) out[k] = s;
    seen[k] = 1;
  };
  if (record.is_hard()) {
    for (const auto& d : record.hard()) {
      if (d.object_index >= vocab_size) throw dimension_error("detection object index outside the vocabulary");
      for (std::size_t l = 0; l < layout.levels().size(); ++l)
        put(layout.level_offset(l) + assign_region(d.box, layout.levels()[l]), d.object_index, d.score);
    }
  } else {
    for (const auto& p : record.soft()) {
      if (p.scores.size() != vocab_size) throw dimension_error("patch score vector does not match the vocabulary");
      for (std::size_t region = 0; region < layout.region_count(); ++region)
        for (std::size_t o = 0; o < vocab_size; ++o) put(region, o, p.scores[o]);
    }
  }
  return out;
}

}  // namespace semscene

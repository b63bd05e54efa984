// Batch driver for the semantic scene pipeline.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "semscene/binary_io.hpp"
#include "semscene/error.hpp"
#include "semscene/pipeline.hpp"
#include "semscene/synth.hpp"

using namespace semscene;
namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
  std::string mode;
  std::size_t objects = 0;
  std::size_t topics = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool global_cv = false;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key=value config file");
    app->add_option("--set", sets, "override a config key (key=value), repeatable");
    app->add_option("--mode", mode, "hard or soft")->check(CLI::IsMember({"hard", "soft"}));
    app->add_option("--objects", objects, "number of discriminant objects R");
    app->add_option("--topics", topics, "number of latent topics D");
    app->add_option("--seed", seed, "master seed")->each([this](const std::string&) { seed_given = true; });
    app->add_flag("--global-cv", global_cv, "cross-validate once on all data instead of per topic");
  }

  PipelineConfig build() const {
    PipelineConfig cfg;
    if (!file.empty()) cfg.load_file(file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw argument_error("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!mode.empty()) cfg.set("mode", mode);
    if (objects) cfg.objects = objects;
    if (topics) cfg.topics = topics;
    if (seed_given) cfg.seed = seed;
    if (global_cv) cfg.global_cv = true;
    return cfg;
  }
};

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text;
  else write_file(path, text);
}

Pooling pooling_from(const std::string& s) { return s == "max" ? Pooling::Max : Pooling::Average; }

OomArtifact load_models(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 12 && bytes.compare(8, 4, "BNDL") == 0) {
    ModelBundle b = deserialize_bundle(bytes);
    return {std::move(b.occurrence), std::move(b.posterior)};
  }
  return deserialize_oom(bytes);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic scene recognition from object detection scores"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate planted source/target manifests");
  std::string synth_dir = ".";
  PlantedStructure planted;
  std::size_t synth_images = 100, synth_target_images = 100, synth_patches = 8;
  std::uint64_t synth_seed = 0;
  std::string synth_mode = "hard";
  DomainShift shift;
  synth->add_option("--out-dir", synth_dir, "output directory");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--classes", planted.n_classes);
  synth->add_option("--objects", planted.n_objects);
  synth->add_option("--topics", planted.n_topics);
  synth->add_option("--topic-objects", planted.topic_objects);
  synth->add_option("--signature-objects", planted.signature_objects);
  synth->add_option("--purity", planted.topic_purity);
  synth->add_option("--images", synth_images, "source images per class");
  synth->add_option("--target-images", synth_target_images, "target images per class");
  synth->add_option("--offset", shift.score_offset, "target score offset");
  synth->add_option("--scale", shift.score_scale, "target score scale");
  synth->add_option("--dropout", shift.dropout, "target detection dropout");
  synth->add_option("--mode", synth_mode)->check(CLI::IsMember({"hard", "soft"}));
  synth->add_option("--patches", synth_patches, "patches per image in soft mode");

  // build-oom
  auto* build = app.add_subcommand("build-oom", "build occurrence and posterior models");
  std::string build_train, build_out = "oom.bin";
  ConfigArgs build_cfg;
  build->add_option("--train", build_train)->required();
  build->add_option("--out", build_out);
  build_cfg.attach(build);

  // inspect
  auto* inspect = app.add_subcommand("inspect", "posterior curves of one object as CSV");
  std::string inspect_model, inspect_object, inspect_out;
  bool inspect_occurrence = false;
  inspect->add_option("--model", inspect_model, "occurrence model or bundle")->required();
  inspect->add_option("--object", inspect_object)->required();
  inspect->add_option("--out", inspect_out);
  inspect->add_flag("--occurrence", inspect_occurrence, "emit p(o|c) instead of p(c|o)");

  // select-objects
  auto* select = app.add_subcommand("select-objects", "rank objects by discriminant power");
  std::string select_model, select_out, select_agg = "max";
  std::size_t select_count = 140;
  select->add_option("--model", select_model)->required();
  select->add_option("--count", select_count);
  select->add_option("--aggregation", select_agg)->check(CLI::IsMember({"max", "mean"}));
  select->add_option("--out", select_out);

  // encode
  auto* encode = app.add_subcommand("encode", "encode a manifest with a trained bundle");
  std::string encode_bundle, encode_manifest_path, encode_out, encode_format = "binary", encode_mode;
  encode->add_option("--bundle", encode_bundle)->required();
  encode->add_option("--manifest", encode_manifest_path)->required();
  encode->add_option("--out", encode_out)->required();
  encode->add_option("--format", encode_format)->check(CLI::IsMember({"binary", "csv"}));
  encode->add_option("--mode", encode_mode)->check(CLI::IsMember({"hard", "soft"}));

  // cluster
  auto* cluster = app.add_subcommand("cluster", "k-means topics over a descriptor file");
  std::string cluster_in, cluster_out;
  std::size_t cluster_topics = 5, cluster_iter = 300;
  double cluster_tol = 1e-6;
  std::uint64_t cluster_seed = 0;
  cluster->add_option("--descriptors", cluster_in)->required();
  cluster->add_option("--topics", cluster_topics);
  cluster->add_option("--seed", cluster_seed);
  cluster->add_option("--max-iter", cluster_iter);
  cluster->add_option("--tol", cluster_tol);
  cluster->add_option("--out", cluster_out);

  // train
  auto* train = app.add_subcommand("train", "train the full pipeline into a bundle");
  std::string train_manifest, train_out = "model.bundle";
  ConfigArgs train_cfg;
  train->add_option("--train", train_manifest)->required();
  train->add_option("--out", train_out);
  train_cfg.attach(train);

  // predict
  auto* pred = app.add_subcommand("predict", "predict scene classes");
  std::string pred_bundle, pred_manifest, pred_out, pred_pool = "average";
  pred->add_option("--bundle", pred_bundle)->required();
  pred->add_option("--manifest", pred_manifest)->required();
  pred->add_option("--out", pred_out);
  pred->add_option("--pooling", pred_pool)->check(CLI::IsMember({"average", "max"}));

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a bundle on a labeled manifest");
  std::string eval_bundle, eval_manifest, eval_dir = ".", eval_pool = "average";
  eval->add_option("--bundle", eval_bundle)->required();
  eval->add_option("--manifest", eval_manifest)->required();
  eval->add_option("--out-dir", eval_dir);
  eval->add_option("--pooling", eval_pool)->check(CLI::IsMember({"average", "max"}));

  // ablate
  auto* ablate = app.add_subcommand("ablate", "sweep object count, topics and pooling");
  std::string ablate_train, ablate_test, ablate_out;
  std::vector<std::size_t> ablate_counts;
  ConfigArgs ablate_cfg;
  ablate->add_option("--train", ablate_train)->required();
  ablate->add_option("--test", ablate_test)->required();
  ablate->add_option("--object-counts", ablate_counts, "object counts R to sweep")->delimiter(',')->required();
  ablate->add_option("--out", ablate_out);
  ablate_cfg.attach(ablate);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      planted.n_topics = std::max<std::size_t>(planted.n_topics, 1);
      SynthSpec spec = planted_spec(planted, synth_seed);
      spec.images_per_class = synth_images;
      spec.target_images_per_class = synth_target_images;
      spec.mode = detection_mode_from_string(synth_mode);
      spec.patches_per_image = synth_patches;
      spec.shift = shift;
      SynthData data = generate(spec);
      fs::create_directories(synth_dir);
      write_manifest(fs::path(synth_dir) / "source.txt", data.source);
      write_manifest(fs::path(synth_dir) / "target.txt", data.target);
      std::string sidecar = "image_id,domain,topic\n";
      for (std::size_t i = 0; i < data.source.records.size(); ++i)
        sidecar += data.source.records[i].image_id + ",source," + std::to_string(data.source_topics[i]) + '\n';
      for (std::size_t i = 0; i < data.target.records.size(); ++i)
        sidecar += data.target.records[i].image_id + ",target," + std::to_string(data.target_topics[i]) + '\n';
      write_file((fs::path(synth_dir) / "hidden_topics.csv").string(), sidecar);
      std::cerr << "wrote " << data.source.records.size() << " source and " << data.target.records.size()
                << " target images to " << synth_dir << '\n';
    } else if (*build) {
      PipelineConfig cfg = build_cfg.build();
      DatasetManifest m = parse_manifest(build_train, {cfg.mode, true});
      OccurrenceModel occ = build_occurrence_model(m, cfg.grid());
      ClassPrior prior = cfg.prior == PriorChoice::Uniform ? ClassPrior::uniform(m.classes.size()) : ClassPrior::empirical(m);
      PosteriorModel post = build_posterior_model(occ, prior, cfg.fallback);
      write_file(build_out, serialize_oom(occ, post));
      std::size_t fallback = 0;
      for (char c : post.fallback_mask) fallback += c != 0;
      std::cerr << "occurrence model: " << m.vocabulary.size() << " objects x " << m.classes.size() << " classes x "
                << cfg.grid().size() << " thresholds, " << fallback << " fallback cells\n";
    } else if (*inspect) {
      OomArtifact a = load_models(inspect_model);
      auto o = a.posterior.vocabulary.find(inspect_object);
      if (!o) throw vocabulary_error("unknown object '" + inspect_object + "'");
      std::string csv = "theta,class,probability\n";
      for (std::size_t t = 0; t < a.posterior.grid.size(); ++t)
        for (std::size_t c = 0; c < a.posterior.classes.size(); ++c) {
          const double p = inspect_occurrence ? a.occurrence.probs.at(*o, c, t) : a.posterior.posteriors.at(*o, c, t);
          csv += format_real(a.posterior.grid.value(t)) + ',' + a.posterior.classes.name(c) + ',' + format_real(p) + '\n';
        }
      emit(inspect_out, csv);
    } else if (*select) {
      OomArtifact a = load_models(select_model);
      auto sel = select_objects(a.posterior, select_count, aggregation_from_string(select_agg));
      std::vector<std::size_t> rank(sel.scores.size(), 0);
      for (std::size_t i = 0; i < sel.selected.size(); ++i) rank[sel.selected[i]] = i + 1;
      std::string csv = "object,score,rank\n";
      for (std::size_t i = 0; i < sel.selected.size(); ++i) {
        const std::size_t o = sel.selected[i];
        csv += a.posterior.vocabulary.name(o) + ',' + format_real(sel.scores[o]) + ',' + std::to_string(i + 1) + '\n';
      }
      emit(select_out, csv);
    } else if (*encode) {
      ModelBundle b = load_bundle(encode_bundle);
      ParseOptions opts;
      if (!encode_mode.empty()) opts.mode = detection_mode_from_string(encode_mode);
      DatasetManifest m = parse_manifest(encode_manifest_path, opts);
      DescriptorSet d = encode_manifest(b, m);
      write_file(encode_out, encode_format == "csv" ? descriptors_csv(d) : serialize_descriptors(d));
      std::cerr << "encoded " << d.rows.size() << " records, dim " << (d.rows.empty() ? 0 : d.rows.front().size()) << '\n';
    } else if (*cluster) {
      DescriptorSet d = deserialize_descriptors(read_file(cluster_in));
      KMeansModel km = fit_topics(d.rows, cluster_topics, cluster_seed, cluster_iter, cluster_tol);
      std::string csv = "image_id,topic,distance\n";
      for (std::size_t i = 0; i < d.rows.size(); ++i) {
        auto a = assign_topic(km, d.rows[i]);
        csv += d.image_ids[i] + ',' + std::to_string(a.topic_index) + ',' + format_real(a.distance) + '\n';
      }
      emit(cluster_out, csv);
      std::cerr << "inertia " << km.inertia << " after " << km.iterations_run << " iterations\n";
    } else if (*train) {
      PipelineConfig cfg = train_cfg.build();
      DatasetManifest m = parse_manifest(train_manifest, {cfg.mode, true});
      TrainResult r = train_pipeline(m, cfg, &std::cerr);
      save_bundle(train_out, r.bundle);
      std::cerr << "bundle written to " << train_out << '\n';
    } else if (*pred) {
      ModelBundle b = load_bundle(pred_bundle);
      DatasetManifest m = parse_manifest(pred_manifest);
      EvalReport rep = evaluate(b, m, pooling_from(pred_pool));
      emit(pred_out, rep.predictions_csv());
    } else if (*eval) {
      ModelBundle b = load_bundle(eval_bundle);
      DatasetManifest m = parse_manifest(eval_manifest);
      EvalReport rep = evaluate(b, m, pooling_from(eval_pool));
      fs::create_directories(eval_dir);
      write_file((fs::path(eval_dir) / "predictions.csv").string(), rep.predictions_csv());
      write_file((fs::path(eval_dir) / "metrics.csv").string(), rep.metrics_csv());
      write_file((fs::path(eval_dir) / "confusion.csv").string(), rep.confusion_csv());
      if (rep.class_mean_accuracy) std::cout << "class-mean accuracy: " << *rep.class_mean_accuracy << '\n';
      else std::cout << "class-mean accuracy: n/a (no labeled records)\n";
    } else if (*ablate) {
      PipelineConfig cfg = ablate_cfg.build();
      DatasetManifest tr = parse_manifest(ablate_train, {cfg.mode, true});
      DatasetManifest te = parse_manifest(ablate_test, {cfg.mode, false});
      auto rows = run_ablation(tr, te, cfg, ablate_counts, &std::cerr);
      emit(ablate_out, ablation_csv(rows));
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

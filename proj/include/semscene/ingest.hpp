#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace semscene {

// Ordered list of unique names with stable indices. Used for both the
// object vocabulary and the scene class set.
class NameIndex {
 public:
  NameIndex() = default;
  explicit NameIndex(std::vector<std::string> names, std::string_view what = "name");

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  std::optional<std::size_t> find(std::string_view name) const;

  bool operator==(const NameIndex& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

using ObjectVocabulary = NameIndex;
using SceneClassSet = NameIndex;

struct Box {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;

  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }
  bool valid() const { return 0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0; }
  bool operator==(const Box&) const = default;
};

struct HardDetection {
  std::size_t object_index = 0;
  double score = 0;
  Box box;
  bool operator==(const HardDetection&) const = default;
};

struct SoftPatch {
  long patch_id = 0;
  std::vector<double> scores;  // one entry per vocabulary object
  bool operator==(const SoftPatch&) const = default;
};

enum class DetectionMode { Hard, Soft };

std::string_view to_string(DetectionMode mode);
DetectionMode detection_mode_from_string(std::string_view s);

struct ImageRecord {
  std::string image_id;
  std::optional<std::size_t> scene_class;
  std::optional<std::string> domain_tag;
  std::variant<std::vector<HardDetection>, std::vector<SoftPatch>> detections;

  DetectionMode mode() const { return detections.index() == 0 ? DetectionMode::Hard : DetectionMode::Soft; }
  bool is_hard() const { return detections.index() == 0; }
  // Throw a variant error when the record holds the other variant.
  const std::vector<HardDetection>& hard() const;
  const std::vector<SoftPatch>& soft() const;

  bool operator==(const ImageRecord&) const = default;
};

struct DatasetManifest {
  ObjectVocabulary vocabulary;
  SceneClassSet classes;
  DetectionMode mode = DetectionMode::Hard;
  std::string split_tag;
  std::vector<ImageRecord> records;

  // Indices of the records labeled with each class.
  std::vector<std::vector<std::size_t>> images_per_class() const;
  // Throws a model error naming the first class with no labeled record.
  void require_all_classes() const;
  bool operator==(const DatasetManifest&) const = default;
};

struct ParseOptions {
  std::optional<DetectionMode> mode;  // when set, the header must agree
  bool training = false;              // require every class to be populated and every record labeled
};

DatasetManifest parse_manifest_text(std::string_view text, const ParseOptions& opts = {});
DatasetManifest parse_manifest(const std::filesystem::path& path, const ParseOptions& opts = {});

std::string serialize_manifest(const DatasetManifest& manifest);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Image-level confidence for one object: the maximum detection score, or
// for soft records the maximum patch score. Empty when the object has no
// detection in the record.
std::optional<double> image_score(const ImageRecord& record, std::size_t object_index);

// 1 when the record holds a detection of the object scoring at least theta.
int threshold_indicator(const ImageRecord& record, std::size_t object_index, double theta);

}  // namespace semscene

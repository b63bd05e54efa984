#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "semscene/ingest.hpp"
#include "semscene/occurrence.hpp"

namespace semscene {

struct PyramidLevel {
  std::size_t rows = 1, cols = 1;
  std::size_t regions() const { return rows * cols; }
  bool operator==(const PyramidLevel&) const = default;
};

class PyramidLayout {
 public:
  // 1x1, 2x2 and three horizontal bands.
  PyramidLayout() : PyramidLayout({{1, 1}, {2, 2}, {3, 1}}) {}
  explicit PyramidLayout(std::vector<PyramidLevel> levels);

  const std::vector<PyramidLevel>& levels() const { return levels_; }
  std::size_t region_count() const { return region_count_; }
  // Offset of the first region of a level in the stacked region order.
  std::size_t level_offset(std::size_t level) const { return offsets_.at(level); }

  // "1x1,2x2,3x1" (rows x cols).
  static PyramidLayout parse(std::string_view text);
  std::string to_string() const;

  bool operator==(const PyramidLayout& o) const { return levels_ == o.levels_; }

 private:
  std::vector<PyramidLevel> levels_;
  std::vector<std::size_t> offsets_;
  std::size_t region_count_ = 0;
};

// Region of a level containing the box center, row-major. A center on an
// interior boundary belongs to the lower-index cell.
std::size_t assign_region(const Box& box, const PyramidLevel& level);

std::size_t hard_descriptor_length(std::size_t selected, std::size_t classes, const PyramidLayout& layout);

// Stacks, per pyramid region, the Bayesian average of posterior columns of
// each selected object's detections in that region. Layout: regions in
// pyramid order, then selected objects in selection order, then classes.
std::vector<double> encode_hard(const ImageRecord& record, const PosteriorModel& post,
                                const DiscriminantSelection& sel, const PyramidLayout& layout);

}  // namespace semscene

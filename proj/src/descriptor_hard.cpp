#include "semscene/descriptor_hard.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include "semscene/error.hpp"

namespace semscene {

PyramidLayout::PyramidLayout(std::vector<PyramidLevel> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) throw argument_error("pyramid layout needs at least one level");
  for (const auto& l : levels_) {
    if (l.rows == 0 || l.cols == 0) throw argument_error("pyramid level with an empty grid");
    offsets_.push_back(region_count_);
    region_count_ += l.regions();
  }
}

PyramidLayout PyramidLayout::parse(std::string_view text) {
  std::vector<PyramidLevel> levels;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    std::string_view item = text.substr(pos, comma - pos);
    std::size_t x = item.find('x');
    if (x == std::string_view::npos) throw argument_error("pyramid level '" + std::string(item) + "' is not RxC");
    PyramidLevel l;
    auto r1 = std::from_chars(item.data(), item.data() + x, l.rows);
    auto r2 = std::from_chars(item.data() + x + 1, item.data() + item.size(), l.cols);
    if (r1.ec != std::errc() || r1.ptr != item.data() + x || r2.ec != std::errc() ||
        r2.ptr != item.data() + item.size())
      throw argument_error("pyramid level '" + std::string(item) + "' is not RxC");
    levels.push_back(l);
    pos = comma + 1;
  }
  return PyramidLayout(std::move(levels));
}

std::string PyramidLayout::to_string() const {
  std::string s;
  for (const auto& l : levels_) {
    if (!s.empty()) s += ',';
    s += std::to_string(l.rows) + 'x' + std::to_string(l.cols);
  }
  return s;
}

namespace {

std::size_t cell_of(double center, std::size_t cells) {
  // ceil(center * n) - 1 sends a center exactly on a boundary to the lower cell.
  const double scaled = std::ceil(center * static_cast<double>(cells)) - 1.0;
  if (scaled <= 0) return 0;
  return std::min(static_cast<std::size_t>(scaled), cells - 1);
}

}  // namespace

std::size_t assign_region(const Box& box, const PyramidLevel& level) {
  return cell_of(box.center_y(), level.rows) * level.cols + cell_of(box.center_x(), level.cols);
}

std::size_t hard_descriptor_length(std::size_t selected, std::size_t classes, const PyramidLayout& layout) {
  return selected * classes * layout.region_count();
}

std::vector<double> encode_hard(const ImageRecord& record, const PosteriorModel& post,
                                const DiscriminantSelection& sel, const PyramidLayout& layout) {
  const auto& dets = record.hard();
  const std::size_t n_cls = post.classes.size();
  const std::size_t n_sel = sel.selected.size();
  std::vector<double> out(hard_descriptor_length(n_sel, n_cls, layout), 0.0);

  std::vector<std::ptrdiff_t> slot(post.vocabulary.size(), -1);
  for (std::size_t i = 0; i < n_sel; ++i) {
    if (sel.selected[i] >= slot.size()) throw dimension_error("selection does not match the model vocabulary");
    slot[sel.selected[i]] = static_cast<std::ptrdiff_t>(i);
  }

  // Per (region, selected object): histogram of grid indices. Summing the
  // posterior columns in grid order makes the result independent of the
  // order detections appear in.
  std::map<std::pair<std::size_t, std::size_t>, std::map<std::size_t, std::size_t>> hist;
  for (const auto& d : dets) {
    if (d.object_index >= slot.size()) throw dimension_error("detection object index outside the vocabulary");
    if (slot[d.object_index] < 0) continue;
    const std::size_t t = post.grid.nearest_index(d.score);
    for (std::size_t l = 0; l < layout.levels().size(); ++l) {
      const std::size_t region = layout.level_offset(l) + assign_region(d.box, layout.levels()[l]);
      ++hist[{region, static_cast<std::size_t>(slot[d.object_index])}][t];
    }
  }

  for (const auto& [key, counts] : hist) {
    const auto [region, i] = key;
    const std::size_t o = sel.selected[i];
    std::size_t n = 0;
    double* row = out.data() + (region * n_sel + i) * n_cls;
    for (const auto& [t, k] : counts) {
      n += k;
      for (std::size_t c = 0; c < n_cls; ++c) row[c] += static_cast<double>(k) * post.posteriors.at(o, c, t);
    }
    for (std::size_t c = 0; c < n_cls; ++c) row[c] /= static_cast<double>(n);
  }
  return out;
}

}  // namespace semscene

#include "semscene/ingest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "semscene/error.hpp"

namespace semscene {

NameIndex::NameIndex(std::vector<std::string> names, std::string_view what) : names_(std::move(names)) {
  if (names_.empty()) throw vocabulary_error(std::string(what) + " list is empty");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw vocabulary_error(std::string("empty ") + std::string(what));
    if (!lookup_.emplace(names_[i], i).second)
      throw vocabulary_error("duplicate " + std::string(what) + " '" + names_[i] + "'");
  }
}

std::optional<std::size_t> NameIndex::find(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::string_view to_string(DetectionMode mode) { return mode == DetectionMode::Hard ? "hard" : "soft"; }

DetectionMode detection_mode_from_string(std::string_view s) {
  if (s == "hard") return DetectionMode::Hard;
  if (s == "soft") return DetectionMode::Soft;
  throw argument_error("unknown detection mode '" + std::string(s) + "'");
}

const std::vector<HardDetection>& ImageRecord::hard() const {
  if (!is_hard()) throw variant_error("record '" + image_id + "' holds soft patches, hard detections required");
  return std::get<0>(detections);
}

const std::vector<SoftPatch>& ImageRecord::soft() const {
  if (is_hard()) throw variant_error("record '" + image_id + "' holds hard detections, soft patches required");
  return std::get<1>(detections);
}

std::vector<std::vector<std::size_t>> DatasetManifest::images_per_class() const {
  std::vector<std::vector<std::size_t>> out(classes.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].scene_class) out[*records[i].scene_class].push_back(i);
  return out;
}

void DatasetManifest::require_all_classes() const {
  auto per_class = images_per_class();
  for (std::size_t c = 0; c < per_class.size(); ++c)
    if (per_class[c].empty()) throw model_error("scene class '" + classes.name(c) + "' has no training images");
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_real(std::string_view tok, std::size_t line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(line, "expected a number, got '" + std::string(tok) + "'");
  if (!std::isfinite(v)) throw ParseError(line, "non-finite value '" + std::string(tok) + "'");
  return v;
}

long parse_int(std::string_view tok, std::size_t line) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(line, "expected an integer, got '" + std::string(tok) + "'");
  return v;
}

std::vector<std::string> to_strings(const std::vector<std::string_view>& toks, std::size_t from) {
  std::vector<std::string> out;
  for (std::size_t i = from; i < toks.size(); ++i) out.emplace_back(toks[i]);
  return out;
}

}  // namespace

DatasetManifest parse_manifest_text(std::string_view text, const ParseOptions& opts) {
  DatasetManifest m;
  bool have_vocab = false, have_classes = false, have_mode = false;
  ImageRecord* current = nullptr;

  auto require_headers = [&](std::size_t line) {
    if (!have_vocab || !have_classes || !have_mode)
      throw ParseError(line, "record before #vocab, #classes and #mode headers");
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    auto toks = split_ws(line);
    if (toks.empty()) {
      current = nullptr;
      if (end == text.size()) break;
      continue;
    }
    const std::string_view head = toks[0];

    if (head.front() == '#') {
      if (!m.records.empty()) throw ParseError(line_no, "header after the first record");
      if (head == "#vocab") {
        m.vocabulary = ObjectVocabulary(to_strings(toks, 1), "object name");
        have_vocab = true;
      } else if (head == "#classes") {
        m.classes = SceneClassSet(to_strings(toks, 1), "class name");
        have_classes = true;
      } else if (head == "#mode") {
        if (toks.size() != 2) throw ParseError(line_no, "#mode takes exactly one value");
        if (toks[1] == "hard") m.mode = DetectionMode::Hard;
        else if (toks[1] == "soft") m.mode = DetectionMode::Soft;
        else throw ParseError(line_no, "unknown mode '" + std::string(toks[1]) + "'");
        have_mode = true;
      } else if (head == "#split") {
        if (toks.size() != 2) throw ParseError(line_no, "#split takes exactly one value");
        m.split_tag = std::string(toks[1]);
      } else if (head == "#") {
        // comment
      } else {
        throw ParseError(line_no, "unknown header '" + std::string(head) + "'");
      }
      if (end == text.size()) break;
      continue;
    }

    require_headers(line_no);
    if (head == "img") {
      if (toks.size() < 3 || toks.size() > 4) throw ParseError(line_no, "expected: img <id> <class|?> [domain=<tag>]");
      ImageRecord rec;
      rec.image_id = std::string(toks[1]);
      if (toks[2] != "?") {
        auto c = m.classes.find(toks[2]);
        if (!c) throw vocabulary_error("line " + std::to_string(line_no) + ": unknown class '" + std::string(toks[2]) + "'");
        rec.scene_class = *c;
      }
      if (toks.size() == 4) {
        if (toks[3].substr(0, 7) != "domain=" || toks[3].size() == 7)
          throw ParseError(line_no, "expected domain=<tag>, got '" + std::string(toks[3]) + "'");
        rec.domain_tag = std::string(toks[3].substr(7));
      }
      if (m.mode == DetectionMode::Hard) rec.detections = std::vector<HardDetection>{};
      else rec.detections = std::vector<SoftPatch>{};
      m.records.push_back(std::move(rec));
      current = &m.records.back();
    } else if (head == "det") {
      if (m.mode != DetectionMode::Hard) throw format_error("line " + std::to_string(line_no) + ": det line in a soft manifest");
      if (!current) throw ParseError(line_no, "det line outside a record");
      if (toks.size() != 7) throw ParseError(line_no, "expected: det <object> <score> <x0> <y0> <x1> <y1>");
      auto o = m.vocabulary.find(toks[1]);
      if (!o) throw vocabulary_error("line " + std::to_string(line_no) + ": unknown object '" + std::string(toks[1]) + "'");
      HardDetection d;
      d.object_index = *o;
      d.score = parse_real(toks[2], line_no);
      d.box = {parse_real(toks[3], line_no), parse_real(toks[4], line_no), parse_real(toks[5], line_no),
               parse_real(toks[6], line_no)};
      if (!d.box.valid()) throw ParseError(line_no, "box outside [0,1] or degenerate");
      std::get<0>(current->detections).push_back(d);
    } else if (head == "patch") {
      if (m.mode != DetectionMode::Soft) throw format_error("line " + std::to_string(line_no) + ": patch line in a hard manifest");
      if (!current) throw ParseError(line_no, "patch line outside a record");
      SoftPatch p;
      if (toks.size() < 2) throw ParseError(line_no, "expected: patch <id> <scores...>");
      p.patch_id = parse_int(toks[1], line_no);
      if (toks.size() - 2 != m.vocabulary.size())
        throw dimension_error("line " + std::to_string(line_no) + ": record '" + current->image_id + "' patch has " +
                              std::to_string(toks.size() - 2) + " scores, vocabulary has " +
                              std::to_string(m.vocabulary.size()));
      p.scores.reserve(toks.size() - 2);
      for (std::size_t i = 2; i < toks.size(); ++i) p.scores.push_back(parse_real(toks[i], line_no));
      std::get<1>(current->detections).push_back(std::move(p));
    } else {
      throw ParseError(line_no, "unrecognized line starting with '" + std::string(head) + "'");
    }
    if (end == text.size()) break;
  }

  if (!have_vocab || !have_classes || !have_mode) throw ParseError(line_no, "missing #vocab, #classes or #mode header");
  if (m.records.empty()) throw format_error("empty manifest");
  if (opts.mode && *opts.mode != m.mode)
    throw format_error("manifest is " + std::string(to_string(m.mode)) + ", expected " + std::string(to_string(*opts.mode)));
  if (opts.training) {
    for (const auto& r : m.records)
      if (!r.scene_class) throw format_error("training record '" + r.image_id + "' has no class label");
    m.require_all_classes();
  }
  return m;
}

DatasetManifest parse_manifest(const std::filesystem::path& path, const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest_text(ss.str(), opts);
}

namespace {

void put_real(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

}  // namespace

std::string serialize_manifest(const DatasetManifest& m) {
  std::string out;
  out += "#vocab";
  for (const auto& n : m.vocabulary.names()) out += ' ' + n;
  out += "\n#classes";
  for (const auto& n : m.classes.names()) out += ' ' + n;
  out += "\n#mode ";
  out += to_string(m.mode);
  out += '\n';
  if (!m.split_tag.empty()) out += "#split " + m.split_tag + '\n';
  for (const auto& r : m.records) {
    out += "\nimg " + r.image_id + ' ' + (r.scene_class ? m.classes.name(*r.scene_class) : std::string("?"));
    if (r.domain_tag) out += " domain=" + *r.domain_tag;
    out += '\n';
    if (r.is_hard()) {
      for (const auto& d : r.hard()) {
        out += "det " + m.vocabulary.name(d.object_index);
        for (double v : {d.score, d.box.x0, d.box.y0, d.box.x1, d.box.y1}) {
          out += ' ';
          put_real(out, v);
        }
        out += '\n';
      }
    } else {
      for (const auto& p : r.soft()) {
        out += "patch " + std::to_string(p.patch_id);
        for (double v : p.scores) {
          out += ' ';
          put_real(out, v);
        }
        out += '\n';
      }
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write manifest " + path.string());
  out << serialize_manifest(manifest);
}

std::optional<double> image_score(const ImageRecord& record, std::size_t object_index) {
  std::optional<double> best;
  if (record.is_hard()) {
    for (const auto& d : record.hard())
      if (d.object_index == object_index && (!best || d.score > *best)) best = d.score;
  } else {
    for (const auto& p : record.soft()) {
      if (object_index >= p.scores.size()) throw argument_error("object index out of range");
      if (!best || p.scores[object_index] > *best) best = p.scores[object_index];
    }
  }
  return best;
}

int threshold_indicator(const ImageRecord& record, std::size_t object_index, double theta) {
  for (const auto& d : record.hard())
    if (d.object_index == object_index && d.score >= theta) return 1;
  return 0;
}

}  // namespace semscene

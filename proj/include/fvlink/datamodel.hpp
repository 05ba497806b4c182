#pragma once

// Persistent data types and their tab-separated text formats.
//
//   embeddings:  voice_dim=<int>\tface_dim=<int>
//                record_id\tidentity_id\tlanguage\tmodality\tv1 v2 ... vD
//   trials:      voice_record_id\tface_record_id\t{0,1}
//   scores:      voice_record_id\tface_record_id\tscore   (after a header line)
//   checkpoint:  #meta key=value
//                name\tshape(d1,d2,...)\tv1 v2 ...
//
// Reals are written with 17 significant digits so every double survives a
// write/read cycle bit for bit.

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fvlink/errors.hpp"
#include "fvlink/tensor.hpp"
#include "fvlink/textio.hpp"

namespace fvlink {

enum class Modality { voice, face };

inline std::string_view to_string(Modality m) { return m == Modality::voice ? "voice" : "face"; }

struct EmbeddingRecord {
  std::string record_id;
  std::string identity_id;
  std::string language;
  Modality modality = Modality::voice;
  std::vector<double> vector;

  bool operator==(const EmbeddingRecord&) const = default;
};

class EmbeddingStore {
 public:
  EmbeddingStore(std::size_t voice_dim, std::size_t face_dim) : voice_dim_(voice_dim), face_dim_(face_dim) {
    if (voice_dim == 0 || face_dim == 0) throw PreconditionError("embedding dimensions must be positive");
  }

  std::size_t voice_dim() const { return voice_dim_; }
  std::size_t face_dim() const { return face_dim_; }
  std::size_t dim(Modality m) const { return m == Modality::voice ? voice_dim_ : face_dim_; }

  void add(EmbeddingRecord rec) {
    if (!text::is_token(rec.record_id) || !text::is_token(rec.identity_id) || !text::is_token(rec.language)) {
      throw PreconditionError("record fields must be non-empty tokens without whitespace (record '" + rec.record_id + "')");
    }
    if (rec.vector.size() != dim(rec.modality)) {
      throw ShapeError("record " + rec.record_id + ": " + std::string(to_string(rec.modality)) + " vector has " +
                       std::to_string(rec.vector.size()) + " entries, expected " + std::to_string(dim(rec.modality)));
    }
    for (double v : rec.vector)
      if (!std::isfinite(v)) throw PreconditionError("record " + rec.record_id + ": non-finite vector entry");
    if (by_id_.count(rec.record_id)) throw PreconditionError("duplicate record_id: " + rec.record_id);

    const std::size_t idx = records_.size();
    by_id_.emplace(rec.record_id, idx);
    auto it = by_identity_.find(rec.identity_id);
    if (it == by_identity_.end()) {
      identities_.push_back(rec.identity_id);
      it = by_identity_.emplace(rec.identity_id, IdentityIndex{identities_.size() - 1, {}, {}}).first;
    }
    (rec.modality == Modality::voice ? it->second.voice : it->second.face).push_back(idx);
    records_.push_back(std::move(rec));
  }

  const EmbeddingRecord* find(std::string_view record_id) const {
    auto it = by_id_.find(std::string(record_id));
    return it == by_id_.end() ? nullptr : &records_[it->second];
  }

  const EmbeddingRecord& get(std::string_view record_id) const {
    const EmbeddingRecord* r = find(record_id);
    if (!r) throw LookupError("unknown record_id: " + std::string(record_id));
    return *r;
  }

  const std::vector<EmbeddingRecord>& records() const { return records_; }

  // Identity ids in order of first appearance.
  const std::vector<std::string>& identities() const { return identities_; }

  bool has_identity(std::string_view identity) const { return by_identity_.count(std::string(identity)) != 0; }

  std::size_t identity_index(std::string_view identity) const { return index_of(identity).position; }

  // Indices into records() for one identity and modality.
  const std::vector<std::size_t>& records_of(std::string_view identity, Modality m) const {
    const IdentityIndex& ix = index_of(identity);
    return m == Modality::voice ? ix.voice : ix.face;
  }

  std::size_t count(Modality m) const {
    std::size_t n = 0;
    for (const auto& r : records_)
      if (r.modality == m) ++n;
    return n;
  }

  bool operator==(const EmbeddingStore& other) const {
    return voice_dim_ == other.voice_dim_ && face_dim_ == other.face_dim_ && records_ == other.records_;
  }

 private:
  struct IdentityIndex {
    std::size_t position;
    std::vector<std::size_t> voice;
    std::vector<std::size_t> face;
  };

  const IdentityIndex& index_of(std::string_view identity) const {
    auto it = by_identity_.find(std::string(identity));
    if (it == by_identity_.end()) throw LookupError("unknown identity_id: " + std::string(identity));
    return it->second;
  }

  std::size_t voice_dim_;
  std::size_t face_dim_;
  std::vector<EmbeddingRecord> records_;
  std::vector<std::string> identities_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, IdentityIndex> by_identity_;
};

enum class TrialLabel { nontarget = 0, target = 1 };

struct Trial {
  std::string voice_record_id;
  std::string face_record_id;
  TrialLabel label = TrialLabel::nontarget;

  bool is_target() const { return label == TrialLabel::target; }
  bool operator==(const Trial&) const = default;
};

using TrialList = std::vector<Trial>;

struct ScoreSet {
  TrialList trials;
  std::vector<double> scores;

  ScoreSet() = default;
  ScoreSet(TrialList t, std::vector<double> s) : trials(std::move(t)), scores(std::move(s)) { validate(); }

  std::size_t size() const { return scores.size(); }

  void validate() const {
    if (trials.size() != scores.size()) {
      throw PreconditionError("score set has " + std::to_string(scores.size()) + " scores for " +
                              std::to_string(trials.size()) + " trials");
    }
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (!std::isfinite(scores[i])) throw PreconditionError("non-finite score at trial " + std::to_string(i));
  }

  bool operator==(const ScoreSet&) const = default;
};

// ---------------------------------------------------------------------------
// Embedding files

inline std::string serialize_embeddings(const EmbeddingStore& store) {
  std::string out = "voice_dim=" + std::to_string(store.voice_dim()) + "\tface_dim=" + std::to_string(store.face_dim()) + "\n";
  for (const auto& r : store.records()) {
    out += r.record_id;
    out += '\t';
    out += r.identity_id;
    out += '\t';
    out += r.language;
    out += '\t';
    out += to_string(r.modality);
    out += '\t';
    for (std::size_t i = 0; i < r.vector.size(); ++i) {
      if (i) out += ' ';
      out += text::format_double(r.vector[i]);
    }
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::size_t parse_dim_field(std::string_view field, std::string_view key, const std::string& file) {
  const std::string prefix = std::string(key) + "=";
  if (field.substr(0, prefix.size()) != prefix) {
    throw ParseError(file, 1, "malformed header: expected '" + prefix + "<int>', got '" + std::string(field) + "'");
  }
  auto v = text::parse_int(field.substr(prefix.size()));
  if (!v || *v <= 0) throw ParseError(file, 1, "malformed header: " + std::string(key) + " must be a positive integer");
  return static_cast<std::size_t>(*v);
}

inline std::vector<std::string> lines_of(std::string_view content) {
  std::vector<std::string> lines;
  for (auto part : text::split(content, '\n')) {
    std::string l(part);
    if (!l.empty() && l.back() == '\r') l.pop_back();
    lines.push_back(std::move(l));
  }
  // A trailing newline yields one empty final element.
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace detail

inline EmbeddingStore parse_embeddings(std::string_view content, const std::string& file = "") {
  const auto lines = detail::lines_of(content);
  if (lines.empty()) throw ParseError(file, 1, "malformed header: file is empty");
  const auto header = text::split(lines[0], '\t');
  if (header.size() != 2) throw ParseError(file, 1, "malformed header: expected 'voice_dim=<int>\\tface_dim=<int>'");
  EmbeddingStore store(detail::parse_dim_field(header[0], "voice_dim", file),
                       detail::parse_dim_field(header[1], "face_dim", file));

  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    const auto fields = text::split(lines[i], '\t');
    if (fields.size() != 5) {
      throw ParseError(file, lineno, "expected 5 tab-separated fields, got " + std::to_string(fields.size()));
    }
    EmbeddingRecord rec;
    rec.record_id = std::string(fields[0]);
    rec.identity_id = std::string(fields[1]);
    rec.language = std::string(fields[2]);
    if (!text::is_token(rec.record_id) || !text::is_token(rec.identity_id) || !text::is_token(rec.language)) {
      throw ParseError(file, lineno, "record_id, identity_id and language must be non-empty tokens");
    }
    if (fields[3] == "voice") {
      rec.modality = Modality::voice;
    } else if (fields[3] == "face") {
      rec.modality = Modality::face;
    } else {
      throw ParseError(file, lineno, "modality must be 'voice' or 'face', got '" + std::string(fields[3]) + "'");
    }
    const auto values = text::split_ws(fields[4]);
    const std::size_t expected = store.dim(rec.modality);
    if (values.size() != expected) {
      throw ParseError(file, lineno,
                       "dimension mismatch: " + std::to_string(values.size()) + " values, " +
                           std::string(to_string(rec.modality)) + "_dim=" + std::to_string(expected));
    }
    rec.vector.reserve(expected);
    for (auto tok : values) {
      auto v = text::parse_double(tok);
      if (!v) throw ParseError(file, lineno, "not a number: '" + std::string(tok) + "'");
      if (!std::isfinite(*v)) throw ParseError(file, lineno, "non-finite value: '" + std::string(tok) + "'");
      rec.vector.push_back(*v);
    }
    if (store.find(rec.record_id)) throw ParseError(file, lineno, "duplicate record_id '" + rec.record_id + "'");
    store.add(std::move(rec));
  }
  return store;
}

inline EmbeddingStore load_embeddings(const std::string& path) {
  const auto lines = text::read_lines(path);
  std::string content;
  for (const auto& l : lines) {
    content += l;
    content += '\n';
  }
  return parse_embeddings(content, path);
}

inline void save_embeddings(const EmbeddingStore& store, const std::string& path) {
  text::write_file(path, serialize_embeddings(store));
}

// ---------------------------------------------------------------------------
// Trial files

inline std::string serialize_trials(const TrialList& trials) {
  std::string out;
  for (const auto& t : trials) {
    out += t.voice_record_id + "\t" + t.face_record_id + "\t" + (t.is_target() ? "1" : "0") + "\n";
  }
  return out;
}

// Syntax-only parse; ids are not resolved.
inline TrialList parse_trials(std::string_view content, const std::string& file = "") {
  TrialList out;
  const auto lines = detail::lines_of(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    const auto fields = text::split(lines[i], '\t');
    if (fields.size() != 3) {
      throw ParseError(file, lineno, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (!text::is_token(fields[0]) || !text::is_token(fields[1])) {
      throw ParseError(file, lineno, "record ids must be non-empty tokens");
    }
    Trial t{std::string(fields[0]), std::string(fields[1]), TrialLabel::nontarget};
    if (fields[2] == "1") {
      t.label = TrialLabel::target;
    } else if (fields[2] != "0") {
      throw ParseError(file, lineno, "label must be 0 or 1, got '" + std::string(fields[2]) + "'");
    }
    out.push_back(std::move(t));
  }
  return out;
}

// Resolves every id against the store and checks the voice/face columns.
inline void validate_trials(const TrialList& trials, const EmbeddingStore& store, const std::string& file = "") {
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    const std::pair<const std::string*, Modality> cols[] = {{&t.voice_record_id, Modality::voice},
                                                            {&t.face_record_id, Modality::face}};
    for (const auto& [id, want] : cols) {
      const EmbeddingRecord* r = store.find(*id);
      if (!r) throw ParseError(file, i + 1, "unknown record_id '" + *id + "'");
      if (r->modality != want) {
        throw ParseError(file, i + 1,
                         "modality mismatch: '" + *id + "' is a " + std::string(to_string(r->modality)) +
                             " record in the " + std::string(to_string(want)) + " column");
      }
    }
  }
}

inline TrialList read_trials(const std::string& path) {
  const auto lines = text::read_lines(path);
  std::string content;
  for (const auto& l : lines) content += l + "\n";
  return parse_trials(content, path);
}

inline TrialList load_trials(const std::string& path, const EmbeddingStore& store) {
  TrialList trials = read_trials(path);
  validate_trials(trials, store, path);
  return trials;
}

inline void save_trials(const TrialList& trials, const std::string& path) { text::write_file(path, serialize_trials(trials)); }

// ---------------------------------------------------------------------------
// Score files

inline constexpr std::string_view kScoreHeader = "voice_record_id\tface_record_id\tscore";

inline std::string serialize_scores(const ScoreSet& scores) {
  scores.validate();
  std::string out(kScoreHeader);
  out += '\n';
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& t = scores.trials[i];
    out += t.voice_record_id + "\t" + t.face_record_id + "\t" + text::format_double(scores.scores[i]) + "\n";
  }
  return out;
}

struct ScoreLine {
  std::string voice_record_id;
  std::string face_record_id;
  double score;
};

inline std::vector<ScoreLine> parse_scores(std::string_view content, const std::string& file = "") {
  const auto lines = detail::lines_of(content);
  if (lines.empty() || lines[0] != kScoreHeader) {
    throw ParseError(file, 1, "missing score header '" + std::string(kScoreHeader) + "'");
  }
  std::vector<ScoreLine> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    const auto fields = text::split(lines[i], '\t');
    if (fields.size() != 3) {
      throw ParseError(file, lineno, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    auto v = text::parse_double(fields[2]);
    if (!v) throw ParseError(file, lineno, "not a number: '" + std::string(fields[2]) + "'");
    if (!std::isfinite(*v)) throw ParseError(file, lineno, "non-finite score");
    out.push_back({std::string(fields[0]), std::string(fields[1]), *v});
  }
  return out;
}

inline std::vector<ScoreLine> read_scores(const std::string& path) {
  const auto lines = text::read_lines(path);
  std::string content;
  for (const auto& l : lines) content += l + "\n";
  return parse_scores(content, path);
}

// Pairs a score file with its trial list; both must list the same
// (voice, face) pairs in the same order.
inline ScoreSet attach_trials(const std::vector<ScoreLine>& lines, const TrialList& trials, const std::string& file = "") {
  if (lines.size() != trials.size()) {
    throw PreconditionError(file + ": " + std::to_string(lines.size()) + " scores for " + std::to_string(trials.size()) +
                            " trials");
  }
  std::vector<double> scores;
  scores.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].voice_record_id != trials[i].voice_record_id || lines[i].face_record_id != trials[i].face_record_id) {
      throw PreconditionError(file + ": trial mismatch at index " + std::to_string(i) + " (" + lines[i].voice_record_id +
                              "," + lines[i].face_record_id + ")");
    }
    scores.push_back(lines[i].score);
  }
  return ScoreSet(trials, std::move(scores));
}

inline void write_scores(const ScoreSet& scores, const std::string& path) { text::write_file(path, serialize_scores(scores)); }

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  ParamSet params;
  std::map<std::string, std::string> meta;

  bool operator==(const Checkpoint&) const = default;
};

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out;
  for (const auto& [k, v] : ckpt.meta) out += "#meta " + k + "=" + v + "\n";
  for (const auto& [name, p] : ckpt.params)
    if (!p.trainable) out += "#meta " + name + ".frozen=1\n";
  for (const auto& [name, p] : ckpt.params) {
    std::string shape = "shape(";
    for (std::size_t i = 0; i < p.value.shape().size(); ++i) {
      if (i) shape += ",";
      shape += std::to_string(p.value.shape()[i]);
    }
    out += name + "\t" + shape + ")\t";
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (i) out += ' ';
      out += text::format_double(p.value[i]);
    }
    out += '\n';
  }
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view content, const std::string& file = "") {
  Checkpoint ckpt;
  std::map<std::string, std::string> meta;
  struct Pending {
    std::string name;
    Tensor value;
  };
  std::vector<Pending> tensors;
  const auto lines = detail::lines_of(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    std::string_view line = lines[i];
    if (line.substr(0, 6) == "#meta ") {
      const std::string_view kv = line.substr(6);
      const std::size_t eq = kv.find('=');
      if (eq == std::string_view::npos || eq == 0) throw ParseError(file, lineno, "malformed meta line");
      meta[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
      continue;
    }
    const auto fields = text::split(line, '\t');
    if (fields.size() != 3) throw ParseError(file, lineno, "expected name, shape and values");
    const std::string_view shape_field = fields[1];
    if (shape_field.substr(0, 6) != "shape(" || shape_field.back() != ')') {
      throw ParseError(file, lineno, "malformed shape '" + std::string(shape_field) + "'");
    }
    Shape shape;
    for (auto d : text::split(shape_field.substr(6, shape_field.size() - 7), ',')) {
      auto v = text::parse_int(d);
      if (!v || *v <= 0) throw ParseError(file, lineno, "malformed shape '" + std::string(shape_field) + "'");
      shape.push_back(static_cast<std::size_t>(*v));
    }
    if (shape.empty()) throw ParseError(file, lineno, "empty shape");
    std::vector<double> values;
    for (auto tok : text::split_ws(fields[2])) {
      auto v = text::parse_double(tok);
      if (!v || !std::isfinite(*v)) throw ParseError(file, lineno, "bad value '" + std::string(tok) + "'");
      values.push_back(*v);
    }
    if (values.size() != shape_numel(shape)) {
      throw ParseError(file, lineno, std::to_string(values.size()) + " values for shape " + shape_str(shape));
    }
    const std::string name(fields[0]);
    for (const auto& p : tensors)
      if (p.name == name) throw ParseError(file, lineno, "duplicate tensor '" + name + "'");
    tensors.push_back({name, Tensor(std::move(shape), std::move(values))});
  }
  for (auto& p : tensors) {
    const std::string key = p.name + ".frozen";
    const bool frozen = meta.count(key) && meta[key] == "1";
    meta.erase(key);
    ckpt.params.add(p.name, std::move(p.value), !frozen);
  }
  for (const auto& [k, v] : meta) {
    if (k.size() > 7 && k.substr(k.size() - 7) == ".frozen") {
      throw ParseError(file, 0, "frozen flag for unknown tensor '" + k.substr(0, k.size() - 7) + "'");
    }
  }
  ckpt.meta = std::move(meta);
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  text::write_file(path, serialize_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const auto lines = text::read_lines(path);
  std::string content;
  for (const auto& l : lines) content += l + "\n";
  return parse_checkpoint(content, path);
}

}  // namespace fvlink

#include "authid/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "authid/digest.hpp"
#include "authid/error.hpp"
#include "authid/rng.hpp"
#include "authid/text.hpp"

namespace authid {

namespace fs = std::filesystem;

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train:
      return "train";
    case Split::test:
      return "test";
    case Split::unassigned:
      break;
  }
  return "unassigned";
}

// --- LabelIndex --------------------------------------------------------------

LabelIndex::LabelIndex(std::vector<std::string> labels) : labels_(std::move(labels)) {
  std::sort(labels_.begin(), labels_.end());
  labels_.erase(std::unique(labels_.begin(), labels_.end()), labels_.end());
}

std::optional<std::size_t> LabelIndex::find(std::string_view label) const noexcept {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
  if (it == labels_.end() || *it != label) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

std::size_t LabelIndex::index_of(std::string_view label) const {
  if (auto i = find(label)) return *i;
  throw CorpusError("unknown label: " + std::string(label));
}

std::uint64_t LabelIndex::digest() const noexcept {
  Digest d;
  for (const auto& l : labels_) {
    d.update(l);
    d.update(std::string_view("\0", 1));
  }
  return d.value();
}

// --- SegmentSet --------------------------------------------------------------

std::vector<std::size_t> SegmentSet::label_indices() const {
  std::vector<std::size_t> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(labels.index_of(r.label));
  return out;
}

SegmentSet SegmentSet::subset(Split split) const {
  SegmentSet out;
  out.labels = labels;
  for (const auto& r : records)
    if (r.split == split) out.records.push_back(r);
  return out;
}

std::string ScanReport::to_jsonl() const {
  std::string out;
  for (const auto& e : skipped) {
    out += nlohmann::json{{"path", e.path}, {"reason", e.reason}}.dump();
    out += '\n';
  }
  return out;
}

// --- scanning ----------------------------------------------------------------

namespace {

std::optional<std::string> read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) return std::nullopt;
  return bytes;
}

// Adds a record for `path` unless it is unreadable or empty.
void ingest(const fs::path& path, std::string id, const std::string& label, std::vector<SegmentRecord>& out,
            ScanReport* report) {
  auto skip = [&](std::string reason) {
    if (report) report->skipped.push_back({path.generic_string(), std::move(reason)});
  };
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    skip("not a readable regular file");
    return;
  }
  auto bytes = read_text_file(path);
  if (!bytes) {
    skip("unreadable");
    return;
  }
  if (bytes->empty()) {
    skip("empty file");
    return;
  }
  out.push_back(SegmentRecord{std::move(id), path, decode_utf8(*bytes), label, Split::unassigned});
}

bool escapes_root(const fs::path& relative) {
  if (relative.empty() || relative.is_absolute() || relative.has_root_name()) return true;
  auto normal = relative.lexically_normal();
  return normal.empty() || *normal.begin() == "..";
}

}  // namespace

SegmentSet scan_corpus(const fs::path& root, const std::optional<fs::path>& manifest, ScanReport* report) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw CorpusError("corpus root does not exist or is not a directory: " +
                                                     root.string());

  std::vector<SegmentRecord> records;
  std::set<std::string> declared;

  if (manifest) {
    std::ifstream in(*manifest, std::ios::binary);
    if (!in) throw CorpusError("cannot open manifest: " + manifest->string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
        throw CorpusError("manifest line " + std::to_string(line_no) + ": expected <path>\\t<label>");
      fs::path relative = fs::path(line.substr(0, tab));
      std::string label = line.substr(tab + 1);
      if (escapes_root(relative))
        throw CorpusError("manifest line " + std::to_string(line_no) + ": path does not resolve under root: " +
                          relative.generic_string());
      declared.insert(label);
      ingest(root / relative, relative.lexically_normal().generic_string(), label, records, report);
    }
  } else {
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.is_directory()) class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    for (const auto& dir : class_dirs) {
      std::string label = dir.filename().string();
      declared.insert(label);
      std::vector<fs::path> files;
      for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (!entry.is_directory()) files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) ingest(f, f.lexically_relative(root).generic_string(), label, records, report);
    }
  }

  std::map<std::string, std::size_t> per_label;
  for (const auto& r : records) ++per_label[r.label];
  for (const auto& label : declared)
    if (per_label[label] == 0) throw CorpusError("zero segments for label " + label);

  std::sort(records.begin(), records.end(), [](const SegmentRecord& a, const SegmentRecord& b) {
    return std::tie(a.label, a.id) < std::tie(b.label, b.id);
  });

  SegmentSet set;
  set.labels = LabelIndex(std::vector<std::string>(declared.begin(), declared.end()));
  set.records = std::move(records);
  return set;
}

// --- splitting ---------------------------------------------------------------

std::size_t stratified_train_count(std::size_t n_class, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train fraction must be in (0,1), got " + std::to_string(train_fraction));
  if (n_class < 2) throw CorpusError("a class needs at least 2 segments to split");
  auto n = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n_class) + 0.5));
  return std::clamp<std::size_t>(n, 1, n_class - 1);
}

std::vector<Split> stratified_split(std::span<const std::size_t> label_indices, std::size_t n_classes,
                                    double train_fraction, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> members(n_classes);
  for (std::size_t i = 0; i < label_indices.size(); ++i) {
    if (label_indices[i] >= n_classes) throw CorpusError("label index out of range");
    members[label_indices[i]].push_back(i);
  }
  std::vector<Split> out(label_indices.size(), Split::unassigned);
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& m = members[c];
    if (m.size() < 2)
      throw CorpusError("class " + std::to_string(c) + " has " + std::to_string(m.size()) +
                        " segment(s); at least 2 are needed to split");
    std::size_t n_train = stratified_train_count(m.size(), train_fraction);
    Rng rng(derive_seed(seed, c));
    rng.shuffle(std::span<std::size_t>(m));
    for (std::size_t k = 0; k < m.size(); ++k) out[m[k]] = k < n_train ? Split::train : Split::test;
  }
  return out;
}

SegmentSet split_dataset(SegmentSet segments, double train_fraction, std::uint64_t seed) {
  auto labels = segments.label_indices();
  std::vector<std::size_t> counts(segments.labels.size(), 0);
  for (auto l : labels) ++counts[l];
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] < 2)
      throw CorpusError("class " + segments.labels.label(c) + " has " + std::to_string(counts[c]) +
                        " segment(s); at least 2 are needed to split");
  auto splits = stratified_split(labels, segments.labels.size(), train_fraction, seed);
  for (std::size_t i = 0; i < splits.size(); ++i) segments.records[i].split = splits[i];
  return segments;
}

// --- synthetic corpora -------------------------------------------------------

ClassStyle default_style(std::size_t index) {
  static constexpr int kIndents[] = {2, 4, 8, 3};
  static constexpr double kComment[] = {0.05, 0.35};
  static constexpr double kUnderscore[] = {0.1, 0.6};
  ClassStyle s;
  s.mean_line_length = 28.0 + 7.0 * static_cast<double>(index);
  s.identifier_length_mean = 3.0 + 1.25 * static_cast<double>(index);
  s.identifier_length_stddev = 1.0 + 0.25 * static_cast<double>(index % 3);
  s.indent_width = kIndents[index % 4];
  s.comment_rate = kComment[(index / 4) % 2];
  s.underscore_rate = kUnderscore[(index / 2) % 2];
  return s;
}

int style_difference(const ClassStyle& a, const ClassStyle& b) noexcept {
  int d = 0;
  d += a.mean_line_length != b.mean_line_length;
  d += a.comment_rate != b.comment_rate;
  d += a.underscore_rate != b.underscore_rate;
  d += a.indent_width != b.indent_width;
  d += (a.identifier_length_mean != b.identifier_length_mean ||
        a.identifier_length_stddev != b.identifier_length_stddev);
  return d;
}

void validate(const SyntheticSpec& spec) {
  if (spec.n_classes < 1) throw ConfigError("synthetic spec: n_classes must be positive");
  if (spec.segments_per_class < 1) throw ConfigError("synthetic spec: segments_per_class must be positive");
  if (!(spec.lines_per_segment > 0.0)) throw ConfigError("synthetic spec: lines_per_segment must be positive");
  if (!spec.styles.empty() && spec.styles.size() != static_cast<std::size_t>(spec.n_classes))
    throw ConfigError("synthetic spec: " + std::to_string(spec.styles.size()) + " styles given for " +
                      std::to_string(spec.n_classes) + " classes");
  std::vector<ClassStyle> styles = spec.styles;
  if (styles.empty())
    for (int i = 0; i < spec.n_classes; ++i) styles.push_back(default_style(static_cast<std::size_t>(i)));
  for (std::size_t i = 0; i < styles.size(); ++i) {
    const auto& s = styles[i];
    auto where = "synthetic spec: class " + std::to_string(i) + ": ";
    if (!(s.comment_rate >= 0.0 && s.comment_rate <= 1.0)) throw ConfigError(where + "comment_rate outside [0,1]");
    if (!(s.underscore_rate >= 0.0 && s.underscore_rate <= 1.0))
      throw ConfigError(where + "underscore_rate outside [0,1]");
    if (!(s.mean_line_length > 0.0)) throw ConfigError(where + "mean_line_length must be positive");
    if (!(s.identifier_length_mean > 0.0)) throw ConfigError(where + "identifier_length_mean must be positive");
    if (!(s.identifier_length_stddev >= 0.0)) throw ConfigError(where + "identifier_length_stddev must be >= 0");
    if (s.indent_width < 1) throw ConfigError(where + "indent_width must be positive");
    for (std::size_t j = 0; j < i; ++j)
      if (style_difference(styles[j], s) < 2)
        throw ConfigError("synthetic spec: classes " + std::to_string(j) + " and " + std::to_string(i) +
                          " have duplicate style parameters (must differ in at least 2 dimensions)");
  }
}

namespace {

// Emits Python-looking code whose surface statistics follow a ClassStyle.
class SegmentWriter {
 public:
  SegmentWriter(const ClassStyle& style, std::uint64_t seed) : style_(style), rng_(seed) {}

  SyntheticSegment write(double lines_per_segment) {
    const auto target =
        static_cast<std::size_t>(std::max(4.0, std::round(rng_.uniform(0.6, 1.4) * lines_per_segment)));
    if (rng_.bernoulli(0.5)) import_line();
    while (lines_ < target) {
      double r = rng_.uniform();
      if (r < 0.55) {
        function(0);
      } else if (r < 0.8) {
        statement(0);
      } else {
        conditional(0);
      }
      if (lines_ < target && rng_.bernoulli(0.4)) blank();
    }
    return {std::move(text_), lines_};
  }

 private:
  void emit(int level, const std::string& body) {
    text_.append(static_cast<std::size_t>(level * style_.indent_width), U' ');
    for (char c : body) text_.push_back(static_cast<unsigned char>(c));
    text_.push_back(U'\n');
    ++lines_;
  }
  void blank() {
    text_.push_back(U'\n');
    ++lines_;
  }

  std::string word(std::size_t len) {
    std::string w;
    for (std::size_t i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng_.below(26)));
    return w;
  }

  std::string identifier() {
    double l = std::round(rng_.normal(style_.identifier_length_mean, style_.identifier_length_stddev));
    auto len = static_cast<std::size_t>(std::clamp(l, 1.0, 40.0));
    std::string id = word(len);
    if (len >= 3 && rng_.bernoulli(style_.underscore_rate)) {
      std::size_t n = rng_.bernoulli(0.3) && len >= 5 ? 2 : 1;
      for (std::size_t k = 0; k < n; ++k) id[1 + rng_.below(len - 2)] = '_';
    }
    return id;
  }

  std::string comment_text() {
    std::string s;
    std::size_t words = 2 + rng_.below(6);
    for (std::size_t i = 0; i < words; ++i) {
      if (i) s += ' ';
      s += word(2 + rng_.below(7));
    }
    return s;
  }

  void maybe_comment(int level) {
    if (rng_.bernoulli(style_.comment_rate)) emit(level, "# " + comment_text());
  }

  // Expression grown until the whole line reaches a sampled target length.
  std::string expression(std::size_t prefix_len) {
    double target = std::clamp(rng_.normal(style_.mean_line_length, style_.mean_line_length * 0.2), 8.0, 240.0);
    std::string e = term();
    static constexpr const char* kOps[] = {" + ", " - ", " * ", " / "};
    while (static_cast<double>(prefix_len + e.size()) < target) e += kOps[rng_.below(4)] + term();
    return e;
  }

  std::string term() {
    double r = rng_.uniform();
    if (r < 0.6) return identifier();
    if (r < 0.8) return std::to_string(rng_.below(1000));
    return identifier() + "(" + identifier() + ")";
  }

  void import_line() { emit(0, "import " + identifier()); }

  void statement(int level) {
    maybe_comment(level);
    std::string lhs = identifier() + " = ";
    std::size_t prefix = static_cast<std::size_t>(level * style_.indent_width) + lhs.size();
    emit(level, lhs + expression(prefix));
  }

  void conditional(int level) {
    maybe_comment(level);
    std::string head = "if " + identifier() + " > " + std::to_string(rng_.below(100)) + ":";
    emit(level, head);
    std::size_t n = 1 + rng_.below(2);
    for (std::size_t i = 0; i < n; ++i) statement(level + 1);
  }

  void function(int level) {
    maybe_comment(level);
    std::string head = "def " + identifier() + "(";
    std::size_t n_args = rng_.below(4);
    for (std::size_t i = 0; i < n_args; ++i) head += (i ? ", " : "") + identifier();
    emit(level, head + "):");
    if (rng_.bernoulli(style_.comment_rate)) emit(level + 1, "\"\"\"" + comment_text() + ".\"\"\"");
    std::size_t body = 2 + rng_.below(5);
    for (std::size_t i = 0; i < body; ++i) {
      if (rng_.bernoulli(0.2)) {
        conditional(level + 1);
      } else {
        statement(level + 1);
      }
    }
    std::string ret = "return ";
    emit(level + 1, ret + expression(static_cast<std::size_t>((level + 1) * style_.indent_width) + ret.size()));
  }

  const ClassStyle& style_;
  Rng rng_;
  std::u32string text_;
  std::size_t lines_ = 0;
};

std::string class_label(int index) {
  std::ostringstream os;
  os << "author_" << (index < 10 ? "0" : "") << index;
  return os.str();
}

}  // namespace

SyntheticSegment generate_segment(const ClassStyle& style, double lines_per_segment, std::uint64_t seed) {
  return SegmentWriter(style, seed).write(lines_per_segment);
}

SegmentSet generate_synthetic_corpus(const SyntheticSpec& spec) {
  validate(spec);
  SegmentSet set;
  std::vector<std::string> labels;
  for (int c = 0; c < spec.n_classes; ++c) {
    const ClassStyle style = spec.styles.empty() ? default_style(static_cast<std::size_t>(c))
                                                 : spec.styles[static_cast<std::size_t>(c)];
    std::string label = class_label(c);
    labels.push_back(label);
    for (int s = 0; s < spec.segments_per_class; ++s) {
      std::uint64_t seed = derive_seed(spec.seed, (static_cast<std::uint64_t>(c) << 32) | static_cast<std::uint32_t>(s));
      auto seg = generate_segment(style, spec.lines_per_segment, seed);
      std::string name = std::to_string(s);
      name.insert(0, name.size() < 3 ? 3 - name.size() : 0, '0');
      std::string id = label + "/seg_" + name + ".py";
      set.records.push_back(SegmentRecord{id, fs::path(id), std::move(seg.text), label, Split::unassigned});
    }
  }
  set.labels = LabelIndex(std::move(labels));
  std::sort(set.records.begin(), set.records.end(), [](const SegmentRecord& a, const SegmentRecord& b) {
    return std::tie(a.label, a.id) < std::tie(b.label, b.id);
  });
  return set;
}

void write_corpus(const SegmentSet& segments, const fs::path& dir) {
  for (const auto& r : segments.records) {
    fs::path out = dir / fs::path(r.id);
    fs::create_directories(out.parent_path());
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + out.string());
    auto bytes = encode_utf8(r.text);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("cannot write " + out.string());
  }
}

}  // namespace authid

#include "authid/metrics.hpp"

#include <algorithm>

#include "authid/binary_io.hpp"
#include "authid/digest.hpp"
#include "authid/parallel.hpp"
#include "authid/text.hpp"

namespace authid {

std::string_view metric_name(Metric metric) noexcept {
  switch (metric) {
    case Metric::line_length:
      return "line_length";
    case Metric::line_words:
      return "line_words";
    case Metric::comment_kind:
      return "comment_kind";
    case Metric::identifier_length:
      return "identifier_length";
    case Metric::inline_whitespace:
      return "inline_whitespace";
    case Metric::trailing_whitespace:
      return "trailing_whitespace";
    case Metric::indent_whitespace:
      return "indent_whitespace";
    case Metric::underscores:
      return "underscores";
  }
  return "unknown";
}

// --- profiles ----------------------------------------------------------------

CommentProfile CommentProfile::python() {
  CommentProfile p;
  p.name = "python";
  p.line_comment = U"#";
  p.blocks = {{U"\"\"\"", U"\"\"\""}, {U"'''", U"'''"}};
  p.string_quotes = U"\"'";
  return p;
}

CommentProfile CommentProfile::c_family() {
  CommentProfile p;
  p.name = "c_family";
  p.line_comment = U"//";
  p.blocks = {{U"/*", U"*/"}};
  p.doc_prefix = U"/**";
  p.string_quotes = U"\"'";
  return p;
}

std::uint64_t CommentProfile::digest() const {
  Digest d;
  auto add = [&](std::u32string_view s) {
    d.update(encode_utf8(s));
    d.update(std::string_view("\0", 1));
  };
  d.update(name);
  d.update(std::string_view("\0", 1));
  add(line_comment);
  for (const auto& b : blocks) {
    add(b.open);
    add(b.close);
  }
  add(doc_prefix);
  add(string_quotes);
  add(std::u32string(1, escape));
  for (const auto& k : keywords) add(k);
  return d.value();
}

CommentProfile profile_for_extension(std::string_view extension) {
  if (!extension.empty() && extension.front() == '.') extension.remove_prefix(1);
  static constexpr std::string_view kCFamily[] = {"c", "h", "cc", "cpp", "cxx", "hpp", "hh", "java",
                                                  "js", "ts", "cs", "go", "rs", "kt", "swift", "scala"};
  for (auto e : kCFamily)
    if (extension == e) return CommentProfile::c_family();
  return CommentProfile::python();
}

// --- line-based metrics --------------------------------------------------------

namespace {

constexpr bool is_space(char32_t c) noexcept { return c == U' ' || c == U'\t' || c == U'\f' || c == U'\v'; }

constexpr bool is_ident_char(char32_t c) noexcept {
  return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9') || c == U'_' ||
         (c >= 0x80 && c != kReplacementChar);
}

constexpr bool is_digit(char32_t c) noexcept { return c >= U'0' && c <= U'9'; }

bool starts_with_at(std::u32string_view text, std::size_t pos, std::u32string_view prefix) noexcept {
  return !prefix.empty() && text.substr(pos, prefix.size()) == prefix;
}

}  // namespace

std::vector<std::u32string_view> split_lines(std::u32string_view text) {
  std::vector<std::u32string_view> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char32_t c = text[i];
    if (c == U'\n' || c == U'\r') {
      lines.push_back(text.substr(start, i - start));
      if (c == U'\r' && i + 1 < text.size() && text[i + 1] == U'\n') ++i;
      start = i + 1;
    }
  }
  if (start < text.size()) lines.push_back(text.substr(start));
  return lines;
}

LineMetrics line_metrics(std::u32string_view text) {
  LineMetrics m;
  for (auto line : split_lines(text)) {
    m.lengths.push_back(static_cast<std::uint32_t>(line.size()));
    std::uint32_t words = 0;
    bool in_word = false;
    for (char32_t c : line) {
      if (is_space(c)) {
        in_word = false;
      } else if (!in_word) {
        in_word = true;
        ++words;
      }
    }
    m.words.push_back(words);
  }
  return m;
}

WhitespaceMetrics whitespace_metrics(std::u32string_view text) {
  WhitespaceMetrics m;
  for (auto line : split_lines(text)) {
    auto first = std::find_if_not(line.begin(), line.end(), is_space);
    if (first == line.end()) continue;
    auto last = std::find_if_not(line.rbegin(), line.rend(), is_space).base();
    m.indent_ws.push_back(static_cast<std::uint32_t>(first - line.begin()));
    m.trailing_ws.push_back(static_cast<std::uint32_t>(line.end() - last));
    m.inline_ws.push_back(static_cast<std::uint32_t>(std::count_if(first, last, is_space)));
  }
  return m;
}

// --- lexical masking -----------------------------------------------------------

namespace {

struct CommentEvent {
  std::size_t line;
  CommentKind kind;
};

struct LexResult {
  std::vector<bool> masked;  // inside a comment or string literal
  std::vector<CommentEvent> events;
  std::size_t unterminated_blocks = 0;
  std::size_t total_lines = 0;
};

LexResult lex(std::u32string_view text, const CommentProfile& profile) {
  const std::size_t n = text.size();
  LexResult r;
  r.masked.assign(n, false);

  // Logical line of every character; terminators belong to the line they end.
  std::vector<std::size_t> line_of(n);
  std::vector<std::size_t> line_start{0};
  for (std::size_t i = 0, cur = 0; i < n; ++i) {
    line_of[i] = cur;
    char32_t c = text[i];
    if (c == U'\n' || (c == U'\r' && !(i + 1 < n && text[i + 1] == U'\n'))) {
      ++cur;
      line_start.push_back(i + 1);
    }
  }
  r.total_lines = split_lines(text).size();

  auto blocks = profile.blocks;
  std::stable_sort(blocks.begin(), blocks.end(),
                   [](const auto& a, const auto& b) { return a.open.size() > b.open.size(); });
  auto is_break = [](char32_t c) { return c == U'\n' || c == U'\r'; };
  auto mask = [&](std::size_t from, std::size_t to) {
    for (std::size_t k = from; k < to; ++k) r.masked[k] = true;
  };

  std::size_t i = 0;
  while (i < n) {
    const CommentProfile::Delimiters* block = nullptr;
    for (const auto& b : blocks)
      if (starts_with_at(text, i, b.open)) {
        block = &b;
        break;
      }
    if (block) {
      const std::size_t line = line_of[i];
      CommentKind kind;
      if (!profile.doc_prefix.empty()) {
        kind = starts_with_at(text, i, profile.doc_prefix) ? CommentKind::doc : CommentKind::block;
      } else {
        auto before = text.substr(line_start[line], i - line_start[line]);
        kind = std::all_of(before.begin(), before.end(), is_space) ? CommentKind::doc : CommentKind::block;
      }
      r.events.push_back({line, kind});
      auto close = text.find(block->close, i + block->open.size());
      std::size_t end = close == std::u32string_view::npos ? n : close + block->close.size();
      if (close == std::u32string_view::npos) ++r.unterminated_blocks;
      mask(i, end);
      i = end;
      continue;
    }
    if (starts_with_at(text, i, profile.line_comment)) {
      r.events.push_back({line_of[i], CommentKind::line});
      std::size_t end = i;
      while (end < n && !is_break(text[end])) ++end;
      mask(i, end);
      i = end;
      continue;
    }
    if (profile.string_quotes.find(text[i]) != std::u32string::npos) {
      const char32_t quote = text[i];
      std::size_t end = i + 1;
      while (end < n && !is_break(text[end])) {
        if (text[end] == profile.escape && end + 1 < n && !is_break(text[end + 1])) {
          end += 2;
          continue;
        }
        if (text[end++] == quote) break;
      }
      mask(i, end);
      i = end;
      continue;
    }
    ++i;
  }
  return r;
}

}  // namespace

double CommentStats::frequency(CommentKind kind) const noexcept {
  if (total_lines == 0) return 0.0;
  return static_cast<double>(count(kind)) / static_cast<double>(total_lines);
}

CommentStats comment_frequency(std::u32string_view text, const CommentProfile& profile) {
  auto lexed = lex(text, profile);
  CommentStats s;
  s.total_lines = lexed.total_lines;
  s.unterminated_blocks = lexed.unterminated_blocks;
  s.line_kinds.assign(s.total_lines, 0);
  for (const auto& e : lexed.events) {
    ++s.counts[static_cast<std::size_t>(e.kind) - 1];
    if (e.line < s.line_kinds.size() && s.line_kinds[e.line] == 0) s.line_kinds[e.line] = static_cast<std::uint32_t>(e.kind);
  }
  return s;
}

namespace {

IdentifierMetrics identifiers_from(std::u32string_view text, const std::vector<bool>& masked,
                                   const CommentProfile& profile) {
  IdentifierMetrics m;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (masked[i] || !is_ident_char(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && !masked[j] && is_ident_char(text[j])) ++j;
    auto token = text.substr(i, j - i);
    bool keyword = std::find(profile.keywords.begin(), profile.keywords.end(), token) != profile.keywords.end();
    if (!is_digit(token.front()) && !keyword) {
      m.lengths.push_back(static_cast<std::uint32_t>(token.size()));
      m.underscores.push_back(static_cast<std::uint32_t>(std::count(token.begin(), token.end(), U'_')));
    }
    i = j;
  }
  return m;
}

}  // namespace

IdentifierMetrics identifier_metrics(std::u32string_view text, const CommentProfile& profile) {
  return identifiers_from(text, lex(text, profile).masked, profile);
}

MetricObservations extract_metrics(std::u32string_view text, const CommentProfile& profile) {
  MetricObservations obs;
  auto lines = line_metrics(text);
  obs.line_lengths = std::move(lines.lengths);
  obs.line_words = std::move(lines.words);

  auto lexed = lex(text, profile);
  obs.comment_kinds.assign(lexed.total_lines, 0);
  for (const auto& e : lexed.events)
    if (e.line < obs.comment_kinds.size() && obs.comment_kinds[e.line] == 0)
      obs.comment_kinds[e.line] = static_cast<std::uint32_t>(e.kind);

  auto ids = identifiers_from(text, lexed.masked, profile);
  obs.identifier_lengths = std::move(ids.lengths);
  obs.underscore_counts = std::move(ids.underscores);

  auto ws = whitespace_metrics(text);
  obs.inline_ws = std::move(ws.inline_ws);
  obs.trail_ws = std::move(ws.trailing_ws);
  obs.indent_ws = std::move(ws.indent_ws);
  return obs;
}

std::span<const std::uint32_t> MetricObservations::of(Metric metric) const noexcept {
  switch (metric) {
    case Metric::line_length:
      return line_lengths;
    case Metric::line_words:
      return line_words;
    case Metric::comment_kind:
      return comment_kinds;
    case Metric::identifier_length:
      return identifier_lengths;
    case Metric::inline_whitespace:
      return inline_ws;
    case Metric::trailing_whitespace:
      return trail_ws;
    case Metric::indent_whitespace:
      return indent_ws;
    case Metric::underscores:
      return underscore_counts;
  }
  return {};
}

// --- vectorization ---------------------------------------------------------------

std::size_t BinningConfig::dimension() const noexcept {
  std::size_t d = 0;
  for (auto b : bins) d += b;
  return d;
}

std::size_t BinningConfig::offset(Metric metric) const noexcept {
  std::size_t off = 0;
  for (std::size_t m = 0; m < static_cast<std::size_t>(metric); ++m) off += bins[m];
  return off;
}

std::uint64_t BinningConfig::digest() const {
  BinaryWriter w;
  w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("binning-v1"), 10));
  for (auto b : bins) w.u32(b);
  w.u8(static_cast<std::uint8_t>(normalization));
  return Digest{}.update(w.bytes()).value();
}

void BinningConfig::validate() const {
  for (std::size_t m = 0; m < kMetricCount; ++m)
    if (bins[m] < 2)
      throw ConfigError("bin count for metric " + std::string(metric_name(static_cast<Metric>(m))) +
                        " must be >= 2, got " + std::to_string(bins[m]));
}

FeatureVector vectorize(const MetricObservations& obs, const BinningConfig& config) {
  config.validate();
  FeatureVector v(config.dimension(), 0.0);
  std::size_t offset = 0;
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    const std::uint32_t bins = config.bins[m];
    auto values = obs.of(static_cast<Metric>(m));
    for (auto x : values) v[offset + std::min(x, bins - 1)] += 1.0;
    if (config.normalization == Normalization::relative_frequency && !values.empty()) {
      const double total = static_cast<double>(values.size());
      for (std::uint32_t b = 0; b < bins; ++b) v[offset + b] /= total;
    }
    offset += bins;
  }
  return v;
}

FeatureMatrix featurize(const SegmentSet& segments, const BinningConfig& config, const CommentProfile& profile,
                        unsigned jobs) {
  config.validate();
  FeatureMatrix out(segments.size(), config.dimension());
  parallel_for(segments.size(), jobs, [&](std::size_t i) {
    auto v = vectorize(extract_metrics(segments.records[i].text, profile), config);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  });
  return out;
}

// --- feature cache ---------------------------------------------------------------

namespace {

constexpr std::uint8_t kCacheMagic[8] = {'A', 'I', 'D', 'F', 'E', 'A', 'T', 0};

}  // namespace

std::vector<std::uint8_t> encode_feature_cache(const FeatureCache& cache) {
  const std::size_t n = cache.features.rows();
  if (cache.ids.size() != n || cache.label_indices.size() != n)
    throw Error("feature cache: ids, labels and feature rows differ in count");
  if (n > 0 && cache.features.cols() != cache.binning.dimension())
    throw DimensionError(cache.binning.dimension(), cache.features.cols());

  BinaryWriter w;
  w.raw(kCacheMagic);
  w.u32(kFeatureCacheVersion);
  w.u64(cache.binning.digest());
  for (auto b : cache.binning.bins) w.u32(b);
  w.u8(static_cast<std::uint8_t>(cache.binning.normalization));
  w.u64(cache.labels.size());
  for (const auto& l : cache.labels.labels()) w.str(l);
  w.u64(n);
  w.u64(cache.binning.dimension());
  for (std::size_t i = 0; i < n; ++i) {
    w.str(cache.ids[i]);
    w.u32(cache.label_indices[i]);
    for (double x : cache.features.row(i)) w.f64(x);
  }
  auto bytes = std::move(w).take();
  append_crc32(bytes);
  return bytes;
}

void save_feature_cache(const std::filesystem::path& path, const FeatureCache& cache) {
  write_file_bytes(path.string(), encode_feature_cache(cache));
}

std::optional<FeatureCache> load_feature_cache(const std::filesystem::path& path, const BinningConfig& expected) {
  auto bytes = read_file_bytes(path.string());
  BinaryReader r(bytes);
  auto magic = r.raw(sizeof kCacheMagic);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kCacheMagic)))
    throw FormatError("not a feature cache file (bad magic): " + path.string());
  if (auto v = r.u32(); v != kFeatureCacheVersion) throw VersionError(v, kFeatureCacheVersion);
  if (!crc32_matches(bytes)) throw FormatError("feature cache checksum mismatch: " + path.string());

  if (r.u64() != expected.digest()) return std::nullopt;
  FeatureCache c;
  for (auto& b : c.binning.bins) b = r.u32();
  c.binning.normalization = static_cast<Normalization>(r.u8());
  if (c.binning.digest() != expected.digest()) throw FormatError("feature cache header inconsistent with its digest");
  std::vector<std::string> labels(r.u64());
  for (auto& l : labels) l = r.str();
  c.labels = LabelIndex(std::move(labels));
  const std::uint64_t n = r.u64();
  const std::uint64_t dim = r.u64();
  if (dim != c.binning.dimension()) throw FormatError("feature cache dimension does not match its binning");
  if (n > r.remaining()) throw FormatError("truncated feature cache");
  c.features = FeatureMatrix(0, dim);
  std::vector<double> row(dim);
  for (std::uint64_t i = 0; i < n; ++i) {
    c.ids.push_back(r.str());
    auto label = r.u32();
    if (label >= c.labels.size()) throw FormatError("feature cache label index out of range");
    c.label_indices.push_back(label);
    for (auto& x : row) x = r.f64();
    c.features.append_row(row);
  }
  if (r.remaining() != 4) throw FormatError("feature cache has trailing bytes");
  return c;
}

}  // namespace authid

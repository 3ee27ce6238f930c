#pragma once

// Language-independent code metrics and their histogram feature vectors.
//
// Eight metrics are extracted per segment: line length, words per line,
// comment kind, identifier length, inline / trailing / indentation whitespace
// and underscores per identifier. Each becomes a fixed-width histogram block
// (last bin collects overflow); the blocks are concatenated in Metric order.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "authid/corpus.hpp"
#include "authid/matrix.hpp"

namespace authid {

enum class Metric : std::size_t {
  line_length,
  line_words,
  comment_kind,
  identifier_length,
  inline_whitespace,
  trailing_whitespace,
  indent_whitespace,
  underscores,
};
inline constexpr std::size_t kMetricCount = 8;

std::string_view metric_name(Metric metric) noexcept;

enum class CommentKind : std::uint8_t { line = 1, block = 2, doc = 3 };

// Syntax needed to find comments and string literals. Everything else about
// the language is ignored.
struct CommentProfile {
  struct Delimiters {
    std::u32string open;
    std::u32string close;
  };

  std::string name;
  std::u32string line_comment;
  std::vector<Delimiters> blocks;
  // When set, a block opening with this prefix is a doc-comment. When empty, a
  // block is a doc-comment iff only whitespace precedes it on its line.
  std::u32string doc_prefix;
  std::u32string string_quotes;
  char32_t escape = U'\\';
  // Tokens never counted as identifiers.
  std::vector<std::u32string> keywords;

  std::uint64_t digest() const;

  // '#' comments, triple-quoted blocks, '"' and '\'' strings, no keywords.
  static CommentProfile python();
  // '//' comments, '/* */' blocks, '/**' doc blocks, '"' and '\'' strings.
  static CommentProfile c_family();
};

// Profile keyed by file extension (with or without the dot); unknown
// extensions get the Python profile.
CommentProfile profile_for_extension(std::string_view extension);

// Logical lines of `text`; LF, CRLF and CR all terminate a line and a final
// terminator does not start an extra empty line.
std::vector<std::u32string_view> split_lines(std::u32string_view text);

struct LineMetrics {
  std::vector<std::uint32_t> lengths;
  std::vector<std::uint32_t> words;
};
LineMetrics line_metrics(std::u32string_view text);

struct CommentStats {
  std::array<std::size_t, 3> counts{};  // indexed by CommentKind - 1
  std::size_t total_lines = 0;
  std::size_t unterminated_blocks = 0;
  // Per line: 0, or the CommentKind of the first comment starting on it.
  std::vector<std::uint32_t> line_kinds;

  std::size_t count(CommentKind kind) const noexcept { return counts[static_cast<std::size_t>(kind) - 1]; }
  // count_k / total_lines, 0 for an empty text.
  double frequency(CommentKind kind) const noexcept;
};
CommentStats comment_frequency(std::u32string_view text, const CommentProfile& profile);

struct IdentifierMetrics {
  std::vector<std::uint32_t> lengths;
  std::vector<std::uint32_t> underscores;
};
// One observation per identifier occurrence outside comments and strings.
IdentifierMetrics identifier_metrics(std::u32string_view text, const CommentProfile& profile);

struct WhitespaceMetrics {
  std::vector<std::uint32_t> inline_ws;
  std::vector<std::uint32_t> trailing_ws;
  std::vector<std::uint32_t> indent_ws;
};
// Observations only for lines containing a non-whitespace character.
WhitespaceMetrics whitespace_metrics(std::u32string_view text);

struct MetricObservations {
  std::vector<std::uint32_t> line_lengths;
  std::vector<std::uint32_t> line_words;
  std::vector<std::uint32_t> comment_kinds;
  std::vector<std::uint32_t> identifier_lengths;
  std::vector<std::uint32_t> inline_ws;
  std::vector<std::uint32_t> trail_ws;
  std::vector<std::uint32_t> indent_ws;
  std::vector<std::uint32_t> underscore_counts;

  std::span<const std::uint32_t> of(Metric metric) const noexcept;
};

MetricObservations extract_metrics(std::u32string_view text, const CommentProfile& profile);

enum class Normalization : std::uint8_t { relative_frequency, raw_count };

struct BinningConfig {
  std::array<std::uint32_t, kMetricCount> bins;
  Normalization normalization = Normalization::relative_frequency;

  BinningConfig() { bins.fill(20); }

  std::size_t dimension() const noexcept;
  std::size_t offset(Metric metric) const noexcept;
  std::uint64_t digest() const;
  // Throws ConfigError unless every bin count is >= 2.
  void validate() const;

  friend bool operator==(const BinningConfig&, const BinningConfig&) = default;
};

// Histogram per metric, value v in bin min(v, B-1), blocks concatenated.
FeatureVector vectorize(const MetricObservations& obs, const BinningConfig& config);

// Extract + vectorize every record; row i belongs to segments.records[i].
FeatureMatrix featurize(const SegmentSet& segments, const BinningConfig& config, const CommentProfile& profile,
                        unsigned jobs = 1);

// --- feature cache file ------------------------------------------------------

inline constexpr std::uint32_t kFeatureCacheVersion = 1;

struct FeatureCache {
  BinningConfig binning;
  LabelIndex labels;
  std::vector<std::string> ids;
  std::vector<std::uint32_t> label_indices;
  FeatureMatrix features;
};

std::vector<std::uint8_t> encode_feature_cache(const FeatureCache& cache);
void save_feature_cache(const std::filesystem::path& path, const FeatureCache& cache);
// nullopt when the stored BinningConfig digest differs from `expected` (the
// cache is stale). Throws FormatError / VersionError on corrupt input.
std::optional<FeatureCache> load_feature_cache(const std::filesystem::path& path, const BinningConfig& expected);

}  // namespace authid

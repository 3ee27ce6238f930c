#pragma once

// Labeled source-code segments: ingestion from disk, stratified splitting and
// a synthetic style-controlled generator used as a stand-in corpus.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace authid {

enum class Split : std::uint8_t { unassigned, train, test };

std::string_view to_string(Split split) noexcept;

// Sorted, distinct class labels; a label's position is its class index.
class LabelIndex {
 public:
  LabelIndex() = default;
  // Sorts and deduplicates.
  explicit LabelIndex(std::vector<std::string> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  const std::string& label(std::size_t index) const { return labels_.at(index); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::optional<std::size_t> find(std::string_view label) const noexcept;
  // Throws CorpusError for an unknown label.
  std::size_t index_of(std::string_view label) const;

  std::uint64_t digest() const noexcept;

  friend bool operator==(const LabelIndex&, const LabelIndex&) = default;

 private:
  std::vector<std::string> labels_;
};

struct SegmentRecord {
  std::string id;               // path relative to the corpus root, '/'-separated
  std::filesystem::path path;   // as found on disk (or the synthetic relative path)
  std::u32string text;
  std::string label;
  Split split = Split::unassigned;
};

struct SegmentSet {
  std::vector<SegmentRecord> records;
  LabelIndex labels;

  std::size_t size() const noexcept { return records.size(); }
  // Class index of every record, in record order.
  std::vector<std::size_t> label_indices() const;
  // Records with the given split, sharing this set's LabelIndex.
  SegmentSet subset(Split split) const;
};

// Files skipped while scanning, with the reason.
struct ScanReport {
  struct Entry {
    std::string path;
    std::string reason;
  };
  std::vector<Entry> skipped;

  // One JSON object per line: {"path": ..., "reason": ...}
  std::string to_jsonl() const;
};

// Without a manifest every immediate subdirectory of `root` is a label and each
// regular file beneath it (recursively) is a segment. With a manifest, lines are
// "<relative-path>\t<label>" and '#' starts a comment line. Unreadable or empty
// files are skipped and recorded in `report`. Throws CorpusError when root is
// missing, a manifest path escapes root, or a declared label ends up empty.
SegmentSet scan_corpus(const std::filesystem::path& root,
                       const std::optional<std::filesystem::path>& manifest = std::nullopt,
                       ScanReport* report = nullptr);

// round-half-up(fraction * n_class), clamped so that both sides get >= 1 item.
std::size_t stratified_train_count(std::size_t n_class, double train_fraction);

// Per-class seeded shuffle; the first stratified_train_count members of each
// class go to train. Throws CorpusError if a class has fewer than 2 members.
std::vector<Split> stratified_split(std::span<const std::size_t> label_indices, std::size_t n_classes,
                                    double train_fraction, std::uint64_t seed);

SegmentSet split_dataset(SegmentSet segments, double train_fraction, std::uint64_t seed);

// --- synthetic corpora -------------------------------------------------------

struct ClassStyle {
  double mean_line_length = 40.0;       // characters per statement line
  double comment_rate = 0.1;            // probability of a comment before a statement
  double underscore_rate = 0.2;         // probability an identifier contains underscores
  int indent_width = 4;                 // spaces per nesting level
  double identifier_length_mean = 6.0;
  double identifier_length_stddev = 2.0;

  friend bool operator==(const ClassStyle&, const ClassStyle&) = default;
};

struct SyntheticSpec {
  int n_classes = 2;
  int segments_per_class = 10;
  std::uint64_t seed = 0;
  double lines_per_segment = 40.0;
  // One style per class; empty means default_style(i) for class i.
  std::vector<ClassStyle> styles;
};

// Deterministic style for class `index`. Any two distinct indices differ in at
// least line length and identifier length.
ClassStyle default_style(std::size_t index);

// Number of style dimensions in which two styles differ (identifier mean and
// stddev together count as one dimension).
int style_difference(const ClassStyle& a, const ClassStyle& b) noexcept;

// Throws ConfigError when a rate is outside [0,1], a mean is non-positive, the
// style count does not match n_classes, or two classes differ in < 2 dimensions.
void validate(const SyntheticSpec& spec);

struct SyntheticSegment {
  std::u32string text;
  std::size_t line_count = 0;  // logical lines emitted
};

SyntheticSegment generate_segment(const ClassStyle& style, double lines_per_segment, std::uint64_t seed);

// Labels are "author_00", "author_01", ...; ids are "<label>/seg_000.py".
SegmentSet generate_synthetic_corpus(const SyntheticSpec& spec);

// Writes each record as UTF-8 to <dir>/<id>, creating subdirectories.
void write_corpus(const SegmentSet& segments, const std::filesystem::path& dir);

}  // namespace authid

#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "authid/error.hpp"
#include "authid/metrics.hpp"
#include "authid/rng.hpp"
#include "test_support.hpp"

using namespace authid;
using V = std::vector<std::uint32_t>;

namespace {
const CommentProfile kPy = CommentProfile::python();
}

TEST_CASE("line metrics") {
  auto m = line_metrics(U"print(1)");
  CHECK(m.lengths == V{8});
  CHECK(m.words == V{1});

  m = line_metrics(U"a bb  ccc\n");
  CHECK(m.lengths == V{9});
  CHECK(m.words == V{3});

  m = line_metrics(U"");
  CHECK(m.lengths.empty());
  CHECK(m.words.empty());
}

TEST_CASE("LF, CRLF and CR all terminate logical lines") {
  auto m = line_metrics(U"ab\r\ncde\rf\n\ng");
  CHECK(m.lengths == V{2, 3, 1, 0, 1});
  CHECK(m.words == V{1, 1, 1, 0, 1});
  CHECK(split_lines(U"x\n").size() == 1);
  CHECK(split_lines(U"\n").size() == 1);
}

TEST_CASE("comment frequency per kind") {
  auto s = comment_frequency(U"a = 1\n# x\nb = 2\nc = 3\n", kPy);
  CHECK(s.total_lines == 4);
  CHECK(s.count(CommentKind::line) == 1);
  CHECK(s.frequency(CommentKind::line) == 0.25);

  s = comment_frequency(U"a = 1\nb = 2\n", kPy);
  CHECK(s.frequency(CommentKind::line) == 0.0);
  CHECK(s.frequency(CommentKind::block) == 0.0);
  CHECK(s.frequency(CommentKind::doc) == 0.0);

  CHECK(comment_frequency(U"", kPy).frequency(CommentKind::line) == 0.0);
}

TEST_CASE("triple-quoted block opening a line is a doc-comment") {
  // 10 logical lines; the docstring spans lines 2-3 and counts once.
  const std::u32string text =
      U"def f(a):\n"
      U"    \"\"\"Compute things.\n"
      U"    More words.\"\"\"\n"
      U"    b = a + 1\n"
      U"    c = b * 2\n"
      U"    d = c - a\n"
      U"    e = d / 3\n"
      U"    g = e + b\n"
      U"    h = g\n"
      U"    return h\n";
  auto s = comment_frequency(text, kPy);
  CHECK(s.total_lines == 10);
  CHECK(s.count(CommentKind::doc) == 1);
  CHECK(s.count(CommentKind::block) == 0);
  CHECK(s.frequency(CommentKind::doc) == doctest::Approx(0.1));
  CHECK(s.line_kinds[1] == 3);
  CHECK(s.line_kinds[2] == 0);
}

TEST_CASE("triple-quoted block after code is a block comment") {
  auto s = comment_frequency(U"x = '''abc'''\n", kPy);
  CHECK(s.count(CommentKind::block) == 1);
  CHECK(s.count(CommentKind::doc) == 0);
}

TEST_CASE("unterminated block counts once and is flagged") {
  auto s = comment_frequency(U"x = 1\n\"\"\"never closed\ny = 2\n", kPy);
  CHECK(s.count(CommentKind::doc) == 1);
  CHECK(s.unterminated_blocks == 1);
  CHECK(identifier_metrics(U"x = 1\n\"\"\"never closed\ny = 2\n", kPy).lengths == V{1});
}

TEST_CASE("comment markers inside strings are not comments") {
  auto s = comment_frequency(U"s = \"# not a comment\"\n", kPy);
  CHECK(s.count(CommentKind::line) == 0);
}

TEST_CASE("c-family profile distinguishes line, block and doc comments") {
  auto p = profile_for_extension(".cpp");
  CHECK(p.name == "c_family");
  auto s = comment_frequency(U"// a\nint x; /* b */\n/** c */\n", p);
  CHECK(s.count(CommentKind::line) == 1);
  CHECK(s.count(CommentKind::block) == 1);
  CHECK(s.count(CommentKind::doc) == 1);
  CHECK(profile_for_extension("py").name == "python");
  CHECK(profile_for_extension("unknown").name == "python");
}

TEST_CASE("identifier metrics") {
  auto m = identifier_metrics(U"foo_bar = baz", kPy);
  CHECK(m.lengths == V{7, 3});
  CHECK(m.underscores == V{1, 0});

  m = identifier_metrics(U"x = x + x", kPy);
  CHECK(m.lengths == V{1, 1, 1});
  CHECK(m.underscores == V{0, 0, 0});

  m = identifier_metrics(U"# foo_bar", kPy);
  CHECK(m.lengths.empty());
  CHECK(m.underscores.empty());
}

TEST_CASE("identifiers skip numbers, string contents and keywords") {
  auto m = identifier_metrics(U"a1 = 1e5 + 42 + \"hello world\" + 'it''s'", kPy);
  CHECK(m.lengths == V{2});
  auto with_keywords = kPy;
  with_keywords.keywords = {U"def", U"return"};
  m = identifier_metrics(U"def f():\n    return __x\n", with_keywords);
  CHECK(m.lengths == V{1, 3});
  CHECK(m.underscores == V{0, 2});
}

TEST_CASE("whitespace metrics") {
  auto m = whitespace_metrics(U"    x = 1");
  CHECK(m.indent_ws == V{4});
  CHECK(m.inline_ws == V{2});
  CHECK(m.trailing_ws == V{0});

  m = whitespace_metrics(U"x\t \n");
  CHECK(m.trailing_ws == V{2});

  m = whitespace_metrics(U"   \n");
  CHECK(m.indent_ws.empty());
  CHECK(m.inline_ws.empty());
  CHECK(m.trailing_ws.empty());

  m = whitespace_metrics(U"\tif a  and b: \n\n  c\n");
  CHECK(m.indent_ws == V{1, 2});
  CHECK(m.inline_ws == V{4, 0});
  CHECK(m.trailing_ws == V{1, 0});
}

TEST_CASE("extract_metrics composes the extractors") {
  auto obs = extract_metrics(U"", kPy);
  for (std::size_t m = 0; m < kMetricCount; ++m) CHECK(obs.of(static_cast<Metric>(m)).empty());

  // "x_y = 1 # c" has 11 characters; the comment masks `c`.
  obs = extract_metrics(U"x_y = 1 # c", kPy);
  CHECK(obs.line_lengths == V{11});
  CHECK(obs.line_words == V{5});
  CHECK(obs.identifier_lengths == V{3});
  CHECK(obs.underscore_counts == V{1});
  CHECK(obs.comment_kinds == V{1});
  CHECK(obs.indent_ws == V{0});
  CHECK(obs.inline_ws == V{4});
  CHECK(obs.trail_ws == V{0});
}

TEST_CASE("observation counts satisfy the line invariants") {
  const std::u32string text = U"a = 1\n\n   \n  b = a  \n# c\n";
  auto obs = extract_metrics(text, kPy);
  CHECK(obs.line_lengths.size() == 5);
  CHECK(obs.line_words.size() == 5);
  CHECK(obs.comment_kinds.size() == 5);
  CHECK(obs.inline_ws.size() == 3);
  CHECK(obs.trail_ws.size() == 3);
  CHECK(obs.indent_ws.size() == 3);
}

TEST_CASE("comment-only segment yields no identifier observations") {
  auto obs = extract_metrics(U"# alpha beta\n\"\"\"gamma_delta\nepsilon\"\"\"\n  # zeta_eta\n", kPy);
  CHECK(obs.identifier_lengths.empty());
  CHECK(obs.underscore_counts.empty());
}

TEST_CASE("vectorize bins, normalizes and concatenates") {
  BinningConfig cfg;
  cfg.bins.fill(4);
  MetricObservations obs;
  obs.underscore_counts = {0, 1, 0, 2};
  auto v = vectorize(obs, cfg);
  REQUIRE(v.size() == 32);
  auto off = cfg.offset(Metric::underscores);
  CHECK(off == 28);
  CHECK(std::vector<double>(v.begin() + 28, v.end()) == std::vector<double>{0.5, 0.25, 0.25, 0.0});
  CHECK(std::all_of(v.begin(), v.begin() + 28, [](double x) { return x == 0.0; }));

  BinningConfig def;
  MetricObservations big;
  big.line_lengths = {999};
  v = vectorize(big, def);
  CHECK(v[19] == 1.0);

  v = vectorize(MetricObservations{}, def);
  CHECK(v.size() == 160);
  CHECK(std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));

  def.normalization = Normalization::raw_count;
  big.line_lengths = {3, 3, 50};
  v = vectorize(big, def);
  CHECK(v[3] == 2.0);
  CHECK(v[19] == 1.0);
}

TEST_CASE("vectorize rejects bin counts below two") {
  BinningConfig cfg;
  cfg.bins[3] = 1;
  CHECK_THROWS_AS(vectorize(MetricObservations{}, cfg), ConfigError);
}

TEST_CASE("vectorize properties: permutation invariance, block sums, fixed dimension") {
  Rng rng(11);
  BinningConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    MetricObservations obs;
    std::vector<std::uint32_t>* fields[] = {&obs.line_lengths, &obs.line_words,  &obs.comment_kinds,
                                            &obs.identifier_lengths, &obs.inline_ws, &obs.trail_ws,
                                            &obs.indent_ws,   &obs.underscore_counts};
    for (auto* f : fields) {
      f->resize(rng.below(30));
      for (auto& x : *f) x = static_cast<std::uint32_t>(rng.below(40));
    }
    auto v = vectorize(obs, cfg);
    REQUIRE(v.size() == cfg.dimension());

    auto shuffled = obs;
    for (auto* f : {&shuffled.line_lengths, &shuffled.identifier_lengths, &shuffled.underscore_counts})
      rng.shuffle(std::span<std::uint32_t>(*f));
    CHECK(vectorize(shuffled, cfg) == v);

    for (std::size_t m = 0; m < kMetricCount; ++m) {
      auto begin = v.begin() + static_cast<std::ptrdiff_t>(cfg.offset(static_cast<Metric>(m)));
      double sum = std::accumulate(begin, begin + cfg.bins[m], 0.0);
      if (obs.of(static_cast<Metric>(m)).empty()) {
        CHECK(sum == 0.0);
      } else {
        CHECK(std::abs(sum - 1.0) <= 1e-9);
      }
    }
  }
}

TEST_CASE("feature cache round trip, staleness and integrity") {
  authid::test::TempDir dir;
  FeatureCache cache;
  cache.labels = LabelIndex({"a", "b"});
  cache.features = FeatureMatrix(2, cache.binning.dimension());
  cache.features(0, 3) = 0.5;
  cache.features(1, 159) = 1.0 / 3.0;
  cache.ids = {"a/x.py", "b/y.py"};
  cache.label_indices = {0, 1};
  auto path = dir / "cache.bin";
  save_feature_cache(path, cache);

  auto loaded = load_feature_cache(path, cache.binning);
  REQUIRE(loaded.has_value());
  CHECK(loaded->features == cache.features);
  CHECK(loaded->ids == cache.ids);
  CHECK(loaded->labels == cache.labels);
  CHECK(loaded->label_indices == cache.label_indices);
  CHECK(encode_feature_cache(*loaded) == encode_feature_cache(cache));

  BinningConfig other;
  other.bins[0] = 10;
  CHECK_FALSE(load_feature_cache(path, other).has_value());

  auto bytes = authid::test::read_text(path);
  bytes[bytes.size() / 2] ^= 0x5a;
  authid::test::write_text(path, bytes);
  CHECK_THROWS_AS(load_feature_cache(path, cache.binning), FormatError);

  authid::test::write_text(path, "garbage");
  CHECK_THROWS_AS(load_feature_cache(path, cache.binning), FormatError);
}

#pragma once

// Run configuration files: `key = value` lines grouped in [sections].
//
//   [stacking]  seed, meta_source (in_sample | k_fold), folds
//   [split]     train_fraction, seed
//   [features]  bins, normalization (relative_frequency | raw_count),
//               profile (python | c_family)
//   [mlp]       width, dropout, epochs, patience, batch_size, learning_rate,
//               beta1, beta2, validation_fraction
//   [meta]      width, dropout, epochs, patience, batch_size, learning_rate,
//               momentum, validation_fraction
//   [forest]    trees, max_depth, min_samples_split, max_features, voting (soft | hard)
//   [svm]       c, nu, kernel (rbf | linear), gamma, tolerance
//   [synth]     classes, segments_per_class, seed, lines_per_segment
//   [class.N]   mean_line_length, comment_rate, underscore_rate, indent_width,
//               identifier_length_mean, identifier_length_stddev
//
// Unknown sections or keys and malformed values are ConfigErrors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "authid/corpus.hpp"
#include "authid/ensemble.hpp"

namespace authid {

struct RunConfig {
  StackingConfig stacking;
  double train_fraction = 2.0 / 3.0;
  std::optional<std::uint64_t> split_seed;  // unset = stacking seed
  SyntheticSpec synth;

  std::uint64_t effective_split_seed() const noexcept { return split_seed.value_or(stacking.seed); }

  void validate() const;
  // Stacking digest combined with the split settings.
  std::uint64_t digest() const;
  // The effective configuration in the file format.
  std::string to_ini() const;
};

// Applies the file's settings on top of `base`.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

}  // namespace authid

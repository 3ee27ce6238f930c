#include <doctest.h>

#include "authid/config.hpp"
#include "authid/error.hpp"

using namespace authid;

TEST_CASE("default classifier parameters") {
  const RunConfig rc;
  const auto& b = rc.stacking.base;
  CHECK(b.c_svm.c == 1.0);
  CHECK(b.nu_svm.nu == 0.15);
  CHECK(b.c_svm.type == SvmType::c_svc);
  CHECK(b.nu_svm.type == SvmType::nu_svc);
  CHECK(b.mlp.optimizer.kind == OptimizerSpec::Kind::adam);
  CHECK(b.mlp.optimizer.learning_rate == 0.01);
  CHECK(b.mlp.optimizer.beta1 == 0.9);
  CHECK(b.mlp.optimizer.beta2 == 0.999);
  CHECK(rc.stacking.meta.optimizer.kind == OptimizerSpec::Kind::sgd);
  CHECK(rc.stacking.meta.optimizer.learning_rate == 0.001);
  CHECK(rc.stacking.meta.optimizer.momentum == 0.0);
  CHECK(b.mlp.batch_size == 32);
  CHECK(rc.stacking.meta.batch_size == 32);
  CHECK(b.forest_gini.n_trees == 100);
  CHECK(b.forest_gain_ratio.n_trees == 100);
  CHECK(rc.train_fraction == doctest::Approx(2.0 / 3.0));
  CHECK_NOTHROW(rc.validate());
}

TEST_CASE("sections override defaults") {
  const auto rc = parse_config(R"(
# comment
[stacking]
seed = 17
meta_source = k_fold
folds = 4

[split]
train_fraction = 0.75
seed = 3

[features]
bins = 12
normalization = raw_count
profile = c_family

[mlp]
width = 64
dropout = 0.5
epochs = 40
learning_rate = 0.005

[meta]
epochs = 50
momentum = 0.9

[forest]
trees = 25
max_depth = 6
voting = hard

[svm]
c = 2.5
nu = 0.2
kernel = linear
)");
  const auto& s = rc.stacking;
  CHECK(s.seed == 17);
  CHECK(s.meta_source == MetaSource::k_fold);
  CHECK(s.folds == 4);
  CHECK(rc.train_fraction == 0.75);
  CHECK(rc.effective_split_seed() == 3);
  CHECK(s.binning.bins[0] == 12);
  CHECK(s.binning.bins[7] == 12);
  CHECK(s.binning.normalization == Normalization::raw_count);
  CHECK(s.profile.name == "c_family");
  CHECK(s.base.mlp.layers[1].width == 64);
  bool dropout_half = false;
  for (const auto& l : s.base.mlp.layers) dropout_half |= l.kind == LayerKind::dropout && l.dropout_rate == 0.5;
  CHECK(dropout_half);
  CHECK(s.base.mlp.layers.size() == MlpConfig::base_default().layers.size());
  CHECK(s.base.mlp.epochs == 40);
  CHECK(s.base.mlp.optimizer.learning_rate == 0.005);
  CHECK(s.meta.epochs == 50);
  CHECK(s.meta.optimizer.momentum == 0.9);
  CHECK(s.base.forest_gini.n_trees == 25);
  CHECK(s.base.forest_gain_ratio.tree.max_depth == 6);
  CHECK(s.base.forest_gain_ratio.tree.criterion == SplitCriterion::gain_ratio);
  CHECK(s.base.forest_gini.voting == Voting::hard);
  CHECK(s.base.c_svm.c == 2.5);
  CHECK(s.base.nu_svm.nu == 0.2);
  CHECK(s.base.nu_svm.kernel == KernelType::linear);
  CHECK_NOTHROW(rc.validate());
}

TEST_CASE("trailing comments") {
  const auto rc = parse_config("[forest]\ntrees = 5 ; fewer\nmax_depth = 3\t# shallow\n; whole line\n");
  CHECK(rc.stacking.base.forest_gini.n_trees == 5);
  CHECK(rc.stacking.base.forest_gini.tree.max_depth == 3);
}

TEST_CASE("unknown or malformed settings are errors") {
  CHECK_THROWS_AS(parse_config("[stacking]\nsed = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[stackin]\nseed = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[stacking]\nseed = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[svm]\nc = one\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[svm]\nkernel = poly\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[stacking]\nseed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[stacking\nseed = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[split]\ntrain_fraction = 1.5\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("[svm]\nnu = 0\n").validate(), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/authid.ini"), ConfigError);
}

TEST_CASE("digest tracks every effective setting") {
  const RunConfig base;
  const auto d = base.digest();
  CHECK(parse_config("").digest() == d);
  CHECK(parse_config("[stacking]\nseed = 1\n").digest() != d);
  CHECK(parse_config("[split]\nseed = 5\n").digest() != d);
  CHECK(parse_config("[split]\ntrain_fraction = 0.5\n").digest() != d);
  CHECK(parse_config("[forest]\ntrees = 99\n").digest() != d);
  CHECK(parse_config("[split]\nseed = 0\n").digest() == d);
}

TEST_CASE("to_ini round-trips") {
  const auto rc = parse_config("[stacking]\nseed = 9\n[mlp]\nwidth = 48\n[svm]\nc = 0.5\n[forest]\ntrees = 7\n");
  const auto again = parse_config(rc.to_ini());
  CHECK(again.digest() == rc.digest());
  CHECK(parse_config(RunConfig{}.to_ini()).digest() == RunConfig{}.digest());
}

TEST_CASE("synthetic spec sections") {
  const auto rc = parse_config(R"(
[synth]
classes = 3
segments_per_class = 4
seed = 11
lines_per_segment = 20

[class.1]
comment_rate = 0.5
indent_width = 2
)");
  CHECK(rc.synth.n_classes == 3);
  CHECK(rc.synth.segments_per_class == 4);
  CHECK(rc.synth.seed == 11);
  CHECK(rc.synth.lines_per_segment == 20.0);
  REQUIRE(rc.synth.styles.size() == 3);
  CHECK(rc.synth.styles[0] == default_style(0));
  CHECK(rc.synth.styles[1].comment_rate == 0.5);
  CHECK(rc.synth.styles[1].indent_width == 2);
  CHECK_NOTHROW(validate(rc.synth));
  CHECK_THROWS_AS(parse_config("[synth]\nclasses = 2\n[class.5]\ncomment_rate = 0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[class.0]\ncolour = red\n"), ConfigError);
  CHECK_THROWS_AS(validate(parse_config("[synth]\nclasses = 2\n[class.0]\ncomment_rate = 2\n").synth), ConfigError);
}

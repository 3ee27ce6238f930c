#include "authid/learners/base_model.hpp"

#include <cmath>
#include <limits>

#include "authid/digest.hpp"
#include "authid/error.hpp"

namespace authid {

std::string_view learner_name(LearnerKind kind) noexcept {
  switch (kind) {
    case LearnerKind::mlp: return "mlp";
    case LearnerKind::forest_gini: return "forest-gini";
    case LearnerKind::forest_gain_ratio: return "forest-gain-ratio";
    case LearnerKind::c_svm: return "c-svm";
    case LearnerKind::nu_svm: return "nu-svm";
  }
  return "unknown";
}

std::uint64_t learner_order_digest() noexcept {
  Digest d;
  for (auto kind : kLearnerOrder) {
    d.update(learner_name(kind));
    d.update(std::string_view("\0", 1));
  }
  return d.value();
}

void BaseLearnerConfigs::validate() const {
  mlp.validate();
  forest_gini.validate();
  forest_gain_ratio.validate();
  c_svm.validate();
  nu_svm.validate();
  if (forest_gini.tree.criterion != SplitCriterion::gini_impurity)
    throw ConfigError("forest-gini must use the gini impurity criterion");
  if (forest_gain_ratio.tree.criterion != SplitCriterion::gain_ratio)
    throw ConfigError("forest-gain-ratio must use the gain ratio criterion");
  if (c_svm.type != SvmType::c_svc) throw ConfigError("c-svm must be the C form");
  if (nu_svm.type != SvmType::nu_svc) throw ConfigError("nu-svm must be the nu form");
}

std::uint64_t BaseLearnerConfigs::digest(LearnerKind kind) const {
  switch (kind) {
    case LearnerKind::mlp: {
      auto c = mlp;
      c.seed = 0;
      return c.digest();
    }
    case LearnerKind::forest_gini:
    case LearnerKind::forest_gain_ratio: {
      auto c = kind == LearnerKind::forest_gini ? forest_gini : forest_gain_ratio;
      c.seed = 0;
      return c.digest();
    }
    case LearnerKind::c_svm: return c_svm.digest();
    case LearnerKind::nu_svm: return nu_svm.digest();
  }
  return 0;
}

// --- BaseModel -------------------------------------------------------------------

namespace {

std::size_t variant_index(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::mlp: return 0;
    case LearnerKind::forest_gini:
    case LearnerKind::forest_gain_ratio: return 1;
    case LearnerKind::c_svm:
    case LearnerKind::nu_svm: return 2;
  }
  throw FormatError("unknown learner kind");
}

std::size_t model_classes(const BaseModel::Model& m) {
  return std::visit([](const auto& v) { return v.n_classes(); }, m);
}

}  // namespace

BaseModel::BaseModel(LearnerKind kind, Model model, LabelIndex labels, std::uint64_t seed,
                     std::uint64_t config_digest)
    : kind_(kind), model_(std::move(model)), labels_(std::move(labels)), seed_(seed), config_digest_(config_digest) {
  if (model_.index() != variant_index(kind_))
    throw Error("base model: parameters do not match learner kind " + std::string(learner_name(kind_)));
  if (model_classes(model_) != labels_.size())
    throw Error("base model: class count does not match the label index");
}

std::size_t BaseModel::input_dim() const noexcept {
  return std::visit([](const auto& v) { return v.input_dim(); }, model_);
}

std::vector<double> BaseModel::predict_proba(std::span<const double> x) const {
  if (x.size() != input_dim()) throw DimensionError(input_dim(), x.size());
  return std::visit([&](const auto& v) { return v.predict_proba(x); }, model_);
}

void BaseModel::encode_parameters(BinaryWriter& w) const {
  std::visit([&](const auto& v) { v.encode(w); }, model_);
}

std::uint64_t BaseModel::parameter_digest() const {
  BinaryWriter w;
  encode_parameters(w);
  return Digest{}.update(w.bytes()).value();
}

void BaseModel::encode(BinaryWriter& w) const {
  w.u8(static_cast<std::uint8_t>(kind_));
  w.u64(seed_);
  w.u64(config_digest_);
  encode_parameters(w);
}

BaseModel BaseModel::decode(BinaryReader& r, const LabelIndex& labels) {
  const auto raw_kind = r.u8();
  if (raw_kind > static_cast<std::uint8_t>(LearnerKind::nu_svm)) throw FormatError("unknown learner kind");
  BaseModel m;
  m.kind_ = static_cast<LearnerKind>(raw_kind);
  m.seed_ = r.u64();
  m.config_digest_ = r.u64();
  switch (variant_index(m.kind_)) {
    case 0: m.model_ = Mlp::decode(r); break;
    case 1: m.model_ = RandomForest::decode(r); break;
    default: m.model_ = SvmModel::decode(r); break;
  }
  if (model_classes(m.model_) != labels.size()) throw FormatError("stored base model has the wrong class count");
  m.labels_ = labels;
  return m;
}

// --- training --------------------------------------------------------------------

TrainedBase train_base_model(LearnerKind kind, const FeatureMatrix& x, std::span<const std::size_t> labels,
                             const LabelIndex& index, const BaseLearnerConfigs& configs, std::uint64_t seed,
                             unsigned jobs) {
  const std::size_t k = index.size();
  const auto digest = configs.digest(kind);
  switch (kind) {
    case LearnerKind::mlp: {
      auto cfg = configs.mlp;
      cfg.seed = seed;
      auto trained = train_mlp(x, labels, k, cfg);
      return {BaseModel(kind, std::move(trained.net), index, seed, digest), {trained.summary.validation_accuracy}};
    }
    case LearnerKind::forest_gini:
    case LearnerKind::forest_gain_ratio: {
      auto cfg = kind == LearnerKind::forest_gini ? configs.forest_gini : configs.forest_gain_ratio;
      cfg.seed = seed;
      auto forest = train_random_forest(x, labels, k, cfg, jobs);
      const double oob = forest.oob_accuracy();
      return {BaseModel(kind, std::move(forest), index, seed, digest), {oob}};
    }
    case LearnerKind::c_svm:
    case LearnerKind::nu_svm: {
      const auto& cfg = kind == LearnerKind::c_svm ? configs.c_svm : configs.nu_svm;
      return {BaseModel(kind, train_svm(x, labels, k, cfg), index, seed, digest),
              {std::numeric_limits<double>::quiet_NaN()}};
    }
  }
  throw Error("unknown learner kind");
}

}  // namespace authid

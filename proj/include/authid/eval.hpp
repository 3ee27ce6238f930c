#pragma once

// Accuracy, micro-averaged F1 and confusion matrices for trained models.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "authid/corpus.hpp"
#include "authid/ensemble.hpp"

namespace authid {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_classes = 0) : k_(n_classes), counts_(n_classes * n_classes, 0) {}

  std::size_t size() const noexcept { return k_; }
  std::uint64_t operator()(std::size_t truth, std::size_t predicted) const { return counts_.at(truth * k_ + predicted); }
  std::uint64_t& at(std::size_t truth, std::size_t predicted) { return counts_.at(truth * k_ + predicted); }
  void add(std::size_t truth, std::size_t predicted) { ++at(truth, predicted); }

  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

// Pooled over classes: 2 TP / (2 TP + FP + FN), the harmonic mean of micro
// precision and micro recall. 0 for an empty matrix.
double micro_f1(const ConfusionMatrix& confusion);

struct ClassScores {
  double precision = 0.0;  // 0 when the class is never predicted
  double recall = 0.0;     // 0 when the class never occurs
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct EvaluationReport {
  std::string model_name;
  LabelIndex labels;
  ConfusionMatrix confusion;
  std::uint64_t n_samples = 0;
  double accuracy = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassScores> per_class;

  std::string to_text() const;
  // Tab-separated confusion matrix with a header row of predicted labels.
  std::string confusion_tsv() const;
};

EvaluationReport report_from_confusion(std::string model_name, LabelIndex labels, ConfusionMatrix confusion);

// Throws Error on empty input, mismatched lengths or out-of-range indices.
EvaluationReport evaluate_predictions(std::string model_name, const LabelIndex& labels,
                                      std::span<const std::size_t> truth, std::span<const std::size_t> predicted);

// Top-1 stacked prediction per segment. Throws Error for an empty test set or
// for labels unknown to the model (all offending labels are listed).
EvaluationReport evaluate(const EnsembleModel& model, const SegmentSet& test, unsigned jobs = 1);

// Same, for base model `position` (in kLearnerOrder) with the ensemble's
// preprocessing.
EvaluationReport evaluate_base(const EnsembleModel& model, std::size_t position, const SegmentSet& test,
                               unsigned jobs = 1);

// Stacked report followed by one report per base learner, sharing one
// feature extraction pass.
std::vector<EvaluationReport> evaluate_all(const EnsembleModel& model, const SegmentSet& test, unsigned jobs = 1);

// One row per report: name and accuracy, in the order given.
std::string accuracy_table(std::span<const EvaluationReport> reports);

}  // namespace authid

#include "authid/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "authid/error.hpp"
#include "authid/learners/probability.hpp"
#include "authid/parallel.hpp"

namespace authid {

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += counts_[i * k_ + i];
  return t;
}

double micro_f1(const ConfusionMatrix& confusion) {
  // Single-label: every off-diagonal count is one FP (its column) and one FN (its row).
  const std::uint64_t tp = confusion.trace();
  const std::uint64_t errors = confusion.total() - tp;
  const std::uint64_t denom = 2 * tp + errors + errors;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

EvaluationReport report_from_confusion(std::string model_name, LabelIndex labels, ConfusionMatrix confusion) {
  if (confusion.size() != labels.size()) throw DimensionError(labels.size(), confusion.size());
  EvaluationReport r;
  r.model_name = std::move(model_name);
  r.n_samples = confusion.total();
  r.accuracy = r.n_samples == 0 ? 0.0 : static_cast<double>(confusion.trace()) / static_cast<double>(r.n_samples);
  r.micro_f1 = micro_f1(confusion);
  const std::size_t k = labels.size();
  r.per_class.resize(k);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += confusion(c, j);
      col += confusion(j, c);
    }
    auto& s = r.per_class[c];
    const double tp = static_cast<double>(confusion(c, c));
    s.support = row;
    s.precision = col == 0 ? 0.0 : tp / static_cast<double>(col);
    s.recall = row == 0 ? 0.0 : tp / static_cast<double>(row);
    s.f1 = s.precision + s.recall == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    f1_sum += s.f1;
  }
  r.macro_f1 = k == 0 ? 0.0 : f1_sum / static_cast<double>(k);
  r.labels = std::move(labels);
  r.confusion = std::move(confusion);
  return r;
}

EvaluationReport evaluate_predictions(std::string model_name, const LabelIndex& labels,
                                      std::span<const std::size_t> truth, std::span<const std::size_t> predicted) {
  if (truth.empty()) throw Error("cannot evaluate on an empty test set");
  if (truth.size() != predicted.size()) throw Error("evaluation: truth and prediction counts differ");
  ConfusionMatrix m(labels.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= labels.size() || predicted[i] >= labels.size()) throw Error("evaluation: class index out of range");
    m.add(truth[i], predicted[i]);
  }
  return report_from_confusion(std::move(model_name), labels, std::move(m));
}

namespace {

std::vector<std::size_t> true_indices(const EnsembleModel& model, const SegmentSet& test) {
  if (test.size() == 0) throw Error("cannot evaluate on an empty test set");
  std::vector<std::string> unknown;
  std::vector<std::size_t> out;
  out.reserve(test.size());
  for (const auto& r : test.records) {
    if (auto i = model.labels().find(r.label)) {
      out.push_back(*i);
    } else {
      if (std::find(unknown.begin(), unknown.end(), r.label) == unknown.end()) unknown.push_back(r.label);
      out.push_back(0);
    }
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
    throw Error("test set contains labels unknown to the model: " + list);
  }
  return out;
}

FeatureMatrix test_features(const EnsembleModel& model, const SegmentSet& test, unsigned jobs) {
  for (const auto& r : test.records)
    if (r.text.empty()) throw Error("cannot predict the author of an empty segment: " + r.id);
  return featurize(test, model.config().binning, model.config().profile, jobs);
}

}  // namespace

std::vector<EvaluationReport> evaluate_all(const EnsembleModel& model, const SegmentSet& test, unsigned jobs) {
  const auto truth = true_indices(model, test);
  const auto x = test_features(model, test, jobs);
  const std::size_t n = x.rows();
  std::vector<std::vector<std::size_t>> predicted(kBaseLearnerCount + 1, std::vector<std::size_t>(n));
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto meta = model.meta_features(x.row(i));
    const std::size_t k = model.labels().size();
    for (std::size_t m = 0; m < kBaseLearnerCount; ++m)
      predicted[m + 1][i] = argmax(std::span<const double>(meta).subspan(m * k, k));
    predicted[0][i] = argmax(model.meta().predict_proba(meta));
  });
  std::vector<EvaluationReport> out;
  out.push_back(evaluate_predictions("stacked", model.labels(), truth, predicted[0]));
  for (std::size_t m = 0; m < kBaseLearnerCount; ++m)
    out.push_back(
        evaluate_predictions(std::string(learner_name(kLearnerOrder[m])), model.labels(), truth, predicted[m + 1]));
  return out;
}

EvaluationReport evaluate(const EnsembleModel& model, const SegmentSet& test, unsigned jobs) {
  const auto truth = true_indices(model, test);
  const auto x = test_features(model, test, jobs);
  std::vector<std::size_t> predicted(x.rows());
  parallel_for(x.rows(), jobs, [&](std::size_t i) { predicted[i] = argmax(model.predict_proba_features(x.row(i))); });
  return evaluate_predictions("stacked", model.labels(), truth, predicted);
}

EvaluationReport evaluate_base(const EnsembleModel& model, std::size_t position, const SegmentSet& test,
                               unsigned jobs) {
  if (position >= kBaseLearnerCount) throw Error("evaluate_base: no base learner at position " + std::to_string(position));
  const auto truth = true_indices(model, test);
  const auto x = test_features(model, test, jobs);
  const auto& base = model.bases()[position];
  std::vector<std::size_t> predicted(x.rows());
  parallel_for(x.rows(), jobs, [&](std::size_t i) { predicted[i] = argmax(base.predict_proba(x.row(i))); });
  return evaluate_predictions(std::string(learner_name(base.kind())), model.labels(), truth, predicted);
}

// --- formatting ------------------------------------------------------------------

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string EvaluationReport::to_text() const {
  std::ostringstream out;
  out << "model: " << model_name << "\n";
  out << "samples: " << n_samples << "\n";
  out << "accuracy: " << fixed(accuracy) << "\n";
  out << "micro_f1: " << fixed(micro_f1) << "\n";
  out << "macro_f1: " << fixed(macro_f1) << "\n";
  std::size_t width = 5;
  for (const auto& l : labels.labels()) width = std::max(width, l.size());
  out << "\nper-class:\n";
  char line[512];
  std::snprintf(line, sizeof line, "  %-*s  %9s  %9s  %9s  %7s\n", static_cast<int>(width), "label", "precision",
                "recall", "f1", "support");
  out << line;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    const auto& s = per_class[c];
    std::snprintf(line, sizeof line, "  %-*s  %9.4f  %9.4f  %9.4f  %7llu\n", static_cast<int>(width),
                  labels.label(c).c_str(), s.precision, s.recall, s.f1, static_cast<unsigned long long>(s.support));
    out << line;
  }
  out << "\nconfusion (rows = true, columns = predicted):\n";
  for (std::size_t t = 0; t < labels.size(); ++t) {
    std::snprintf(line, sizeof line, "  %-*s", static_cast<int>(width), labels.label(t).c_str());
    out << line;
    for (std::size_t p = 0; p < labels.size(); ++p) out << ' ' << confusion(t, p);
    out << "\n";
  }
  return out.str();
}

std::string EvaluationReport::confusion_tsv() const {
  std::ostringstream out;
  out << "true\\predicted";
  for (const auto& l : labels.labels()) out << '\t' << l;
  out << "\n";
  for (std::size_t t = 0; t < labels.size(); ++t) {
    out << labels.label(t);
    for (std::size_t p = 0; p < labels.size(); ++p) out << '\t' << confusion(t, p);
    out << "\n";
  }
  return out.str();
}

std::string accuracy_table(std::span<const EvaluationReport> reports) {
  std::size_t width = 10;
  for (const auto& r : reports) width = std::max(width, r.model_name.size());
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %8s  %8s\n", static_cast<int>(width), "classifier", "accuracy", "micro_f1");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-*s  %8.4f  %8.4f\n", static_cast<int>(width), r.model_name.c_str(), r.accuracy,
                  r.micro_f1);
    out << line;
  }
  return out.str();
}

}  // namespace authid

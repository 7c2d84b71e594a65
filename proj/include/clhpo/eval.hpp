#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clhpo/dataset.hpp"
#include "clhpo/hpo_types.hpp"
#include "clhpo/mlp.hpp"
#include "clhpo/stream.hpp"

namespace clhpo::eval {

// Anything that can label an example. `prepare()` runs once before a batch
// of predictions (iCaRL recomputes exemplar means there).
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void prepare() {}
  // Argmax over all classes.
  virtual int predict(const Example& x) const = 0;
  // Argmax restricted to `classes` (task-incremental evaluation).
  virtual int predict_within(const Example& x, const std::vector<int>& classes) const = 0;
};

// Plain logit-argmax classifier over an MLP.
class MlpClassifier : public Classifier {
 public:
  explicit MlpClassifier(const nn::MlpModel& model) : model_(model) {}
  int predict(const Example& x) const override;
  int predict_within(const Example& x, const std::vector<int>& classes) const override;

 private:
  const nn::MlpModel& model_;
};

enum class EvalMode { ClassIL, TaskIL };

struct EvalReport {
  std::vector<double> per_task_class_il;
  std::vector<double> per_task_task_il;
  double average_accuracy_class_il = 0.0;
  double average_accuracy_task_il = 0.0;
  std::map<int, double> per_class_accuracy;
};

// Per-task accuracy on the test partitions under one evaluation mode.
// Class-IL predicts over every class; task-IL restricts candidates to the
// task's class set.
EvalReport evaluate(Classifier& classifier, const TaskStream& stream, EvalMode mode);

// Both modes merged into one report (per-class accuracies from class-IL).
EvalReport evaluate_full(Classifier& classifier, const TaskStream& stream);

// Fraction of correct class-IL predictions on a flat example list.
double accuracy(Classifier& classifier, std::span<const Example> examples);

// Per-class accuracies computed from (true label, predicted label) pairs,
// then the median over classes; even counts average the middle two.
double median_per_class_accuracy(const std::vector<std::pair<int, int>>& predictions);

// Same selection metric straight from a classifier.
double median_per_class_score(Classifier& classifier, std::span<const Example> examples);

// Per-config score table: CSV with one row per config, sorted by config id.
void emit_histogram(const std::vector<std::pair<HyperparamConfig, double>>& trial_scores,
                    const std::string& path);
std::vector<std::pair<HyperparamConfig, double>> load_histogram(const std::string& path);

}  // namespace clhpo::eval

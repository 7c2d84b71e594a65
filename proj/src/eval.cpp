#include "clhpo/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "clhpo/error.hpp"

namespace clhpo::eval {

namespace {

int argmax_logits(const nn::MlpModel& model, const Example& x, const std::vector<int>& classes) {
  const Example* one = &x;
  const Mat logits = nn::forward(model, std::span<const Example>(one, 1));
  int best = -1;
  double best_v = 0.0;
  auto consider = [&](int c) {
    if (c < 0 || c >= logits.cols) throw ArgumentError("predict: class id out of range");
    if (best < 0 || logits.at(0, c) > best_v) {
      best = c;
      best_v = logits.at(0, c);
    }
  };
  if (classes.empty())
    for (int c = 0; c < logits.cols; ++c) consider(c);
  else
    for (int c : classes) consider(c);
  return best;
}

}  // namespace

int MlpClassifier::predict(const Example& x) const { return argmax_logits(model_, x, {}); }

int MlpClassifier::predict_within(const Example& x, const std::vector<int>& classes) const {
  return argmax_logits(model_, x, classes);
}

EvalReport evaluate(Classifier& classifier, const TaskStream& stream, EvalMode mode) {
  bool any_test = false;
  for (const auto& task : stream.tasks)
    if (!task.test.empty()) any_test = true;
  if (!any_test) throw ArgumentError("evaluate: stream has no test data");

  classifier.prepare();
  EvalReport report;
  std::map<int, long> class_total, class_correct;
  std::vector<double> per_task;
  for (const auto& task : stream.tasks) {
    long correct = 0;
    for (const auto& ex : task.test) {
      const int pred = (mode == EvalMode::ClassIL)
                           ? classifier.predict(ex)
                           : classifier.predict_within(ex, task.class_set);
      if (pred == ex.label) ++correct;
      ++class_total[ex.label];
      if (pred == ex.label) ++class_correct[ex.label];
    }
    per_task.push_back(task.test.empty()
                           ? 0.0
                           : static_cast<double>(correct) / static_cast<double>(task.test.size()));
  }
  double avg = 0.0;
  for (double a : per_task) avg += a;
  avg /= static_cast<double>(per_task.size());

  for (const auto& [cls, total] : class_total)
    report.per_class_accuracy[cls] =
        static_cast<double>(class_correct[cls]) / static_cast<double>(total);

  if (mode == EvalMode::ClassIL) {
    report.per_task_class_il = std::move(per_task);
    report.average_accuracy_class_il = avg;
  } else {
    report.per_task_task_il = std::move(per_task);
    report.average_accuracy_task_il = avg;
  }
  return report;
}

EvalReport evaluate_full(Classifier& classifier, const TaskStream& stream) {
  EvalReport report = evaluate(classifier, stream, EvalMode::ClassIL);
  EvalReport task_il = evaluate(classifier, stream, EvalMode::TaskIL);
  report.per_task_task_il = std::move(task_il.per_task_task_il);
  report.average_accuracy_task_il = task_il.average_accuracy_task_il;
  return report;
}

double accuracy(Classifier& classifier, std::span<const Example> examples) {
  if (examples.empty()) throw ArgumentError("accuracy: empty example list");
  classifier.prepare();
  long correct = 0;
  for (const auto& ex : examples)
    if (classifier.predict(ex) == ex.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

double median_per_class_accuracy(const std::vector<std::pair<int, int>>& predictions) {
  if (predictions.empty()) throw ArgumentError("median_per_class_accuracy: empty input");
  std::map<int, long> total, correct;
  for (const auto& [truth, pred] : predictions) {
    ++total[truth];
    if (pred == truth) ++correct[truth];
  }
  std::vector<double> accs;
  accs.reserve(total.size());
  for (const auto& [cls, n] : total)
    accs.push_back(static_cast<double>(correct[cls]) / static_cast<double>(n));
  std::sort(accs.begin(), accs.end());
  const std::size_t n = accs.size();
  if (n % 2 == 1) return accs[n / 2];
  return 0.5 * (accs[n / 2 - 1] + accs[n / 2]);
}

double median_per_class_score(Classifier& classifier, std::span<const Example> examples) {
  if (examples.empty()) throw ArgumentError("median_per_class_score: empty example list");
  classifier.prepare();
  std::vector<std::pair<int, int>> predictions;
  predictions.reserve(examples.size());
  for (const auto& ex : examples) predictions.emplace_back(ex.label, classifier.predict(ex));
  return median_per_class_accuracy(predictions);
}

namespace {

std::string num_field(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string opt_field(const std::optional<double>& v) {
  return v ? num_field(*v) : std::string();
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::strtod(s.c_str(), nullptr);
}

}  // namespace

void emit_histogram(const std::vector<std::pair<HyperparamConfig, double>>& trial_scores,
                    const std::string& path) {
  if (trial_scores.empty()) throw ArgumentError("emit_histogram: empty score list");
  std::ofstream out(path);
  if (!out) throw IoError("emit_histogram: cannot write " + path);
  out << "config_id,lr,alpha,beta,loss_margin,val_accuracy\n";
  for (std::size_t i = 0; i < trial_scores.size(); ++i) {
    const auto& [hp, score] = trial_scores[i];
    out << i << ',' << num_field(hp.lr) << ',' << opt_field(hp.alpha) << ','
        << opt_field(hp.beta) << ',' << opt_field(hp.loss_margin) << ',' << num_field(score)
        << '\n';
  }
  if (!out) throw IoError("emit_histogram: write failed for " + path);
}

std::vector<std::pair<HyperparamConfig, double>> load_histogram(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_histogram: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "config_id,lr,alpha,beta,loss_margin,val_accuracy")
    throw ParseError("load_histogram: bad header in " + path);
  std::vector<std::pair<HyperparamConfig, double>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 6) throw ParseError("load_histogram: bad row in " + path);
    HyperparamConfig hp;
    hp.lr = std::strtod(cells[1].c_str(), nullptr);
    hp.alpha = parse_opt(cells[2]);
    hp.beta = parse_opt(cells[3]);
    hp.loss_margin = parse_opt(cells[4]);
    out.emplace_back(hp, std::strtod(cells[5].c_str(), nullptr));
  }
  return out;
}

}  // namespace clhpo::eval

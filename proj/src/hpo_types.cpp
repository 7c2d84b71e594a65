#include "clhpo/hpo_types.hpp"

#include <algorithm>
#include <cstdio>

#include "clhpo/error.hpp"

namespace clhpo {

std::string to_string(MethodKind m) {
  switch (m) {
    case MethodKind::ER: return "er";
    case MethodKind::ER_ACE: return "er_ace";
    case MethodKind::DERPP: return "derpp";
    case MethodKind::ICARL: return "icarl";
    case MethodKind::ESMER: return "esmer";
  }
  return "?";
}

std::string to_string(FrameworkKind f) {
  switch (f) {
    case FrameworkKind::EndOfTraining: return "end_of_training";
    case FrameworkKind::FirstTask: return "first_task";
    case FrameworkKind::CurrentTask: return "current_task";
    case FrameworkKind::SeenTasksVal: return "seen_tasks_val";
    case FrameworkKind::SeenTasksMem: return "seen_tasks_mem";
    case FrameworkKind::DefaultHP: return "default_hp";
  }
  return "?";
}

MethodKind method_from_string(const std::string& s) {
  if (s == "er") return MethodKind::ER;
  if (s == "er_ace") return MethodKind::ER_ACE;
  if (s == "derpp") return MethodKind::DERPP;
  if (s == "icarl") return MethodKind::ICARL;
  if (s == "esmer") return MethodKind::ESMER;
  throw ArgumentError("unknown method '" + s +
                      "' (valid: er, er_ace, derpp, icarl, esmer)");
}

FrameworkKind framework_from_string(const std::string& s) {
  if (s == "end_of_training") return FrameworkKind::EndOfTraining;
  if (s == "first_task") return FrameworkKind::FirstTask;
  if (s == "current_task") return FrameworkKind::CurrentTask;
  if (s == "seen_tasks_val") return FrameworkKind::SeenTasksVal;
  if (s == "seen_tasks_mem") return FrameworkKind::SeenTasksMem;
  if (s == "default_hp") return FrameworkKind::DefaultHP;
  throw ArgumentError("unknown framework '" + s +
                      "' (valid: end_of_training, first_task, current_task, "
                      "seen_tasks_val, seen_tasks_mem, default_hp)");
}

std::string to_string(const HyperparamConfig& hp) {
  char buf[160];
  std::string s = "lr=";
  std::snprintf(buf, sizeof(buf), "%g", hp.lr);
  s += buf;
  if (hp.alpha) {
    std::snprintf(buf, sizeof(buf), " alpha=%g", *hp.alpha);
    s += buf;
  }
  if (hp.beta) {
    std::snprintf(buf, sizeof(buf), " beta=%g", *hp.beta);
    s += buf;
  }
  if (hp.loss_margin) {
    std::snprintf(buf, sizeof(buf), " margin=%g", *hp.loss_margin);
    s += buf;
  }
  return s;
}

namespace {
const double kLearningRates[] = {0.2, 0.15, 0.1, 0.075, 0.05, 0.03, 0.01, 0.0075, 0.005, 0.0025};
const double kDerppCoeffs[] = {0.2, 0.5, 1.0};
const double kEsmerMargins[] = {1.5, 1.2, 1.0};
}  // namespace

Grid make_grid(MethodKind method) {
  Grid grid;
  for (double lr : kLearningRates) {
    switch (method) {
      case MethodKind::DERPP:
        for (double a : kDerppCoeffs)
          for (double b : kDerppCoeffs) {
            HyperparamConfig hp;
            hp.lr = lr;
            hp.alpha = a;
            hp.beta = b;
            grid.configs.push_back(hp);
          }
        break;
      case MethodKind::ESMER:
        for (double m : kEsmerMargins) {
          HyperparamConfig hp;
          hp.lr = lr;
          hp.loss_margin = m;
          grid.configs.push_back(hp);
        }
        break;
      default: {
        HyperparamConfig hp;
        hp.lr = lr;
        grid.configs.push_back(hp);
        break;
      }
    }
  }
  return grid;
}

HyperparamConfig default_config(MethodKind method) {
  HyperparamConfig hp;
  hp.lr = 0.001;
  if (method == MethodKind::DERPP) {
    hp.alpha = 1.0;
    hp.beta = 1.0;
  } else if (method == MethodKind::ESMER) {
    hp.loss_margin = 1.0;
  }
  return hp;
}

void CostLedger::add_unit(LedgerPhase phase, int task_id) {
  if (phase == LedgerPhase::Selection)
    ++selection_units_;
  else
    ++retrain_units_;
  for (auto& t : per_task_) {
    if (t.task_id == task_id) {
      (phase == LedgerPhase::Selection ? t.selection_units : t.retrain_units) += 1;
      return;
    }
  }
  TaskBreakdown tb;
  tb.task_id = task_id;
  (phase == LedgerPhase::Selection ? tb.selection_units : tb.retrain_units) = 1;
  per_task_.push_back(tb);
}

void CostLedger::merge(const CostLedger& other) {
  selection_units_ += other.selection_units_;
  retrain_units_ += other.retrain_units_;
  for (const auto& ot : other.per_task_) {
    bool found = false;
    for (auto& t : per_task_) {
      if (t.task_id == ot.task_id) {
        t.selection_units += ot.selection_units;
        t.retrain_units += ot.retrain_units;
        found = true;
        break;
      }
    }
    if (!found) per_task_.push_back(ot);
  }
}

std::vector<CostLedger::TaskBreakdown> CostLedger::per_task_breakdown() const {
  auto out = per_task_;
  std::sort(out.begin(), out.end(),
            [](const TaskBreakdown& a, const TaskBreakdown& b) { return a.task_id < b.task_id; });
  return out;
}

CostLedger CostLedger::from_counts(long selection, long retrain,
                                   std::vector<TaskBreakdown> per_task) {
  CostLedger ledger;
  ledger.selection_units_ = selection;
  ledger.retrain_units_ = retrain;
  ledger.per_task_ = std::move(per_task);
  return ledger;
}

int select_best(const std::vector<double>& scores) {
  if (scores.empty()) throw ArgumentError("select_best: empty score list");
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(best)]) best = i;
  return best;
}

}  // namespace clhpo

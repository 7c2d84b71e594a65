#pragma once

#include <optional>
#include <string>
#include <vector>

namespace clhpo {

enum class MethodKind { ER, ER_ACE, DERPP, ICARL, ESMER };
enum class FrameworkKind {
  EndOfTraining,
  FirstTask,
  CurrentTask,
  SeenTasksVal,
  SeenTasksMem,
  DefaultHP,
};

std::string to_string(MethodKind m);
std::string to_string(FrameworkKind f);
MethodKind method_from_string(const std::string& s);
FrameworkKind framework_from_string(const std::string& s);

// One point of the search grid. Only the coefficients the method actually
// uses are set.
struct HyperparamConfig {
  double lr = 0.0;
  std::optional<double> alpha;        // DER++ distillation weight
  std::optional<double> beta;         // DER++ replay CE weight
  std::optional<double> loss_margin;  // ESMER gating margin

  bool operator==(const HyperparamConfig&) const = default;
};

std::string to_string(const HyperparamConfig& hp);

struct Grid {
  std::vector<HyperparamConfig> configs;
  int size() const { return static_cast<int>(configs.size()); }
};

// Cartesian product of the ten learning rates with the method's coefficient
// values: 90 configs for DER++, 30 for ESMER, 10 otherwise.
Grid make_grid(MethodKind method);

// lr 0.001 and every active coefficient 1.0.
HyperparamConfig default_config(MethodKind method);

enum class LedgerPhase { Selection, Retrain };

// Exact count of task-training units, one unit per full pass of one config
// over one task's data.
class CostLedger {
 public:
  void add_unit(LedgerPhase phase, int task_id);
  void merge(const CostLedger& other);

  long selection_units() const { return selection_units_; }
  long retrain_units() const { return retrain_units_; }
  long total_units() const { return selection_units_ + retrain_units_; }

  struct TaskBreakdown {
    int task_id = 0;
    long selection_units = 0;
    long retrain_units = 0;
  };
  // Sorted by task_id.
  std::vector<TaskBreakdown> per_task_breakdown() const;

  static CostLedger from_counts(long selection, long retrain,
                                std::vector<TaskBreakdown> per_task);

 private:
  long selection_units_ = 0;
  long retrain_units_ = 0;
  std::vector<TaskBreakdown> per_task_;
};

// argmax by score; ties go to the lowest index so selection is reproducible.
int select_best(const std::vector<double>& scores);

}  // namespace clhpo

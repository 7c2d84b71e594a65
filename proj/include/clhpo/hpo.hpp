#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "clhpo/eval.hpp"
#include "clhpo/hpo_types.hpp"
#include "clhpo/methods.hpp"
#include "clhpo/stream.hpp"

namespace clhpo::hpo {

// The seam between the HPO frameworks and the thing being tuned. One Learner
// owns one model+buffer lifecycle; frameworks snapshot it with clone().
// Implemented by MethodLearner for real training and by test stubs for
// cost-accounting checks.
class Learner : public eval::Classifier {
 public:
  // One task-training unit: train this task (train split, plus val when
  // include_val) under hp, and add exactly one unit to the ledger.
  virtual void train_task(const Task& task, bool include_val, const HyperparamConfig& hp,
                          std::uint64_t seed, CostLedger& ledger, LedgerPhase phase) = 0;
  virtual std::unique_ptr<Learner> clone() const = 0;
  // Replay memory, when the learner has one (seen-tasks (Mem) holds out
  // validation samples through it).
  virtual ReplayBuffer* replay_buffer() { return nullptr; }
};

using LearnerFactory = std::function<std::unique_ptr<Learner>(std::uint64_t init_seed)>;

// MLP + CL-method learner.
class MethodLearner : public Learner {
 public:
  MethodLearner(MethodKind method, const std::vector<int>& layer_dims, int buffer_capacity,
                int n_classes, methods::TrainOptions opt, std::uint64_t init_seed);

  void train_task(const Task& task, bool include_val, const HyperparamConfig& hp,
                  std::uint64_t seed, CostLedger& ledger, LedgerPhase phase) override;
  void prepare() override;
  int predict(const Example& x) const override;
  int predict_within(const Example& x, const std::vector<int>& classes) const override;
  std::unique_ptr<Learner> clone() const override;
  ReplayBuffer* replay_buffer() override { return &state_.buffer; }

  const methods::TrainerState& state() const { return state_; }
  methods::TrainerState& state() { return state_; }

 private:
  methods::TrainOptions opt_;
  methods::TrainerState state_;
  std::map<int, std::vector<double>> nme_means_;  // refreshed by prepare()
};

// Scores of one selection phase, indexed like the grid. task_id is -1 for
// the whole-stream phases (end-of-training) and the task id otherwise.
struct PhaseScores {
  int task_id = -1;
  std::vector<double> scores;
};

struct RunRecord {
  FrameworkKind framework = FrameworkKind::DefaultHP;
  MethodKind method = MethodKind::ER;
  std::uint64_t seed = 0;
  Grid grid;
  std::vector<HyperparamConfig> chosen_configs;  // one per task
  CostLedger ledger;
  eval::EvalReport eval;
  std::vector<PhaseScores> phase_scores;
};

struct RunHooks {
  // Fired by seen-tasks (Mem) after drawing the memory-validation sample.
  std::function<void(int task_id, const std::vector<int>& holdout_example_ids)> on_holdout;
};

struct RunOptions {
  double holdout_fraction = 0.1;
  const RunHooks* hooks = nullptr;
};

struct RunOutput {
  RunRecord record;
  std::unique_ptr<Learner> final_learner;
};

// Seed plumbing shared by all frameworks: every trial, retrain pass and
// holdout draw gets an independent deterministic sub-stream, so serial and
// parallel execution produce identical records.
std::uint64_t learner_init_seed(std::uint64_t run_seed);
std::uint64_t trial_seed(std::uint64_t run_seed, int task_id, int config_index);
std::uint64_t retrain_seed(std::uint64_t run_seed, int task_id);
std::uint64_t holdout_seed(std::uint64_t run_seed, int task_id);

// Static frameworks -------------------------------------------------------

// Train every config over the whole stream, score on the pooled validation
// set, retrain the winner on train+val. Costs K*T + T units.
RunOutput run_end_of_training(const TaskStream& stream, MethodKind method, const Grid& grid,
                              std::uint64_t seed, const LearnerFactory& factory,
                              const RunOptions& options = {});

// Tune on task 1 only, then keep the winner for the rest of the stream.
// Costs K + T units.
RunOutput run_first_task(const TaskStream& stream, MethodKind method, const Grid& grid,
                         std::uint64_t seed, const LearnerFactory& factory,
                         const RunOptions& options = {});

// Dynamic frameworks ------------------------------------------------------

// Re-select per task on the current task's validation set; retrain each task
// from its snapshot. Costs K*T + T units.
RunOutput run_current_task(const TaskStream& stream, MethodKind method, const Grid& grid,
                           std::uint64_t seed, const LearnerFactory& factory,
                           const RunOptions& options = {});

// Re-select per task on the union of all seen validation sets; the winning
// trial IS the task's final model (no retrain, validation data never
// trained). Costs K*T units.
RunOutput run_seen_tasks_val(const TaskStream& stream, MethodKind method, const Grid& grid,
                             std::uint64_t seed, const LearnerFactory& factory,
                             const RunOptions& options = {});

// Re-select per task on current val + a per-task-proportional held-out
// sample from the replay buffer, scored by median per-class accuracy; the
// held-out entries are excluded from replay during trials. Costs K*T + T.
RunOutput run_seen_tasks_mem(const TaskStream& stream, MethodKind method, const Grid& grid,
                             std::uint64_t seed, const LearnerFactory& factory,
                             const RunOptions& options = {});

// No search: lr 0.001, coefficients 1.0, single pass on train+val. Costs T.
RunOutput run_default_hp(const TaskStream& stream, MethodKind method, std::uint64_t seed,
                         const LearnerFactory& factory, const RunOptions& options = {});

RunOutput run_framework(FrameworkKind framework, const TaskStream& stream, MethodKind method,
                        const Grid& grid, std::uint64_t seed, const LearnerFactory& factory,
                        const RunOptions& options = {});

}  // namespace clhpo::hpo

#include "clhpo/hpo.hpp"

#include <algorithm>
#include <exception>
#include <limits>

#include "clhpo/error.hpp"
#include "clhpo/rng.hpp"

namespace clhpo::hpo {

namespace {
constexpr std::uint64_t kInitTag = 0x494e4954ULL;     // "INIT"
constexpr std::uint64_t kTrialTag = 0x5452494cULL;    // "TRIL"
constexpr std::uint64_t kRetrainTag = 0x52455452ULL;  // "RETR"
constexpr std::uint64_t kHoldoutTag = 0x484f4c44ULL;  // "HOLD"
}  // namespace

std::uint64_t learner_init_seed(std::uint64_t run_seed) {
  return derive_seed(run_seed, kInitTag);
}
std::uint64_t trial_seed(std::uint64_t run_seed, int task_id, int config_index) {
  return derive_seed(run_seed, kTrialTag,
                     static_cast<std::uint64_t>(task_id) + 1,
                     static_cast<std::uint64_t>(config_index) + 1);
}
std::uint64_t retrain_seed(std::uint64_t run_seed, int task_id) {
  return derive_seed(run_seed, kRetrainTag, static_cast<std::uint64_t>(task_id) + 1);
}
std::uint64_t holdout_seed(std::uint64_t run_seed, int task_id) {
  return derive_seed(run_seed, kHoldoutTag, static_cast<std::uint64_t>(task_id) + 1);
}

// ---------------------------------------------------------------------------
// MethodLearner
// ---------------------------------------------------------------------------

MethodLearner::MethodLearner(MethodKind method, const std::vector<int>& layer_dims,
                             int buffer_capacity, int n_classes, methods::TrainOptions opt,
                             std::uint64_t init_seed)
    : opt_(opt),
      state_(methods::make_trainer(method, nn::init_mlp(layer_dims, init_seed),
                                   buffer_capacity, n_classes)) {}

void MethodLearner::train_task(const Task& task, bool include_val, const HyperparamConfig& hp,
                               std::uint64_t seed, CostLedger& ledger, LedgerPhase phase) {
  std::vector<Example> data = task.train;
  if (include_val) data.insert(data.end(), task.val.begin(), task.val.end());
  methods::train_task(state_, task.task_id, task.class_set, data, hp, opt_, seed, ledger,
                      phase);
}

void MethodLearner::prepare() {
  if (state_.method == MethodKind::ICARL) nme_means_ = methods::icarl_class_means(state_);
}

namespace {

int nme_from_means(const nn::MlpModel& model,
                   const std::map<int, std::vector<double>>& means, const Example& x,
                   const std::vector<int>& classes) {
  if (means.empty()) throw StateError("nme predict: no exemplar means available");
  const Example* one = &x;
  const Mat f = nn::penultimate_features(model, std::span<const Example>(one, 1));
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (const auto& [cls, mean] : means) {
    if (!classes.empty() && std::find(classes.begin(), classes.end(), cls) == classes.end())
      continue;
    double d2 = 0.0;
    for (int k = 0; k < f.cols; ++k) {
      const double diff = f.at(0, k) - mean[static_cast<std::size_t>(k)];
      d2 += diff * diff;
    }
    if (d2 < best_d2) {
      best_d2 = d2;
      best = cls;
    }
  }
  if (best < 0) throw StateError("nme predict: no exemplars for requested classes");
  return best;
}

}  // namespace

int MethodLearner::predict(const Example& x) const {
  if (state_.method == MethodKind::ICARL)
    return nme_from_means(state_.model, nme_means_, x, {});
  return eval::MlpClassifier(state_.model).predict(x);
}

int MethodLearner::predict_within(const Example& x, const std::vector<int>& classes) const {
  if (state_.method == MethodKind::ICARL)
    return nme_from_means(state_.model, nme_means_, x, classes);
  return eval::MlpClassifier(state_.model).predict_within(x, classes);
}

std::unique_ptr<Learner> MethodLearner::clone() const {
  return std::make_unique<MethodLearner>(*this);
}

// ---------------------------------------------------------------------------
// Framework runners
// ---------------------------------------------------------------------------

namespace {

struct TrialBatch {
  std::vector<double> scores;
  std::vector<std::unique_ptr<Learner>> learners;
  std::vector<CostLedger> ledgers;
};

// Runs the K trials of one selection phase. train_fn trains the clone,
// score_fn scores it; both see the config index. Trials are independent and
// run under OpenMP; results land in config order, so the outcome does not
// depend on the thread count. A trial whose training blows up numerically
// (non-finite gradients at an aggressive learning rate) scores 0 and is
// simply never selected; any other error aborts the run.
TrialBatch run_trials(const Learner& snapshot, int n_configs,
                      const std::function<void(Learner&, int, CostLedger&)>& train_fn,
                      const std::function<double(Learner&)>& score_fn) {
  TrialBatch batch;
  batch.scores.assign(static_cast<std::size_t>(n_configs), 0.0);
  batch.learners.resize(static_cast<std::size_t>(n_configs));
  batch.ledgers.assign(static_cast<std::size_t>(n_configs), CostLedger{});
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_configs));

#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < n_configs; ++k) {
    try {
      auto learner = snapshot.clone();
      try {
        train_fn(*learner, k, batch.ledgers[static_cast<std::size_t>(k)]);
        batch.scores[static_cast<std::size_t>(k)] = score_fn(*learner);
      } catch (const NumericError&) {
        batch.scores[static_cast<std::size_t>(k)] = 0.0;  // diverged trial
      }
      batch.learners[static_cast<std::size_t>(k)] = std::move(learner);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
  return batch;
}

void check_stream(const TaskStream& stream, const Grid& grid) {
  if (stream.tasks.empty()) throw ArgumentError("run: empty task stream");
  if (grid.configs.empty()) throw ArgumentError("run: empty hyperparameter grid");
  for (const auto& task : stream.tasks)
    if (task.val.empty())
      throw ArgumentError("run: task " + std::to_string(task.task_id) +
                          " has no validation split");
}

std::vector<Example> pooled_val(const TaskStream& stream, std::size_t up_to) {
  std::vector<Example> out;
  for (std::size_t t = 0; t < up_to; ++t)
    out.insert(out.end(), stream.tasks[t].val.begin(), stream.tasks[t].val.end());
  return out;
}

RunRecord make_record(FrameworkKind framework, MethodKind method, std::uint64_t seed,
                      const Grid& grid) {
  RunRecord record;
  record.framework = framework;
  record.method = method;
  record.seed = seed;
  record.grid = grid;
  return record;
}

}  // namespace

RunOutput run_end_of_training(const TaskStream& stream, MethodKind method, const Grid& grid,
                              std::uint64_t seed, const LearnerFactory& factory,
                              const RunOptions& options) {
  (void)options;
  check_stream(stream, grid);
  RunRecord record = make_record(FrameworkKind::EndOfTraining, method, seed, grid);
  const auto base = factory(learner_init_seed(seed));
  const auto valset = pooled_val(stream, stream.tasks.size());

  auto batch = run_trials(
      *base, grid.size(),
      [&](Learner& learner, int k, CostLedger& ledger) {
        for (const auto& task : stream.tasks)
          learner.train_task(task, false, grid.configs[static_cast<std::size_t>(k)],
                             trial_seed(seed, task.task_id, k), ledger,
                             LedgerPhase::Selection);
      },
      [&](Learner& learner) { return eval::accuracy(learner, valset); });
  for (const auto& ledger : batch.ledgers) record.ledger.merge(ledger);
  record.phase_scores.push_back({-1, batch.scores});

  const int best = select_best(batch.scores);
  auto final_learner = factory(learner_init_seed(seed));
  for (const auto& task : stream.tasks)
    final_learner->train_task(task, true, grid.configs[static_cast<std::size_t>(best)],
                              retrain_seed(seed, task.task_id), record.ledger,
                              LedgerPhase::Retrain);

  record.chosen_configs.assign(stream.tasks.size(),
                               grid.configs[static_cast<std::size_t>(best)]);
  record.eval = eval::evaluate_full(*final_learner, stream);
  return {std::move(record), std::move(final_learner)};
}

RunOutput run_first_task(const TaskStream& stream, MethodKind method, const Grid& grid,
                         std::uint64_t seed, const LearnerFactory& factory,
                         const RunOptions& options) {
  (void)options;
  check_stream(stream, grid);
  RunRecord record = make_record(FrameworkKind::FirstTask, method, seed, grid);
  const auto base = factory(learner_init_seed(seed));
  const Task& first = stream.tasks.front();

  auto batch = run_trials(
      *base, grid.size(),
      [&](Learner& learner, int k, CostLedger& ledger) {
        learner.train_task(first, false, grid.configs[static_cast<std::size_t>(k)],
                           trial_seed(seed, first.task_id, k), ledger,
                           LedgerPhase::Selection);
      },
      [&](Learner& learner) { return eval::accuracy(learner, first.val); });
  for (const auto& ledger : batch.ledgers) record.ledger.merge(ledger);
  record.phase_scores.push_back({first.task_id, batch.scores});

  const int best = select_best(batch.scores);
  auto final_learner = factory(learner_init_seed(seed));
  for (const auto& task : stream.tasks)
    final_learner->train_task(task, true, grid.configs[static_cast<std::size_t>(best)],
                              retrain_seed(seed, task.task_id), record.ledger,
                              LedgerPhase::Retrain);

  record.chosen_configs.assign(stream.tasks.size(),
                               grid.configs[static_cast<std::size_t>(best)]);
  record.eval = eval::evaluate_full(*final_learner, stream);
  return {std::move(record), std::move(final_learner)};
}

RunOutput run_current_task(const TaskStream& stream, MethodKind method, const Grid& grid,
                           std::uint64_t seed, const LearnerFactory& factory,
                           const RunOptions& options) {
  (void)options;
  check_stream(stream, grid);
  RunRecord record = make_record(FrameworkKind::CurrentTask, method, seed, grid);
  auto state = factory(learner_init_seed(seed));

  for (const auto& task : stream.tasks) {
    auto batch = run_trials(
        *state, grid.size(),
        [&](Learner& learner, int k, CostLedger& ledger) {
          learner.train_task(task, false, grid.configs[static_cast<std::size_t>(k)],
                             trial_seed(seed, task.task_id, k), ledger,
                             LedgerPhase::Selection);
        },
        [&](Learner& learner) { return eval::accuracy(learner, task.val); });
    for (const auto& ledger : batch.ledgers) record.ledger.merge(ledger);
    record.phase_scores.push_back({task.task_id, batch.scores});

    const int best = select_best(batch.scores);
    state->train_task(task, true, grid.configs[static_cast<std::size_t>(best)],
                      retrain_seed(seed, task.task_id), record.ledger, LedgerPhase::Retrain);
    record.chosen_configs.push_back(grid.configs[static_cast<std::size_t>(best)]);
  }

  record.eval = eval::evaluate_full(*state, stream);
  return {std::move(record), std::move(state)};
}

RunOutput run_seen_tasks_val(const TaskStream& stream, MethodKind method, const Grid& grid,
                             std::uint64_t seed, const LearnerFactory& factory,
                             const RunOptions& options) {
  (void)options;
  check_stream(stream, grid);
  RunRecord record = make_record(FrameworkKind::SeenTasksVal, method, seed, grid);
  auto state = factory(learner_init_seed(seed));

  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const Task& task = stream.tasks[t];
    const auto valset = pooled_val(stream, t + 1);  // all seen validation sets
    auto batch = run_trials(
        *state, grid.size(),
        [&](Learner& learner, int k, CostLedger& ledger) {
          learner.train_task(task, false, grid.configs[static_cast<std::size_t>(k)],
                             trial_seed(seed, task.task_id, k), ledger,
                             LedgerPhase::Selection);
        },
        [&](Learner& learner) { return eval::accuracy(learner, valset); });
    for (const auto& ledger : batch.ledgers) record.ledger.merge(ledger);
    record.phase_scores.push_back({task.task_id, batch.scores});

    // No retrain: the winning trial carries on as the learner state, so
    // validation data is never trained on.
    const int best = select_best(batch.scores);
    state = std::move(batch.learners[static_cast<std::size_t>(best)]);
    record.chosen_configs.push_back(grid.configs[static_cast<std::size_t>(best)]);
  }

  record.eval = eval::evaluate_full(*state, stream);
  return {std::move(record), std::move(state)};
}

RunOutput run_seen_tasks_mem(const TaskStream& stream, MethodKind method, const Grid& grid,
                             std::uint64_t seed, const LearnerFactory& factory,
                             const RunOptions& options) {
  check_stream(stream, grid);
  RunRecord record = make_record(FrameworkKind::SeenTasksMem, method, seed, grid);
  auto state = factory(learner_init_seed(seed));

  for (const auto& task : stream.tasks) {
    // Mark the memory-validation sample in the pre-task buffer; trial clones
    // inherit the marks, which keeps those entries out of their replay.
    std::vector<Example> valset = task.val;
    ReplayBuffer* buffer = state->replay_buffer();
    if (buffer && !buffer->empty()) {
      Rng hr(holdout_seed(seed, task.task_id));
      const auto held = buffer->holdout_proportional(options.holdout_fraction, hr);
      std::vector<int> held_example_ids;
      for (int slot : held) {
        valset.push_back(buffer->entries()[static_cast<std::size_t>(slot)].example);
        held_example_ids.push_back(valset.back().id);
      }
      if (options.hooks && options.hooks->on_holdout)
        options.hooks->on_holdout(task.task_id, held_example_ids);
    }

    auto batch = run_trials(
        *state, grid.size(),
        [&](Learner& learner, int k, CostLedger& ledger) {
          learner.train_task(task, false, grid.configs[static_cast<std::size_t>(k)],
                             trial_seed(seed, task.task_id, k), ledger,
                             LedgerPhase::Selection);
        },
        [&](Learner& learner) { return eval::median_per_class_score(learner, valset); });
    for (const auto& ledger : batch.ledgers) record.ledger.merge(ledger);
    record.phase_scores.push_back({task.task_id, batch.scores});

    const int best = select_best(batch.scores);
    if (buffer) buffer->release_holdout();
    state->train_task(task, true, grid.configs[static_cast<std::size_t>(best)],
                      retrain_seed(seed, task.task_id), record.ledger, LedgerPhase::Retrain);
    record.chosen_configs.push_back(grid.configs[static_cast<std::size_t>(best)]);
  }

  record.eval = eval::evaluate_full(*state, stream);
  return {std::move(record), std::move(state)};
}

RunOutput run_default_hp(const TaskStream& stream, MethodKind method, std::uint64_t seed,
                         const LearnerFactory& factory, const RunOptions& options) {
  (void)options;
  if (stream.tasks.empty()) throw ArgumentError("run: empty task stream");
  RunRecord record = make_record(FrameworkKind::DefaultHP, method, seed, Grid{});
  const HyperparamConfig hp = default_config(method);

  auto final_learner = factory(learner_init_seed(seed));
  for (const auto& task : stream.tasks)
    final_learner->train_task(task, true, hp, retrain_seed(seed, task.task_id),
                              record.ledger, LedgerPhase::Retrain);

  record.chosen_configs.assign(stream.tasks.size(), hp);
  record.eval = eval::evaluate_full(*final_learner, stream);
  return {std::move(record), std::move(final_learner)};
}

RunOutput run_framework(FrameworkKind framework, const TaskStream& stream, MethodKind method,
                        const Grid& grid, std::uint64_t seed, const LearnerFactory& factory,
                        const RunOptions& options) {
  switch (framework) {
    case FrameworkKind::EndOfTraining:
      return run_end_of_training(stream, method, grid, seed, factory, options);
    case FrameworkKind::FirstTask:
      return run_first_task(stream, method, grid, seed, factory, options);
    case FrameworkKind::CurrentTask:
      return run_current_task(stream, method, grid, seed, factory, options);
    case FrameworkKind::SeenTasksVal:
      return run_seen_tasks_val(stream, method, grid, seed, factory, options);
    case FrameworkKind::SeenTasksMem:
      return run_seen_tasks_mem(stream, method, grid, seed, factory, options);
    case FrameworkKind::DefaultHP:
      return run_default_hp(stream, method, seed, factory, options);
  }
  throw ArgumentError("run_framework: unknown framework");
}

}  // namespace clhpo::hpo

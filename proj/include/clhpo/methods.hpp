#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "clhpo/dataset.hpp"
#include "clhpo/hpo_types.hpp"
#include "clhpo/mlp.hpp"
#include "clhpo/replay_buffer.hpp"

namespace clhpo::methods {

struct TrainOptions {
  int epochs = 5;
  int batch_size = 32;
  double esmer_stable_decay = 0.999;  // EMA teacher decay, per step
};

// Method-internal constants kept out of the search grid.
inline constexpr double kEsmerLossEmaDecay = 0.99;  // running loss mean decay
inline constexpr double kEsmerDistillWeight = 1.0;
inline constexpr double kIcarlDistillWeight = 1.0;

struct IcarlAux {
  nn::MlpModel pre_task_model;  // snapshot taken at task start, distillation teacher
  bool has_pre_task = false;
  std::map<int, std::vector<Example>> exemplars;  // per class, in herding order
};

struct EsmerAux {
  nn::MlpModel stable;  // EMA copy of the online model
  double loss_ema = 0.0;
  bool loss_ema_ready = false;
};

// Everything a CL learner carries across tasks. Plain value type: trials
// snapshot it by copy.
struct TrainerState {
  MethodKind method = MethodKind::ER;
  nn::MlpModel model;
  ReplayBuffer buffer;
  std::vector<int> seen_classes;     // sorted; includes the task being trained
  std::vector<int> current_classes;  // classes of the task currently in training
  std::optional<IcarlAux> icarl;
  std::optional<EsmerAux> esmer;
};

TrainerState make_trainer(MethodKind method, nn::MlpModel model, int buffer_capacity,
                          int n_classes);

// Throws ArgumentError unless the config carries exactly the coefficients the
// method uses (and lr > 0).
void validate_config(MethodKind method, const HyperparamConfig& hp);

// ---------------------------------------------------------------------------
// Instrumentation: tests install an observer to see which example ids reach
// the optimizer. Called once per step, before the parameter update.
// ---------------------------------------------------------------------------
struct StepInfo {
  LedgerPhase phase = LedgerPhase::Selection;
  int task_id = 0;
  std::span<const int> current_ids;
  std::span<const int> replay_ids;
};
using StepObserver = std::function<void(const StepInfo&)>;
void set_step_observer(StepObserver obs);  // pass nullptr to clear

// ---------------------------------------------------------------------------
// Deterministic sub-streams: shuffling and buffer draws never share an RNG,
// so a method whose replay terms are inactive steps through exactly the same
// batches as plain SGD.
// ---------------------------------------------------------------------------
std::uint64_t shuffle_seed(std::uint64_t task_seed);
std::uint64_t buffer_seed(std::uint64_t task_seed);

// Batch index order for one task: per epoch, a fresh shuffle of [0, n) cut
// into batch_size slices. Exposed so reference loops in tests replay it.
std::vector<std::vector<int>> make_batch_schedule(int n, int epochs, int batch_size, Rng& rng);

// ---------------------------------------------------------------------------
// Per-batch loss rules. Replay terms vanish (no sampling, no forward pass)
// when the replay batch is empty or the coefficient is zero.
// ---------------------------------------------------------------------------

// CE over the concatenation of current and replay examples.
nn::LossGrad batch_loss_er(const TrainerState& state, std::span<const Example> current,
                           std::span<const BufferEntry> replay);

// CE(current masked to the current task's classes) + CE(replay over seen
// classes).
nn::LossGrad batch_loss_er_ace(const TrainerState& state, std::span<const Example> current,
                               std::span<const BufferEntry> replay);

// CE(current) + alpha * MSE(live logits vs stored logits, replay_1)
//             + beta  * CE(replay_2).
nn::LossGrad batch_loss_derpp(const TrainerState& state, std::span<const Example> current,
                              std::span<const BufferEntry> replay_1,
                              std::span<const BufferEntry> replay_2,
                              const HyperparamConfig& hp);

// CE(current) + distillation CE against the pre-task model's probabilities
// on replay inputs.
nn::LossGrad batch_loss_icarl(const TrainerState& state, std::span<const Example> current,
                              std::span<const BufferEntry> replay);

// Loss-margin-gated CE on the current batch plus MSE distillation toward the
// stable model on the replay batch. Updates the running loss mean in aux.
nn::LossGrad batch_loss_esmer(TrainerState& state, std::span<const Example> current,
                              std::span<const BufferEntry> replay,
                              const HyperparamConfig& hp);

// ---------------------------------------------------------------------------
// iCaRL specifics
// ---------------------------------------------------------------------------

// Greedy herding in the model's penultimate feature space: step k adds the
// example bringing the running exemplar mean closest to the class mean.
// Returns min(m, |class_data|) examples in selection order.
std::vector<Example> icarl_build_exemplars(const TrainerState& state,
                                           std::span<const Example> class_data, int m);

// Exemplar feature means per class under the current model.
std::map<int, std::vector<double>> icarl_class_means(const TrainerState& state);

// Nearest-mean-of-exemplars prediction; `classes` restricts the candidate
// set (task-IL), empty means all classes with exemplars.
int icarl_nme_predict(const TrainerState& state, const Example& x,
                      const std::vector<int>& classes = {});

// ---------------------------------------------------------------------------
// One task-training unit: epochs * ceil(n/batch) steps of the method's batch
// rule, then reservoir insertion of the task's examples (DER++ storing the
// model's logits), exemplar upkeep for iCaRL, and a ledger increment.
// ---------------------------------------------------------------------------
void train_task(TrainerState& state, int task_id, const std::vector<int>& task_classes,
                std::span<const Example> data, const HyperparamConfig& hp,
                const TrainOptions& opt, std::uint64_t seed, CostLedger& ledger,
                LedgerPhase phase);

}  // namespace clhpo::methods

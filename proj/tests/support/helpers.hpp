#pragma once

// Shared test fixtures: random batches, bitwise model comparison, a
// cost-counting stub learner, and a plain-SGD reference trainer.

#include <cstdint>
#include <memory>
#include <vector>

#include "clhpo/dataset.hpp"
#include "clhpo/hpo.hpp"
#include "clhpo/methods.hpp"
#include "clhpo/mlp.hpp"
#include "clhpo/rng.hpp"
#include "clhpo/stream.hpp"

namespace test_support {

inline std::vector<clhpo::Example> random_batch(clhpo::Rng& rng, int n, int dim,
                                                int n_classes) {
  std::vector<clhpo::Example> batch(static_cast<std::size_t>(n));
  int next_id = 0;
  for (auto& ex : batch) {
    ex.id = next_id++;
    ex.label = static_cast<int>(rng.uniform_int(0, n_classes - 1));
    ex.features.resize(static_cast<std::size_t>(dim));
    for (double& x : ex.features) x = rng.normal();
  }
  return batch;
}

inline bool models_equal_bitwise(const clhpo::nn::MlpModel& a, const clhpo::nn::MlpModel& b) {
  if (a.layer_dims != b.layer_dims) return false;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    if (a.weights[l].v != b.weights[l].v) return false;
    if (a.biases[l] != b.biases[l]) return false;
  }
  return true;
}

// Replays exactly the batch schedule the trainer uses and applies plain
// cross-entropy SGD: the independent reference for the degeneracy checks.
inline clhpo::nn::MlpModel plain_sgd_reference(clhpo::nn::MlpModel model,
                                               std::span<const clhpo::Example> data,
                                               double lr, int epochs, int batch_size,
                                               std::uint64_t task_seed) {
  clhpo::Rng shuffle_rng(clhpo::methods::shuffle_seed(task_seed));
  const auto schedule = clhpo::methods::make_batch_schedule(
      static_cast<int>(data.size()), epochs, batch_size, shuffle_rng);
  for (const auto& idx : schedule) {
    std::vector<clhpo::Example> batch;
    batch.reserve(idx.size());
    for (int i : idx) batch.push_back(data[static_cast<std::size_t>(i)]);
    const auto lg = clhpo::nn::loss_and_grad(model, batch);
    clhpo::nn::sgd_step(model, lg.grads, lr);
  }
  return model;
}

// Learner that never trains a model; it only honours the ledger contract.
class StubLearner : public clhpo::hpo::Learner {
 public:
  void train_task(const clhpo::Task& task, bool /*include_val*/,
                  const clhpo::HyperparamConfig& /*hp*/, std::uint64_t /*seed*/,
                  clhpo::CostLedger& ledger, clhpo::LedgerPhase phase) override {
    ledger.add_unit(phase, task.task_id);
  }
  int predict(const clhpo::Example&) const override { return 0; }
  int predict_within(const clhpo::Example&, const std::vector<int>& classes) const override {
    return classes.empty() ? 0 : classes.front();
  }
  std::unique_ptr<clhpo::hpo::Learner> clone() const override {
    return std::make_unique<StubLearner>(*this);
  }
};

inline clhpo::hpo::LearnerFactory stub_factory() {
  return [](std::uint64_t) { return std::make_unique<StubLearner>(); };
}

// Small labelled stream with train/val/test splits for orchestration tests.
inline clhpo::TaskStream tiny_stream(int n_tasks, std::uint64_t seed, int n_classes = 10,
                                     int per_class = 12, int dim = 2,
                                     double separation = 6.0) {
  const auto dataset = clhpo::synth_gaussian(n_classes, dim, per_class, separation, seed);
  auto stream = clhpo::build_split_stream(dataset, n_tasks, seed);
  clhpo::split_stream_train_val(stream, 0.1, seed);
  return stream;
}

}  // namespace test_support

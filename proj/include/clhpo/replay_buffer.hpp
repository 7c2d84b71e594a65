#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "clhpo/dataset.hpp"
#include "clhpo/mlp.hpp"
#include "clhpo/rng.hpp"

namespace clhpo {

struct BufferEntry {
  Example example;
  int task_id = 0;
  std::optional<std::vector<double>> stored_logits;
  int insertion_index = 0;  // stream position at insertion time
};

// Bounded exemplar memory with reservoir insertion. Entries can be marked
// held-out for validation; sample_batch never returns a held-out entry while
// the mark is active.
class ReplayBuffer {
 public:
  ReplayBuffer() : ReplayBuffer(0, 0) {}
  ReplayBuffer(int capacity, int n_classes);

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(entries_.size()); }
  int seen_count() const { return seen_count_; }
  bool empty() const { return entries_.empty(); }
  const std::vector<BufferEntry>& entries() const { return entries_; }
  const std::set<int>& held_out_ids() const { return held_out_; }

  // Standard reservoir step: append while below capacity, otherwise replace
  // slot j = rng(0, seen_count) when j lands inside the buffer. seen_count
  // advances either way, so retention probability is capacity / seen_count.
  void reservoir_insert(const Example& example, int task_id, Rng& rng,
                        const std::optional<std::vector<double>>& stored_logits = std::nullopt);

  // k entries uniformly without replacement from the eligible set (entries
  // minus held-out). Returns fewer when the eligible set is smaller.
  std::vector<BufferEntry> sample_batch(int k, Rng& rng) const;

  // Marks ceil(fraction * n) entries per task id as held out and returns the
  // chosen slot ids. Marks persist until release_holdout().
  std::set<int> holdout_proportional(double fraction, Rng& rng);
  void release_holdout();

  // Debug dump, one CSV row per entry.
  void dump_csv(const std::string& path) const;

 private:
  int capacity_;
  int n_classes_;
  int seen_count_ = 0;
  std::vector<BufferEntry> entries_;
  std::set<int> held_out_;  // slot indexes into entries_
};

// stable <- decay * stable + (1 - decay) * online, elementwise.
void ema_update(nn::MlpModel& stable, const nn::MlpModel& online, double decay);

}  // namespace clhpo

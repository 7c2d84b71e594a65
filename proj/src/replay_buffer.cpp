#include "clhpo/replay_buffer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "clhpo/error.hpp"

namespace clhpo {

ReplayBuffer::ReplayBuffer(int capacity, int n_classes)
    : capacity_(capacity), n_classes_(n_classes) {
  if (capacity < 0) throw ArgumentError("ReplayBuffer: capacity must be >= 0");
}

void ReplayBuffer::reservoir_insert(const Example& example, int task_id, Rng& rng,
                                    const std::optional<std::vector<double>>& stored_logits) {
  if (stored_logits && static_cast<int>(stored_logits->size()) != n_classes_)
    throw ShapeError("reservoir_insert: stored_logits length " +
                     std::to_string(stored_logits->size()) + " != class count " +
                     std::to_string(n_classes_));

  BufferEntry entry{example, task_id, stored_logits, seen_count_};
  if (size() < capacity_) {
    entries_.push_back(std::move(entry));
  } else {
    const auto j = rng.uniform_int(0, seen_count_);
    if (j < capacity_) {
      entries_[static_cast<std::size_t>(j)] = std::move(entry);
      held_out_.erase(static_cast<int>(j));  // the held-out entry was evicted
    }
  }
  ++seen_count_;
}

std::vector<BufferEntry> ReplayBuffer::sample_batch(int k, Rng& rng) const {
  if (k < 1) throw ArgumentError("sample_batch: k must be >= 1");
  std::vector<int> eligible;
  eligible.reserve(entries_.size());
  for (int i = 0; i < size(); ++i)
    if (!held_out_.count(i)) eligible.push_back(i);

  const int take = std::min<int>(k, static_cast<int>(eligible.size()));
  // Partial Fisher-Yates: only the first `take` positions need settling.
  for (int i = 0; i < take; ++i) {
    const auto j = rng.uniform_int(i, static_cast<std::int64_t>(eligible.size()) - 1);
    std::swap(eligible[static_cast<std::size_t>(i)], eligible[static_cast<std::size_t>(j)]);
  }
  std::vector<BufferEntry> out;
  out.reserve(static_cast<std::size_t>(take));
  for (int i = 0; i < take; ++i) out.push_back(entries_[static_cast<std::size_t>(eligible[i])]);
  return out;
}

std::set<int> ReplayBuffer::holdout_proportional(double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ArgumentError("holdout_proportional: fraction must be in (0, 1)");
  held_out_.clear();
  std::map<int, std::vector<int>> by_task;
  for (int i = 0; i < size(); ++i) by_task[entries_[static_cast<std::size_t>(i)].task_id].push_back(i);
  for (auto& [task_id, slots] : by_task) {
    (void)task_id;
    rng.shuffle(slots);
    const int n_hold =
        static_cast<int>(std::ceil(fraction * static_cast<double>(slots.size())));
    for (int i = 0; i < n_hold; ++i) held_out_.insert(slots[static_cast<std::size_t>(i)]);
  }
  return held_out_;
}

void ReplayBuffer::release_holdout() { held_out_.clear(); }

void ReplayBuffer::dump_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "slot,example_id,label,task_id,insertion_index,held_out\n";
  for (int i = 0; i < size(); ++i) {
    const auto& e = entries_[static_cast<std::size_t>(i)];
    out << i << ',' << e.example.id << ',' << e.example.label << ',' << e.task_id << ','
        << e.insertion_index << ',' << (held_out_.count(i) ? 1 : 0) << '\n';
  }
}

void ema_update(nn::MlpModel& stable, const nn::MlpModel& online, double decay) {
  if (!(decay > 0.0 && decay < 1.0))
    throw ArgumentError("ema_update: decay must be in (0, 1)");
  if (stable.layer_dims != online.layer_dims)
    throw ShapeError("ema_update: model shapes differ");
  for (std::size_t l = 0; l < stable.weights.size(); ++l) {
    for (std::size_t i = 0; i < stable.weights[l].v.size(); ++i)
      stable.weights[l].v[i] =
          decay * stable.weights[l].v[i] + (1.0 - decay) * online.weights[l].v[i];
    for (std::size_t i = 0; i < stable.biases[l].size(); ++i)
      stable.biases[l][i] = decay * stable.biases[l][i] + (1.0 - decay) * online.biases[l][i];
  }
}

}  // namespace clhpo

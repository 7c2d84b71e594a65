#pragma once

#include <cstdint>
#include <vector>

#include "clhpo/dataset.hpp"

namespace clhpo {

// One chunk of the stream. `class_set` is kept sorted. Test examples are
// carved out at stream-build time; train/val are populated by
// split_train_val.
struct Task {
  int task_id = 0;
  std::vector<int> class_set;
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
};

struct TaskStream {
  std::vector<Task> tasks;
  std::vector<int> class_universe;  // sorted union of all class_sets
};

// Equal-classes-per-task stream: classes are permuted by seed and divided
// into n_tasks groups. A per-class test fraction is held out before
// train/val splitting.
TaskStream build_split_stream(const Dataset& dataset, int n_tasks, std::uint64_t seed,
                              double test_fraction = 0.2);

// Variable-classes-per-task stream. Tasks take class_counts[i] classes, in
// order, from a seed-determined class permutation; leftover classes are
// dropped from the stream.
TaskStream build_hetero_stream(const Dataset& dataset, const std::vector<int>& class_counts,
                               std::uint64_t seed, double test_fraction = 0.2);

// Moves ceil(val_fraction * n_c) examples per class from the task's non-test
// pool into val; the remainder stays in train.
void split_train_val(Task& task, double val_fraction, std::uint64_t seed);

// Convenience: split every task, deriving one sub-seed per task.
void split_stream_train_val(TaskStream& stream, double val_fraction, std::uint64_t seed);

}  // namespace clhpo

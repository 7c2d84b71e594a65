#include "clhpo/stream.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

#include "clhpo/error.hpp"
#include "clhpo/rng.hpp"

namespace clhpo {

namespace {

std::vector<int> permuted_classes(int n_classes, Rng& rng) {
  std::vector<int> classes(n_classes);
  for (int c = 0; c < n_classes; ++c) classes[c] = c;
  rng.shuffle(classes);
  return classes;
}

std::map<int, std::vector<int>> indices_by_class(const Dataset& ds) {
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < ds.examples.size(); ++i)
    by_class[ds.examples[i].label].push_back(static_cast<int>(i));
  return by_class;
}

// Fills one task with all examples of `classes`, holding out a per-class
// test fraction first. Non-test examples land in train; split_train_val
// moves a slice of them to val later.
Task make_task(const Dataset& ds, int task_id, std::vector<int> classes,
               const std::map<int, std::vector<int>>& by_class, double test_fraction,
               Rng& rng) {
  Task task;
  task.task_id = task_id;
  std::sort(classes.begin(), classes.end());
  task.class_set = classes;
  for (int c : classes) {
    auto it = by_class.find(c);
    if (it == by_class.end()) continue;
    std::vector<int> idx = it->second;
    rng.shuffle(idx);
    const int n_test =
        static_cast<int>(std::floor(test_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Example& ex = ds.examples[idx[k]];
      if (static_cast<int>(k) < n_test)
        task.test.push_back(ex);
      else
        task.train.push_back(ex);
    }
  }
  return task;
}

}  // namespace

TaskStream build_split_stream(const Dataset& dataset, int n_tasks, std::uint64_t seed,
                              double test_fraction) {
  if (n_tasks < 1) throw ArgumentError("build_split_stream: n_tasks must be >= 1");
  if (dataset.n_classes % n_tasks != 0)
    throw ArgumentError("build_split_stream: " + std::to_string(dataset.n_classes) +
                        " classes not divisible by " + std::to_string(n_tasks) +
                        " tasks; use build_hetero_stream for uneven splits");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ArgumentError("build_split_stream: test_fraction must be in [0, 1)");

  Rng rng(derive_seed(seed, 0x5354u));  // "ST"
  const auto order = permuted_classes(dataset.n_classes, rng);
  const auto by_class = indices_by_class(dataset);
  const int per_task = dataset.n_classes / n_tasks;

  TaskStream stream;
  for (int t = 0; t < n_tasks; ++t) {
    std::vector<int> classes(order.begin() + static_cast<std::ptrdiff_t>(t) * per_task,
                             order.begin() + static_cast<std::ptrdiff_t>(t + 1) * per_task);
    stream.tasks.push_back(make_task(dataset, t, std::move(classes), by_class,
                                     test_fraction, rng));
  }
  for (int c = 0; c < dataset.n_classes; ++c) stream.class_universe.push_back(c);
  return stream;
}

TaskStream build_hetero_stream(const Dataset& dataset, const std::vector<int>& class_counts,
                               std::uint64_t seed, double test_fraction) {
  if (class_counts.empty()) throw ArgumentError("build_hetero_stream: empty class_counts");
  int total = 0;
  for (int c : class_counts) {
    if (c < 1) throw ArgumentError("build_hetero_stream: every class count must be >= 1");
    total += c;
  }
  if (total > dataset.n_classes)
    throw ArgumentError("build_hetero_stream: class_counts sum to " + std::to_string(total) +
                        " but dataset has only " + std::to_string(dataset.n_classes) +
                        " classes");

  Rng rng(derive_seed(seed, 0x4854u));  // "HT"
  const auto order = permuted_classes(dataset.n_classes, rng);
  const auto by_class = indices_by_class(dataset);

  TaskStream stream;
  int next = 0;
  for (std::size_t t = 0; t < class_counts.size(); ++t) {
    std::vector<int> classes(order.begin() + next, order.begin() + next + class_counts[t]);
    next += class_counts[t];
    Task task = make_task(dataset, static_cast<int>(t), std::move(classes), by_class,
                          test_fraction, rng);
    for (int c : task.class_set) stream.class_universe.push_back(c);
    stream.tasks.push_back(std::move(task));
  }
  std::sort(stream.class_universe.begin(), stream.class_universe.end());
  if (total < dataset.n_classes)
    std::clog << "build_hetero_stream: dropping " << (dataset.n_classes - total)
              << " unused classes\n";
  return stream;
}

void split_train_val(Task& task, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ArgumentError("split_train_val: val_fraction must be in (0, 1)");

  std::map<int, std::vector<Example>> pool;
  for (auto& ex : task.train) pool[ex.label].push_back(std::move(ex));
  for (auto& ex : task.val) pool[ex.label].push_back(std::move(ex));
  task.train.clear();
  task.val.clear();

  Rng rng(derive_seed(seed, 0x5356u, static_cast<std::uint64_t>(task.task_id)));
  for (int c : task.class_set) {
    auto it = pool.find(c);
    if (it == pool.end()) continue;
    auto& examples = it->second;
    if (examples.size() < 2)
      throw ArgumentError("split_train_val: class " + std::to_string(c) +
                          " has only " + std::to_string(examples.size()) +
                          " non-test example(s)");
    std::vector<int> idx(examples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    rng.shuffle(idx);
    const int n_val = static_cast<int>(
        std::ceil(val_fraction * static_cast<double>(examples.size())));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (static_cast<int>(k) < n_val)
        task.val.push_back(examples[idx[k]]);
      else
        task.train.push_back(examples[idx[k]]);
    }
  }
}

void split_stream_train_val(TaskStream& stream, double val_fraction, std::uint64_t seed) {
  for (auto& task : stream.tasks) split_train_val(task, val_fraction, seed);
}

}  // namespace clhpo

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clhpo/hpo.hpp"
#include "clhpo/stream.hpp"

namespace clhpo::run {

// A parsed "clhpo-config-v1" experiment file. Every (method, framework,
// seed) triple expands to one run.
struct ExperimentPlan {
  enum class StreamSource { Synthetic, Csv };
  enum class SplitMode { Equal, Hetero };

  StreamSource source = StreamSource::Synthetic;
  int classes = 10;
  int dim = 8;
  int per_class = 200;
  double separation = 4.0;
  std::string csv_path;
  std::string label_column = "label";

  SplitMode split = SplitMode::Equal;
  int tasks = 5;
  std::vector<int> class_counts;
  double test_fraction = 0.2;
  double val_fraction = 0.1;
  double holdout_fraction = 0.1;

  std::vector<MethodKind> methods;
  std::vector<FrameworkKind> frameworks;
  std::vector<std::uint64_t> seeds;

  int epochs = 5;
  int batch_size = 32;
  int buffer_capacity = 512;
  double esmer_stable_decay = 0.999;
  std::vector<int> hidden = {32};
  std::string output = "results";
};

ExperimentPlan parse_config(const std::string& path);

// Stream construction for one run seed: dataset, task split and train/val
// split all derive from the seed, so a run is reproducible from (plan, seed)
// alone.
TaskStream build_stream(const ExperimentPlan& plan, std::uint64_t run_seed);

// Learner factory matching the plan's training parameters.
hpo::LearnerFactory make_learner_factory(const ExperimentPlan& plan, MethodKind method,
                                         int n_classes, int input_dim);

struct ExecuteOptions {
  std::optional<std::uint64_t> seed_override;
  int jobs = 1;
  std::optional<std::string> output_override;
  bool dump_buffers = false;  // write each run's final replay buffer as CSV
};

struct ExecuteResult {
  int n_runs = 0;
  int n_failed = 0;
  std::string output_dir;
};

// Runs the whole plan: one run file per triple, histogram CSVs per selection
// phase, one stream summary per seed (recording the class-to-task
// assignment), and an index listing every output. Files are written to a
// temp name and renamed; a failing run is recorded in the index and does not
// stop the rest.
ExecuteResult execute(const ExperimentPlan& plan, const ExecuteOptions& options = {});

// Aggregates the run files in a results directory into a comparison table
// (mean and standard error over seeds, per method and framework, plus mean
// ledger counters). The bold marker flags a framework whose class-IL mean
// beats every other framework for that method by more than 0.005. Failed
// seeds counted from index.txt land in the missing_seeds column.
void report(const std::string& results_dir, const std::string& out_path);

}  // namespace clhpo::run

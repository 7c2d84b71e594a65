#include <cinttypes>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clhpo/dataset.hpp"
#include "clhpo/error.hpp"
#include "clhpo/experiment.hpp"
#include "clhpo/hpo.hpp"
#include "clhpo/mlp.hpp"
#include "clhpo/stream.hpp"

namespace {

using namespace clhpo;

// Counts task-training units without doing any training; lets the cost
// accounting be checked in milliseconds.
class CountingLearner : public hpo::Learner {
 public:
  void train_task(const Task& task, bool /*include_val*/, const HyperparamConfig& /*hp*/,
                  std::uint64_t /*seed*/, CostLedger& ledger, LedgerPhase phase) override {
    ledger.add_unit(phase, task.task_id);
  }
  int predict(const Example&) const override { return 0; }
  int predict_within(const Example&, const std::vector<int>& classes) const override {
    return classes.empty() ? 0 : classes.front();
  }
  std::unique_ptr<hpo::Learner> clone() const override {
    return std::make_unique<CountingLearner>(*this);
  }
};

int cmd_run(const std::string& config_path, const run::ExecuteOptions& options) {
  run::ExperimentPlan plan;
  try {
    plan = run::parse_config(config_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  }
  try {
    const auto result = run::execute(plan, options);
    std::printf("%d run(s), %d failed; outputs in %s\n", result.n_runs, result.n_failed,
                result.output_dir.c_str());
    return result.n_failed == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_report(const std::string& dir, std::string out_path) {
  if (out_path.empty()) out_path = dir + "/comparison.csv";
  try {
    run::report(dir, out_path);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_grad_check(int cases, std::uint64_t seed, double epsilon) {
  const auto summary = nn::finite_difference_check(cases, seed, epsilon);
  std::printf("gradient check over %d cases (eps=%g)\n", summary.cases, epsilon);
  std::printf("  cross-entropy        max rel error %.3e\n", summary.max_rel_error_ce);
  std::printf("  masked cross-entropy max rel error %.3e\n", summary.max_rel_error_masked_ce);
  std::printf("  logit MSE            max rel error %.3e\n", summary.max_rel_error_mse);
  const bool ok = summary.worst() < 1e-5;
  std::printf("%s (threshold 1e-5)\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

long expected_units(FrameworkKind framework, long k, long t) {
  switch (framework) {
    case FrameworkKind::EndOfTraining: return k * t + t;
    case FrameworkKind::FirstTask: return k + t;
    case FrameworkKind::CurrentTask: return k * t + t;
    case FrameworkKind::SeenTasksVal: return k * t;
    case FrameworkKind::SeenTasksMem: return k * t + t;
    case FrameworkKind::DefaultHP: return t;
  }
  return -1;
}

int cmd_ledger_check() {
  const int ks[] = {1, 3, 10};
  const int ts[] = {1, 2, 5};
  const FrameworkKind frameworks[] = {
      FrameworkKind::EndOfTraining, FrameworkKind::FirstTask,  FrameworkKind::CurrentTask,
      FrameworkKind::SeenTasksVal,  FrameworkKind::SeenTasksMem, FrameworkKind::DefaultHP,
  };
  hpo::LearnerFactory factory = [](std::uint64_t) { return std::make_unique<CountingLearner>(); };

  bool all_ok = true;
  std::printf("%-16s %3s %3s %10s %10s\n", "framework", "K", "T", "measured", "expected");
  for (int t_count : ts) {
    const Dataset ds = synth_gaussian(10, 2, 12, 6.0, 99);
    TaskStream stream = build_split_stream(ds, t_count, 99);
    split_stream_train_val(stream, 0.1, 99);
    for (int k_count : ks) {
      Grid grid;
      for (int k = 0; k < k_count; ++k) {
        HyperparamConfig hp;
        hp.lr = 0.1 / (k + 1);
        grid.configs.push_back(hp);
      }
      for (FrameworkKind framework : frameworks) {
        const auto output = hpo::run_framework(framework, stream, MethodKind::ER, grid, 7,
                                               factory);
        const long measured = output.record.ledger.total_units();
        const long expected = expected_units(framework, k_count, t_count);
        const bool ok = measured == expected;
        all_ok = all_ok && ok;
        std::printf("%-16s %3d %3d %10ld %10ld %s\n", to_string(framework).c_str(), k_count,
                    t_count, measured, expected, ok ? "" : "MISMATCH");
      }
    }
  }
  std::printf("%s\n", all_ok ? "PASS" : "FAIL");
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning HPO engine: task streams, replay methods, "
               "HPO frameworks, exact cost accounting"};
  app.require_subcommand(1);

  std::string config_path;
  run::ExecuteOptions exec_options;
  std::uint64_t seed_override = 0;
  std::string output_dir;
  auto* run_cmd = app.add_subcommand("run", "Execute an experiment plan");
  run_cmd->add_option("config", config_path, "clhpo-config-v1 file")->required();
  auto* seed_flag =
      run_cmd->add_option("--seed-override", seed_override, "Replace the plan's seed list");
  run_cmd->add_option("--jobs", exec_options.jobs, "Concurrent runs (default 1)");
  auto* out_flag = run_cmd->add_option("--output", output_dir, "Override output directory");
  run_cmd->add_flag("--dump-buffers", exec_options.dump_buffers,
                    "Write each run's final replay buffer as CSV");

  std::string report_dir;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "Aggregate run files into a comparison table");
  report_cmd->add_option("dir", report_dir, "Results directory")->required();
  report_cmd->add_option("--output", report_out, "Output CSV (default <dir>/comparison.csv)");

  int gc_cases = 50;
  std::uint64_t gc_seed = 20240601;
  double gc_eps = 1e-4;
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference gradient verification");
  grad_cmd->add_option("--cases", gc_cases, "Number of random cases (default 50)");
  grad_cmd->add_option("--seed", gc_seed, "RNG seed");
  grad_cmd->add_option("--epsilon", gc_eps, "Perturbation size (default 1e-4)");

  auto* ledger_cmd =
      app.add_subcommand("ledger-check", "Exact task-training-unit counts over a (K,T) sweep");

  CLI11_PARSE(app, argc, argv);

  if (*run_cmd) {
    if (*seed_flag) exec_options.seed_override = seed_override;
    if (*out_flag) exec_options.output_override = output_dir;
    return cmd_run(config_path, exec_options);
  }
  if (*report_cmd) return cmd_report(report_dir, report_out);
  if (*grad_cmd) return cmd_grad_check(gc_cases, gc_seed, gc_eps);
  if (*ledger_cmd) return cmd_ledger_check();
  return 1;
}

#include "clhpo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "clhpo/error.hpp"
#include "clhpo/report_io.hpp"
#include "clhpo/rng.hpp"

namespace fs = std::filesystem;

namespace clhpo::run {

namespace {

constexpr std::uint64_t kDataTag = 0x44415441ULL;   // "DATA"
constexpr std::uint64_t kStreamTag = 0x53545245ULL; // "STRE"
constexpr std::uint64_t kSplitTag = 0x53504c54ULL;  // "SPLT"

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("config: key '" + key + "': not an integer: '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("config: key '" + key + "': not a number: '" + value + "'");
  }
}

}  // namespace

ExperimentPlan parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("config: cannot open " + path);

  ExperimentPlan plan;
  bool saw_schema = false, saw_stream = false;
  std::set<std::string> seen_keys;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("config: line " + std::to_string(line_no) +
                          ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen_keys.insert(key).second)
      throw ArgumentError("config: duplicate key '" + key + "'");

    if (key == "schema") {
      if (value != "clhpo-config-v1")
        throw ArgumentError("config: unsupported schema '" + value + "'");
      saw_schema = true;
    } else if (key == "stream") {
      if (value == "synthetic")
        plan.source = ExperimentPlan::StreamSource::Synthetic;
      else if (value == "csv")
        plan.source = ExperimentPlan::StreamSource::Csv;
      else
        throw ArgumentError("config: stream must be 'synthetic' or 'csv', got '" + value + "'");
      saw_stream = true;
    } else if (key == "classes") {
      plan.classes = to_int(key, value);
    } else if (key == "dim") {
      plan.dim = to_int(key, value);
    } else if (key == "per_class") {
      plan.per_class = to_int(key, value);
    } else if (key == "separation") {
      plan.separation = to_double(key, value);
    } else if (key == "csv_path") {
      plan.csv_path = value;
    } else if (key == "label_column") {
      plan.label_column = value;
    } else if (key == "split") {
      if (value == "equal")
        plan.split = ExperimentPlan::SplitMode::Equal;
      else if (value == "hetero")
        plan.split = ExperimentPlan::SplitMode::Hetero;
      else
        throw ArgumentError("config: split must be 'equal' or 'hetero', got '" + value + "'");
    } else if (key == "tasks") {
      plan.tasks = to_int(key, value);
    } else if (key == "class_counts") {
      plan.class_counts.clear();
      for (const auto& item : split_list(value)) plan.class_counts.push_back(to_int(key, item));
    } else if (key == "test_fraction") {
      plan.test_fraction = to_double(key, value);
    } else if (key == "val_fraction") {
      plan.val_fraction = to_double(key, value);
    } else if (key == "holdout_fraction") {
      plan.holdout_fraction = to_double(key, value);
    } else if (key == "methods") {
      plan.methods.clear();
      for (const auto& item : split_list(value)) plan.methods.push_back(method_from_string(item));
    } else if (key == "frameworks") {
      plan.frameworks.clear();
      for (const auto& item : split_list(value))
        plan.frameworks.push_back(framework_from_string(item));
    } else if (key == "seeds") {
      plan.seeds.clear();
      for (const auto& item : split_list(value))
        plan.seeds.push_back(static_cast<std::uint64_t>(to_int(key, item)));
    } else if (key == "epochs") {
      plan.epochs = to_int(key, value);
    } else if (key == "batch_size") {
      plan.batch_size = to_int(key, value);
    } else if (key == "buffer_capacity") {
      plan.buffer_capacity = to_int(key, value);
    } else if (key == "esmer_stable_decay") {
      plan.esmer_stable_decay = to_double(key, value);
    } else if (key == "hidden") {
      plan.hidden.clear();
      for (const auto& item : split_list(value)) plan.hidden.push_back(to_int(key, item));
    } else if (key == "output") {
      plan.output = value;
    } else {
      throw ArgumentError("config: unknown key '" + key + "'");
    }
  }

  if (!saw_schema) throw ArgumentError("config: missing 'schema = clhpo-config-v1'");
  if (!saw_stream) throw ArgumentError("config: missing 'stream' key");
  if (plan.methods.empty()) throw ArgumentError("config: missing 'methods'");
  if (plan.frameworks.empty()) throw ArgumentError("config: missing 'frameworks'");
  if (plan.seeds.empty()) throw ArgumentError("config: missing 'seeds'");
  if (plan.source == ExperimentPlan::StreamSource::Csv) {
    if (plan.csv_path.empty()) throw ArgumentError("config: csv stream needs 'csv_path'");
    if (!fs::exists(plan.csv_path))
      throw ArgumentError("config: csv_path does not exist: " + plan.csv_path);
  }
  if (plan.split == ExperimentPlan::SplitMode::Hetero && plan.class_counts.empty())
    throw ArgumentError("config: hetero split needs 'class_counts'");
  if (!(plan.val_fraction > 0.0 && plan.val_fraction < 1.0))
    throw ArgumentError("config: val_fraction must be in (0, 1)");
  if (!(plan.test_fraction >= 0.0 && plan.test_fraction < 1.0))
    throw ArgumentError("config: test_fraction must be in [0, 1)");
  if (!(plan.holdout_fraction > 0.0 && plan.holdout_fraction < 1.0))
    throw ArgumentError("config: holdout_fraction must be in (0, 1)");
  if (plan.epochs < 1 || plan.batch_size < 1)
    throw ArgumentError("config: epochs and batch_size must be >= 1");
  if (plan.buffer_capacity < 0) throw ArgumentError("config: buffer_capacity must be >= 0");
  if (!(plan.esmer_stable_decay > 0.0 && plan.esmer_stable_decay < 1.0))
    throw ArgumentError("config: esmer_stable_decay must be in (0, 1)");
  return plan;
}

TaskStream build_stream(const ExperimentPlan& plan, std::uint64_t run_seed) {
  Dataset dataset;
  if (plan.source == ExperimentPlan::StreamSource::Synthetic) {
    dataset = synth_gaussian(plan.classes, plan.dim, plan.per_class, plan.separation,
                             derive_seed(run_seed, kDataTag));
  } else {
    dataset = ingest_csv(plan.csv_path, plan.label_column);
  }
  TaskStream stream;
  if (plan.split == ExperimentPlan::SplitMode::Equal) {
    stream = build_split_stream(dataset, plan.tasks, derive_seed(run_seed, kStreamTag),
                                plan.test_fraction);
  } else {
    stream = build_hetero_stream(dataset, plan.class_counts, derive_seed(run_seed, kStreamTag),
                                 plan.test_fraction);
  }
  split_stream_train_val(stream, plan.val_fraction, derive_seed(run_seed, kSplitTag));
  return stream;
}

hpo::LearnerFactory make_learner_factory(const ExperimentPlan& plan, MethodKind method,
                                         int n_classes, int input_dim) {
  std::vector<int> dims;
  dims.push_back(input_dim);
  for (int h : plan.hidden) dims.push_back(h);
  dims.push_back(n_classes);
  methods::TrainOptions opt;
  opt.epochs = plan.epochs;
  opt.batch_size = plan.batch_size;
  opt.esmer_stable_decay = plan.esmer_stable_decay;
  const int capacity = plan.buffer_capacity;
  return [method, dims, capacity, n_classes, opt](std::uint64_t init_seed) {
    return std::make_unique<hpo::MethodLearner>(method, dims, capacity, n_classes, opt,
                                                init_seed);
  };
}

namespace {

struct RunSpec {
  MethodKind method;
  FrameworkKind framework;
  std::uint64_t seed;
};

std::string run_stem(const RunSpec& spec) {
  return "run_" + to_string(spec.method) + "_" + to_string(spec.framework) + "_seed" +
         std::to_string(spec.seed);
}

void atomic_write_rename(const fs::path& final_path,
                         const std::function<void(const std::string&)>& writer) {
  const fs::path tmp = final_path.string() + ".tmp";
  writer(tmp.string());
  fs::rename(tmp, final_path);
}

struct RunOutcome {
  RunSpec spec;
  bool ok = false;
  std::string run_file;
  std::vector<std::string> hist_files;
  std::string error;
};

// One summary per seed records the seed-determined class-to-task assignment
// and split sizes.
void write_stream_summary(const ExperimentPlan& plan, std::uint64_t seed,
                          const fs::path& out_dir) {
  const TaskStream stream = build_stream(plan, seed);
  std::ostringstream out;
  out << "clhpo-stream-v1\n";
  out << "seed " << seed << '\n';
  out << "tasks " << stream.tasks.size() << '\n';
  for (const auto& task : stream.tasks) {
    out << "task " << task.task_id << " classes ";
    for (std::size_t i = 0; i < task.class_set.size(); ++i) {
      if (i) out << ',';
      out << task.class_set[i];
    }
    out << " train " << task.train.size() << " val " << task.val.size() << " test "
        << task.test.size() << '\n';
  }
  atomic_write_rename(out_dir / ("stream_seed" + std::to_string(seed) + ".txt"),
                      [&](const std::string& p) {
                        std::ofstream f(p);
                        if (!f) throw IoError("cannot write " + p);
                        f << out.str();
                      });
}

RunOutcome execute_one(const ExperimentPlan& plan, const RunSpec& spec,
                       const fs::path& out_dir, bool dump_buffers) {
  RunOutcome outcome;
  outcome.spec = spec;
  try {
    const TaskStream stream = build_stream(plan, spec.seed);
    const int n_classes =
        stream.class_universe.empty()
            ? 0
            : *std::max_element(stream.class_universe.begin(), stream.class_universe.end()) + 1;
    int input_dim = 0;
    for (const auto& task : stream.tasks) {
      if (!task.train.empty()) {
        input_dim = static_cast<int>(task.train.front().features.size());
        break;
      }
    }
    const auto factory = make_learner_factory(plan, spec.method, n_classes, input_dim);
    const Grid grid = make_grid(spec.method);
    hpo::RunOptions options;
    options.holdout_fraction = plan.holdout_fraction;

    auto output = hpo::run_framework(spec.framework, stream, spec.method, grid, spec.seed,
                                     factory, options);

    const std::string stem = run_stem(spec);
    const fs::path run_path = out_dir / (stem + ".run");
    atomic_write_rename(run_path,
                        [&](const std::string& p) { persist_run(output.record, p); });
    outcome.run_file = run_path.filename().string();

    for (std::size_t i = 0; i < output.record.phase_scores.size(); ++i) {
      const auto& phase = output.record.phase_scores[i];
      std::vector<std::pair<HyperparamConfig, double>> scores;
      for (std::size_t k = 0; k < phase.scores.size(); ++k)
        scores.emplace_back(output.record.grid.configs[k], phase.scores[k]);
      const fs::path hist_path =
          out_dir / ("hist_" + to_string(spec.method) + "_" + to_string(spec.framework) +
                     "_seed" + std::to_string(spec.seed) + "_phase" + std::to_string(i) +
                     ".csv");
      atomic_write_rename(hist_path,
                          [&](const std::string& p) { eval::emit_histogram(scores, p); });
      outcome.hist_files.push_back(hist_path.filename().string());
    }
    if (dump_buffers) {
      if (ReplayBuffer* buffer = output.final_learner->replay_buffer()) {
        const fs::path buf_path = out_dir / ("buffer_" + stem + ".csv");
        atomic_write_rename(buf_path, [&](const std::string& p) { buffer->dump_csv(p); });
        outcome.hist_files.push_back(buf_path.filename().string());
      }
    }
    outcome.ok = true;
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.error = e.what();
  }
  return outcome;
}

}  // namespace

ExecuteResult execute(const ExperimentPlan& plan, const ExecuteOptions& options) {
  std::vector<std::uint64_t> seeds = plan.seeds;
  if (options.seed_override) seeds = {*options.seed_override};

  std::vector<RunSpec> specs;
  for (MethodKind method : plan.methods)
    for (FrameworkKind framework : plan.frameworks)
      for (std::uint64_t seed : seeds) specs.push_back({method, framework, seed});

  const fs::path out_dir = options.output_override.value_or(plan.output);
  fs::create_directories(out_dir);

  for (std::uint64_t seed : seeds) {
    try {
      write_stream_summary(plan, seed, out_dir);
    } catch (const std::exception&) {
      // the per-run error paths report stream problems with full context
    }
  }

  std::vector<RunOutcome> outcomes(specs.size());
  const int n = static_cast<int>(specs.size());
  if (options.jobs > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(options.jobs)
    for (int i = 0; i < n; ++i)
      outcomes[static_cast<std::size_t>(i)] =
          execute_one(plan, specs[static_cast<std::size_t>(i)], out_dir, options.dump_buffers);
  } else {
    for (int i = 0; i < n; ++i)
      outcomes[static_cast<std::size_t>(i)] =
          execute_one(plan, specs[static_cast<std::size_t>(i)], out_dir, options.dump_buffers);
  }

  std::ostringstream index;
  index << "clhpo-index-v1\n";
  int failed = 0;
  for (const auto& outcome : outcomes) {
    if (outcome.ok) {
      index << "ok " << to_string(outcome.spec.method) << ' '
            << to_string(outcome.spec.framework) << ' ' << outcome.spec.seed << ' '
            << outcome.run_file;
      for (const auto& h : outcome.hist_files) index << ' ' << h;
      index << '\n';
    } else {
      ++failed;
      index << "fail " << to_string(outcome.spec.method) << ' '
            << to_string(outcome.spec.framework) << ' ' << outcome.spec.seed << " - "
            << outcome.error << '\n';
    }
  }
  atomic_write_rename(out_dir / "index.txt", [&](const std::string& p) {
    std::ofstream f(p);
    if (!f) throw IoError("cannot write " + p);
    f << index.str();
  });

  ExecuteResult result;
  result.n_runs = n;
  result.n_failed = failed;
  result.output_dir = out_dir.string();
  return result;
}

void report(const std::string& results_dir, const std::string& out_path) {
  std::vector<fs::path> run_files;
  if (!fs::is_directory(results_dir))
    throw ArgumentError("report: not a directory: " + results_dir);
  for (const auto& entry : fs::directory_iterator(results_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".run")
      run_files.push_back(entry.path());
  std::sort(run_files.begin(), run_files.end());
  if (run_files.empty())
    throw ArgumentError("report: no .run files in " + results_dir);

  struct Cell {
    std::vector<double> class_il, task_il;
    std::vector<double> selection, retrain;
    int missing = 0;
  };
  std::map<std::pair<int, int>, Cell> cells;  // (method, framework) -> stats
  for (const auto& path : run_files) {
    const auto record = load_run(path.string());
    auto& cell = cells[{static_cast<int>(record.method), static_cast<int>(record.framework)}];
    cell.class_il.push_back(record.eval.average_accuracy_class_il);
    cell.task_il.push_back(record.eval.average_accuracy_task_il);
    cell.selection.push_back(static_cast<double>(record.ledger.selection_units()));
    cell.retrain.push_back(static_cast<double>(record.ledger.retrain_units()));
  }

  // Failed runs listed in the index mark their cell as incomplete.
  {
    std::ifstream index(fs::path(results_dir) / "index.txt");
    std::string line;
    while (index && std::getline(index, line)) {
      std::istringstream ls(line);
      std::string status, method_s, framework_s;
      if (!(ls >> status >> method_s >> framework_s) || status != "fail") continue;
      try {
        const auto key = std::make_pair(static_cast<int>(method_from_string(method_s)),
                                        static_cast<int>(framework_from_string(framework_s)));
        ++cells[key].missing;
      } catch (const std::exception&) {
        // unknown names in a stale index are not this table's problem
      }
    }
  }

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto stderr_of = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return sd / std::sqrt(static_cast<double>(v.size()));
  };

  // Bold: class-IL mean beats the best of the other frameworks for the same
  // method by more than 0.005 (half an accuracy point).
  std::map<std::pair<int, int>, bool> bold;
  for (const auto& [key, cell] : cells) {
    if (cell.class_il.empty()) continue;
    double best_other = -1.0;
    bool has_other = false;
    for (const auto& [other_key, other_cell] : cells) {
      if (other_key.first != key.first || other_key == key || other_cell.class_il.empty())
        continue;
      has_other = true;
      best_other = std::max(best_other, mean(other_cell.class_il));
    }
    bold[key] = has_other && mean(cell.class_il) > best_other + 0.005;
  }

  std::ostringstream out;
  out << "method,framework,n_seeds,missing_seeds,class_il_mean,class_il_se,task_il_mean,"
         "task_il_se,selection_units_mean,retrain_units_mean,total_units_mean,bold\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& [key, cell] : cells) {
    out << to_string(static_cast<MethodKind>(key.first)) << ','
        << to_string(static_cast<FrameworkKind>(key.second)) << ',' << cell.class_il.size()
        << ',' << cell.missing << ',';
    if (cell.class_il.empty()) {
      out << ",,,,,,,0\n";  // failed cell: no statistics
      continue;
    }
    out << num(mean(cell.class_il)) << ',' << num(stderr_of(cell.class_il)) << ','
        << num(mean(cell.task_il)) << ',' << num(stderr_of(cell.task_il)) << ','
        << num(mean(cell.selection)) << ',' << num(mean(cell.retrain)) << ','
        << num(mean(cell.selection) + mean(cell.retrain)) << ',' << (bold[key] ? 1 : 0)
        << '\n';
  }

  std::ofstream f(out_path);
  if (!f) throw IoError("report: cannot write " + out_path);
  f << out.str();
}

}  // namespace clhpo::run

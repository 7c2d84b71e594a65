#include "clhpo/report_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "clhpo/error.hpp"

namespace clhpo {

namespace {

std::string hex(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", x);
  return buf;
}

double parse_hex(const std::string& s) {
  const char* p = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(p, &end);
  if (end != p + s.size()) throw ParseError("run file: bad float '" + s + "'");
  return v;
}

void write_config(std::ostream& out, const HyperparamConfig& hp) {
  out << hex(hp.lr);
  out << ' ' << (hp.alpha ? hex(*hp.alpha) : "-");
  out << ' ' << (hp.beta ? hex(*hp.beta) : "-");
  out << ' ' << (hp.loss_margin ? hex(*hp.loss_margin) : "-");
}

HyperparamConfig read_config(std::istringstream& in) {
  std::string lr, a, b, m;
  if (!(in >> lr >> a >> b >> m)) throw ParseError("run file: truncated config");
  HyperparamConfig hp;
  hp.lr = parse_hex(lr);
  if (a != "-") hp.alpha = parse_hex(a);
  if (b != "-") hp.beta = parse_hex(b);
  if (m != "-") hp.loss_margin = parse_hex(m);
  return hp;
}

std::istringstream expect_line(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("run file: missing '" + key + "' line");
  std::istringstream ls(line);
  std::string got;
  ls >> got;
  if (got != key)
    throw ParseError("run file: expected '" + key + "', got '" + got + "'");
  return ls;
}

}  // namespace

void persist_run(const hpo::RunRecord& record, const std::string& path) {
  std::ostringstream out;
  out << "clhpo-run-v1\n";
  out << "framework " << to_string(record.framework) << '\n';
  out << "method " << to_string(record.method) << '\n';
  out << "seed " << record.seed << '\n';
  out << "tasks " << record.chosen_configs.size() << '\n';

  out << "grid " << record.grid.configs.size() << '\n';
  for (std::size_t i = 0; i < record.grid.configs.size(); ++i) {
    out << "gridcfg " << i << ' ';
    write_config(out, record.grid.configs[i]);
    out << '\n';
  }
  for (std::size_t i = 0; i < record.chosen_configs.size(); ++i) {
    out << "chosen " << i << ' ';
    write_config(out, record.chosen_configs[i]);
    out << '\n';
  }

  out << "ledger_selection " << record.ledger.selection_units() << '\n';
  out << "ledger_retrain " << record.ledger.retrain_units() << '\n';
  const auto breakdown = record.ledger.per_task_breakdown();
  out << "ledger_tasks " << breakdown.size() << '\n';
  for (const auto& tb : breakdown)
    out << "ledger_task " << tb.task_id << ' ' << tb.selection_units << ' '
        << tb.retrain_units << '\n';

  out << "phases " << record.phase_scores.size() << '\n';
  for (const auto& phase : record.phase_scores) {
    out << "phase " << phase.task_id << " " << phase.scores.size();
    for (double s : phase.scores) out << ' ' << hex(s);
    out << '\n';
  }

  const auto& ev = record.eval;
  out << "eval_class_il " << ev.per_task_class_il.size();
  for (double a : ev.per_task_class_il) out << ' ' << hex(a);
  out << '\n';
  out << "eval_task_il " << ev.per_task_task_il.size();
  for (double a : ev.per_task_task_il) out << ' ' << hex(a);
  out << '\n';
  out << "eval_avg_class_il " << hex(ev.average_accuracy_class_il) << '\n';
  out << "eval_avg_task_il " << hex(ev.average_accuracy_task_il) << '\n';
  out << "per_class " << ev.per_class_accuracy.size() << '\n';
  for (const auto& [cls, acc] : ev.per_class_accuracy)
    out << "class " << cls << ' ' << hex(acc) << '\n';
  out << "end\n";

  std::ofstream file(path);
  if (!file) throw IoError("persist_run: cannot write " + path);
  file << out.str();
  if (!file) throw IoError("persist_run: write failed for " + path);
}

hpo::RunRecord load_run(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_run: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "clhpo-run-v1")
    throw ParseError(path + ": missing clhpo-run-v1 header");

  hpo::RunRecord record;
  {
    auto ls = expect_line(in, "framework");
    std::string s;
    ls >> s;
    record.framework = framework_from_string(s);
  }
  {
    auto ls = expect_line(in, "method");
    std::string s;
    ls >> s;
    record.method = method_from_string(s);
  }
  {
    auto ls = expect_line(in, "seed");
    ls >> record.seed;
  }
  std::size_t n_tasks = 0;
  {
    auto ls = expect_line(in, "tasks");
    ls >> n_tasks;
  }
  std::size_t n_grid = 0;
  {
    auto ls = expect_line(in, "grid");
    ls >> n_grid;
  }
  for (std::size_t i = 0; i < n_grid; ++i) {
    auto ls = expect_line(in, "gridcfg");
    std::size_t idx;
    ls >> idx;
    record.grid.configs.push_back(read_config(ls));
  }
  for (std::size_t i = 0; i < n_tasks; ++i) {
    auto ls = expect_line(in, "chosen");
    std::size_t idx;
    ls >> idx;
    record.chosen_configs.push_back(read_config(ls));
  }

  long selection = 0, retrain = 0;
  {
    auto ls = expect_line(in, "ledger_selection");
    ls >> selection;
  }
  {
    auto ls = expect_line(in, "ledger_retrain");
    ls >> retrain;
  }
  std::size_t n_breakdown = 0;
  {
    auto ls = expect_line(in, "ledger_tasks");
    ls >> n_breakdown;
  }
  std::vector<CostLedger::TaskBreakdown> breakdown;
  for (std::size_t i = 0; i < n_breakdown; ++i) {
    auto ls = expect_line(in, "ledger_task");
    CostLedger::TaskBreakdown tb;
    ls >> tb.task_id >> tb.selection_units >> tb.retrain_units;
    breakdown.push_back(tb);
  }
  record.ledger = CostLedger::from_counts(selection, retrain, std::move(breakdown));

  std::size_t n_phases = 0;
  {
    auto ls = expect_line(in, "phases");
    ls >> n_phases;
  }
  for (std::size_t i = 0; i < n_phases; ++i) {
    auto ls = expect_line(in, "phase");
    hpo::PhaseScores phase;
    std::size_t count;
    ls >> phase.task_id >> count;
    for (std::size_t k = 0; k < count; ++k) {
      std::string tok;
      if (!(ls >> tok)) throw ParseError(path + ": truncated phase scores");
      phase.scores.push_back(parse_hex(tok));
    }
    record.phase_scores.push_back(std::move(phase));
  }

  auto read_vec = [&](const std::string& key, std::vector<double>& out_vec) {
    auto ls = expect_line(in, key);
    std::size_t count;
    ls >> count;
    for (std::size_t k = 0; k < count; ++k) {
      std::string tok;
      if (!(ls >> tok)) throw ParseError(path + ": truncated " + key);
      out_vec.push_back(parse_hex(tok));
    }
  };
  read_vec("eval_class_il", record.eval.per_task_class_il);
  read_vec("eval_task_il", record.eval.per_task_task_il);
  {
    auto ls = expect_line(in, "eval_avg_class_il");
    std::string tok;
    ls >> tok;
    record.eval.average_accuracy_class_il = parse_hex(tok);
  }
  {
    auto ls = expect_line(in, "eval_avg_task_il");
    std::string tok;
    ls >> tok;
    record.eval.average_accuracy_task_il = parse_hex(tok);
  }
  std::size_t n_classes = 0;
  {
    auto ls = expect_line(in, "per_class");
    ls >> n_classes;
  }
  for (std::size_t i = 0; i < n_classes; ++i) {
    auto ls = expect_line(in, "class");
    int cls;
    std::string tok;
    ls >> cls >> tok;
    record.eval.per_class_accuracy[cls] = parse_hex(tok);
  }
  expect_line(in, "end");
  return record;
}

}  // namespace clhpo

#include "clhpo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "clhpo/error.hpp"
#include "clhpo/rng.hpp"

namespace clhpo {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) cells.push_back(cur);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* p = t.c_str();
  char* end = nullptr;
  out = std::strtod(p, &end);
  return end == p + t.size();
}

bool parse_nonneg_int(const std::string& s, long& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* p = t.c_str();
  char* end = nullptr;
  out = std::strtol(p, &end, 10);
  return end == p + t.size() && out >= 0;
}

}  // namespace

Dataset ingest_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file: " + path);
  const auto header = split_csv_line(line);
  int label_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (trim(header[i]) == label_column) label_idx = static_cast<int>(i);
  if (label_idx < 0)
    throw ParseError("label column '" + label_column + "' not found in header");
  const int n_features = static_cast<int>(header.size()) - 1;
  if (n_features < 1) throw ParseError("no feature columns in header");

  Dataset ds;
  ds.dim = n_features;
  std::vector<std::string> raw_labels;

  int row = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != n_features + 1)
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(n_features) + " features");
    Example ex;
    ex.features.reserve(n_features);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (static_cast<int>(c) == label_idx) continue;
      double v;
      if (!parse_double(cells[c], v))
        throw ParseError("row " + std::to_string(row) + ", column '" +
                         trim(header[c]) + "': not a number: '" + trim(cells[c]) + "'");
      ex.features.push_back(v);
    }
    raw_labels.push_back(trim(cells[label_idx]));
    ex.id = static_cast<int>(ds.examples.size());
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw ParseError("no data rows in " + path);

  // Keep integer labels as-is when they already form the dense set [0, C).
  bool all_int = true;
  std::set<long> distinct;
  std::vector<long> int_labels(raw_labels.size());
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    if (!parse_nonneg_int(raw_labels[i], int_labels[i])) {
      all_int = false;
      break;
    }
    distinct.insert(int_labels[i]);
  }
  bool dense = all_int && *distinct.begin() == 0 &&
               *distinct.rbegin() == static_cast<long>(distinct.size()) - 1;
  if (dense) {
    for (std::size_t i = 0; i < raw_labels.size(); ++i)
      ds.examples[i].label = static_cast<int>(int_labels[i]);
    ds.n_classes = static_cast<int>(distinct.size());
  } else {
    std::map<std::string, int> ids;
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
      auto it = ids.find(raw_labels[i]);
      if (it == ids.end())
        it = ids.emplace(raw_labels[i], static_cast<int>(ids.size())).first;
      ds.examples[i].label = it->second;
    }
    ds.n_classes = static_cast<int>(ids.size());
  }
  return ds;
}

Dataset synth_gaussian(int n_classes, int dim, int n_per_class, double separation,
                       std::uint64_t seed) {
  if (n_classes < 2) throw ArgumentError("synth_gaussian: n_classes must be >= 2");
  if (dim < 1) throw ArgumentError("synth_gaussian: dim must be >= 1");
  if (n_per_class < 1) throw ArgumentError("synth_gaussian: n_per_class must be >= 1");
  if (!(separation > 0.0)) throw ArgumentError("synth_gaussian: separation must be > 0");

  Rng rng(seed);

  // Rejection-sample class centers from a cube, growing the cube whenever
  // placement stalls so termination is guaranteed.
  std::vector<std::vector<double>> centers;
  double radius =
      separation * std::max(1.0, std::pow(static_cast<double>(n_classes), 1.0 / dim));
  int stall = 0;
  while (static_cast<int>(centers.size()) < n_classes) {
    std::vector<double> cand(dim);
    for (double& x : cand) x = rng.uniform_real(-radius, radius);
    bool ok = true;
    for (const auto& c : centers) {
      double d2 = 0.0;
      for (int k = 0; k < dim; ++k) d2 += (cand[k] - c[k]) * (cand[k] - c[k]);
      if (d2 < separation * separation) {
        ok = false;
        break;
      }
    }
    if (ok) {
      centers.push_back(std::move(cand));
      stall = 0;
    } else if (++stall >= 64) {
      radius *= 1.5;
      stall = 0;
    }
  }

  Dataset ds;
  ds.dim = dim;
  ds.n_classes = n_classes;
  ds.examples.reserve(static_cast<std::size_t>(n_classes) * n_per_class);
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < n_per_class; ++i) {
      Example ex;
      ex.label = c;
      ex.id = static_cast<int>(ds.examples.size());
      ex.features.resize(dim);
      for (int k = 0; k < dim; ++k) ex.features[k] = centers[c][k] + rng.normal();
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

}  // namespace clhpo

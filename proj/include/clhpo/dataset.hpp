#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace clhpo {

// One labelled instance. `id` is unique within its dataset (assigned in
// construction order) and is what the training instrumentation reports.
struct Example {
  std::vector<double> features;
  int label = 0;
  int id = 0;
};

struct Dataset {
  std::vector<Example> examples;
  int dim = 0;
  int n_classes = 0;
};

// Reads a comma-separated file with a required header row. Every column
// except `label_column` is a feature and must parse as a number. Labels that
// already form a dense integer range [0, C) are kept as-is; anything else is
// mapped to dense ids in first-appearance order.
Dataset ingest_csv(const std::string& path, const std::string& label_column);

// Synthesizes `n_classes` isotropic unit-variance Gaussian blobs in `dim`
// dimensions, `n_per_class` points each. Class centers are drawn from the
// seed with pairwise distances >= separation. Same seed, same bytes.
Dataset synth_gaussian(int n_classes, int dim, int n_per_class, double separation,
                       std::uint64_t seed);

}  // namespace clhpo

#include "clhpo/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "clhpo/error.hpp"
#include "clhpo/rng.hpp"

namespace clhpo::nn {

namespace {

Mat batch_matrix(std::span<const Example> batch, int expected_dim) {
  Mat x(static_cast<int>(batch.size()), expected_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (static_cast<int>(batch[i].features.size()) != expected_dim)
      throw ShapeError("forward: example feature dim " +
                       std::to_string(batch[i].features.size()) + " != model input dim " +
                       std::to_string(expected_dim));
    for (int k = 0; k < expected_dim; ++k) x.at(static_cast<int>(i), k) = batch[i].features[k];
  }
  return x;
}

struct ForwardTrace {
  std::vector<Mat> activations;  // activations[0] = input, size L+1
  std::vector<Mat> preacts;      // preacts[l] = pre-activation of layer l, size L
};

ForwardTrace forward_trace(const MlpModel& model, std::span<const Example> batch) {
  ForwardTrace tr;
  tr.activations.push_back(batch_matrix(batch, model.input_dim()));
  const int n_layers = static_cast<int>(model.weights.size());
  for (int l = 0; l < n_layers; ++l) {
    Mat z(tr.activations.back().rows, model.weights[l].rows);
    kernels::matmul_nt(tr.activations.back(), model.weights[l], z);
    kernels::add_bias_rows(z, model.biases[l]);
    tr.preacts.push_back(z);
    if (l + 1 < n_layers) kernels::relu_forward(z);
    tr.activations.push_back(std::move(z));
  }
  return tr;
}

GradientSet backward_through(const MlpModel& model, const ForwardTrace& tr, Mat dz) {
  const int n_layers = static_cast<int>(model.weights.size());
  GradientSet g;
  g.dweights.resize(n_layers);
  g.dbiases.resize(n_layers);
  for (int l = n_layers - 1; l >= 0; --l) {
    g.dweights[l] = Mat(model.weights[l].rows, model.weights[l].cols);
    kernels::matmul_tn(dz, tr.activations[l], g.dweights[l]);
    kernels::col_sums(dz, g.dbiases[l]);
    if (l > 0) {
      Mat da(dz.rows, model.weights[l].cols);
      kernels::matmul_nn(dz, model.weights[l], da);
      kernels::relu_backward(tr.preacts[l - 1], da);
      dz = std::move(da);
    }
  }
  return g;
}

}  // namespace

void GradientSet::add_scaled(const GradientSet& other, double scale) {
  if (dweights.size() != other.dweights.size())
    throw ShapeError("GradientSet::add_scaled: layer count mismatch");
  for (std::size_t l = 0; l < dweights.size(); ++l) {
    if (!dweights[l].same_shape(other.dweights[l]))
      throw ShapeError("GradientSet::add_scaled: weight shape mismatch");
    for (std::size_t i = 0; i < dweights[l].v.size(); ++i)
      dweights[l].v[i] += scale * other.dweights[l].v[i];
    for (std::size_t i = 0; i < dbiases[l].size(); ++i)
      dbiases[l][i] += scale * other.dbiases[l][i];
  }
}

ClassMask mask_from_classes(const std::vector<int>& classes, int n_classes) {
  ClassMask mask(static_cast<std::size_t>(n_classes), 0);
  for (int c : classes) {
    if (c < 0 || c >= n_classes)
      throw ArgumentError("mask_from_classes: class " + std::to_string(c) + " out of range");
    mask[static_cast<std::size_t>(c)] = 1;
  }
  return mask;
}

MlpModel init_mlp(const std::vector<int>& layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2)
    throw ArgumentError("init_mlp: need at least input and output dims");
  for (int d : layer_dims)
    if (d < 1) throw ArgumentError("init_mlp: all layer dims must be positive");

  MlpModel model;
  model.layer_dims = layer_dims;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Mat w(fan_out, fan_in);
    for (double& x : w.v) x = rng.uniform_real(-bound, bound);
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(static_cast<std::size_t>(fan_out), 0.0);
  }
  return model;
}

Mat forward(const MlpModel& model, std::span<const Example> batch) {
  return forward_trace(model, batch).activations.back();
}

Mat penultimate_features(const MlpModel& model, std::span<const Example> batch) {
  const auto tr = forward_trace(model, batch);
  return tr.activations[tr.activations.size() - 2];
}

Mat softmax_rows(const Mat& logits, const ClassMask* mask) {
  if (mask && static_cast<int>(mask->size()) != logits.cols)
    throw ShapeError("softmax_rows: mask length != number of classes");
  Mat p(logits.rows, logits.cols);
  for (int i = 0; i < logits.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < logits.cols; ++c)
      if ((!mask || (*mask)[c]) && logits.at(i, c) > mx) mx = logits.at(i, c);
    double z = 0.0;
    for (int c = 0; c < logits.cols; ++c) {
      if (!mask || (*mask)[c]) {
        p.at(i, c) = std::exp(logits.at(i, c) - mx);
        z += p.at(i, c);
      } else {
        p.at(i, c) = 0.0;
      }
    }
    for (int c = 0; c < logits.cols; ++c) p.at(i, c) /= z;
  }
  return p;
}

LossGrad loss_and_grad(const MlpModel& model, std::span<const Example> batch,
                       const std::optional<ClassMask>& class_mask) {
  if (batch.empty()) throw ArgumentError("loss_and_grad: empty batch");
  const ClassMask* mask = class_mask ? &*class_mask : nullptr;
  for (const auto& ex : batch) {
    if (ex.label < 0 || ex.label >= model.output_dim())
      throw ArgumentError("loss_and_grad: label " + std::to_string(ex.label) +
                          " outside model output range");
    if (mask && !(*mask)[static_cast<std::size_t>(ex.label)])
      throw ArgumentError("loss_and_grad: label " + std::to_string(ex.label) +
                          " excluded by class mask");
  }

  const auto tr = forward_trace(model, batch);
  const Mat& logits = tr.activations.back();
  Mat probs = softmax_rows(logits, mask);

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  Mat dz(logits.rows, logits.cols);
  for (int i = 0; i < logits.rows; ++i) {
    const int y = batch[static_cast<std::size_t>(i)].label;
    loss -= std::log(probs.at(i, y));
    for (int c = 0; c < logits.cols; ++c) {
      if (mask && !(*mask)[c]) continue;  // masked-out logits get zero grad
      dz.at(i, c) = (probs.at(i, c) - (c == y ? 1.0 : 0.0)) * inv_n;
    }
  }
  loss *= inv_n;

  LossGrad out;
  out.loss = loss;
  out.grads = backward_through(model, tr, std::move(dz));
  return out;
}

LossGrad mse_logit_loss_and_grad(const MlpModel& model, std::span<const Example> batch,
                                 const Mat& target_logits) {
  if (batch.empty()) throw ArgumentError("mse_logit_loss_and_grad: empty batch");
  const auto tr = forward_trace(model, batch);
  const Mat& logits = tr.activations.back();
  if (!logits.same_shape(target_logits))
    throw ShapeError("mse_logit_loss_and_grad: target shape " +
                     std::to_string(target_logits.rows) + "x" +
                     std::to_string(target_logits.cols) + " != logits shape " +
                     std::to_string(logits.rows) + "x" + std::to_string(logits.cols));

  const double inv_total = 1.0 / static_cast<double>(logits.v.size());
  double loss = 0.0;
  Mat dz(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.v.size(); ++i) {
    const double diff = logits.v[i] - target_logits.v[i];
    loss += diff * diff;
    dz.v[i] = 2.0 * diff * inv_total;
  }
  loss *= inv_total;

  LossGrad out;
  out.loss = loss;
  out.grads = backward_through(model, tr, std::move(dz));
  return out;
}

GradientSet backward_from_logit_grad(const MlpModel& model, std::span<const Example> batch,
                                     const Mat& dlogits) {
  const auto tr = forward_trace(model, batch);
  if (!tr.activations.back().same_shape(dlogits))
    throw ShapeError("backward_from_logit_grad: dlogits shape mismatch");
  return backward_through(model, tr, dlogits);
}

void sgd_step(MlpModel& model, const GradientSet& grads, double lr) {
  if (!(lr > 0.0)) throw ArgumentError("sgd_step: lr must be > 0");
  if (grads.dweights.size() != model.weights.size())
    throw ShapeError("sgd_step: gradient layer count mismatch");
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    if (!model.weights[l].same_shape(grads.dweights[l]) ||
        model.biases[l].size() != grads.dbiases[l].size())
      throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
    for (double g : grads.dweights[l].v)
      if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite weight gradient");
    for (double g : grads.dbiases[l])
      if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite bias gradient");
  }
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    for (std::size_t i = 0; i < model.weights[l].v.size(); ++i)
      model.weights[l].v[i] -= lr * grads.dweights[l].v[i];
    for (std::size_t i = 0; i < model.biases[l].size(); ++i)
      model.biases[l][i] -= lr * grads.dbiases[l][i];
  }
}

namespace {

std::string hex_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", x);
  return buf;
}

double parse_hex_double(const std::string& s) {
  const char* p = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(p, &end);
  if (end != p + s.size()) throw ParseError("bad float literal: '" + s + "'");
  return v;
}

}  // namespace

void save_mlp(const MlpModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "CLHPO-MLP-1\n";
  out << "dims";
  for (int d : model.layer_dims) out << ' ' << d;
  out << '\n';
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    out << "W " << l;
    for (double x : model.weights[l].v) out << ' ' << hex_double(x);
    out << '\n';
    out << "b " << l;
    for (double x : model.biases[l]) out << ' ' << hex_double(x);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

MlpModel load_mlp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "CLHPO-MLP-1")
    throw ParseError(path + ": missing CLHPO-MLP-1 header");

  if (!std::getline(in, line)) throw ParseError(path + ": missing dims line");
  std::istringstream dims_line(line);
  std::string tag;
  dims_line >> tag;
  if (tag != "dims") throw ParseError(path + ": expected dims line");
  std::vector<int> dims;
  int d;
  while (dims_line >> d) dims.push_back(d);

  MlpModel model;
  model.layer_dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    model.weights.emplace_back(dims[l + 1], dims[l]);
    model.biases.emplace_back(static_cast<std::size_t>(dims[l + 1]), 0.0);
  }
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    for (const char* want : {"W", "b"}) {
      if (!std::getline(in, line)) throw ParseError(path + ": truncated parameter block");
      std::istringstream ls(line);
      std::string kind;
      std::size_t idx;
      ls >> kind >> idx;
      if (kind != want || idx != l) throw ParseError(path + ": unexpected parameter line");
      std::string tok;
      std::size_t count = 0;
      auto& wv = model.weights[l].v;
      auto& bv = model.biases[l];
      const std::size_t expect = (kind == "W") ? wv.size() : bv.size();
      while (ls >> tok) {
        if (count >= expect) throw ParseError(path + ": too many values in " + kind + " line");
        const double x = parse_hex_double(tok);
        if (kind == "W")
          wv[count] = x;
        else
          bv[count] = x;
        ++count;
      }
      if (count != expect) throw ParseError(path + ": too few values in " + kind + " line");
    }
  }
  return model;
}

namespace {

double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Walks every parameter, comparing the analytic gradient against the central
// difference of the loss.
double max_grad_error(MlpModel& model, const GradientSet& grads,
                      const std::function<double()>& loss_fn, double eps) {
  double worst = 0.0;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    for (std::size_t i = 0; i < model.weights[l].v.size(); ++i) {
      double& theta = model.weights[l].v[i];
      const double saved = theta;
      theta = saved + eps;
      const double up = loss_fn();
      theta = saved - eps;
      const double down = loss_fn();
      theta = saved;
      worst = std::max(worst, rel_error(grads.dweights[l].v[i], (up - down) / (2.0 * eps)));
    }
    for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
      double& theta = model.biases[l][i];
      const double saved = theta;
      theta = saved + eps;
      const double up = loss_fn();
      theta = saved - eps;
      const double down = loss_fn();
      theta = saved;
      worst = std::max(worst, rel_error(grads.dbiases[l][i], (up - down) / (2.0 * eps)));
    }
  }
  return worst;
}

}  // namespace

double GradCheckSummary::worst() const {
  return std::max({max_rel_error_ce, max_rel_error_masked_ce, max_rel_error_mse});
}

GradCheckSummary finite_difference_check(int n_cases, std::uint64_t seed, double epsilon) {
  if (n_cases < 1) throw ArgumentError("finite_difference_check: n_cases must be >= 1");
  GradCheckSummary summary;
  summary.cases = n_cases;
  Rng rng(seed);
  for (int case_i = 0; case_i < n_cases; ++case_i) {
    const int d = static_cast<int>(rng.uniform_int(2, 4));
    const int h = static_cast<int>(rng.uniform_int(3, 6));
    const int c = static_cast<int>(rng.uniform_int(2, 5));
    const int n = static_cast<int>(rng.uniform_int(1, 6));
    MlpModel model = init_mlp({d, h, c}, rng.raw());

    std::vector<Example> batch(static_cast<std::size_t>(n));
    for (auto& ex : batch) {
      ex.features.resize(static_cast<std::size_t>(d));
      for (double& x : ex.features) x = rng.normal();
      ex.label = static_cast<int>(rng.uniform_int(0, c - 1));
    }

    // CE, all classes.
    {
      const auto lg = loss_and_grad(model, batch);
      const double err = max_grad_error(
          model, lg.grads, [&] { return loss_and_grad(model, batch).loss; }, epsilon);
      summary.max_rel_error_ce = std::max(summary.max_rel_error_ce, err);
    }
    // CE restricted to a random superset of the batch labels.
    {
      ClassMask mask(static_cast<std::size_t>(c), 0);
      for (const auto& ex : batch) mask[static_cast<std::size_t>(ex.label)] = 1;
      for (int cls = 0; cls < c; ++cls)
        if (rng.uniform_int(0, 1) == 1) mask[static_cast<std::size_t>(cls)] = 1;
      const auto lg = loss_and_grad(model, batch, mask);
      const double err = max_grad_error(
          model, lg.grads, [&] { return loss_and_grad(model, batch, mask).loss; }, epsilon);
      summary.max_rel_error_masked_ce = std::max(summary.max_rel_error_masked_ce, err);
    }
    // Logit MSE against random targets.
    {
      Mat targets(n, c);
      for (double& x : targets.v) x = rng.normal();
      const auto lg = mse_logit_loss_and_grad(model, batch, targets);
      const double err = max_grad_error(
          model, lg.grads, [&] { return mse_logit_loss_and_grad(model, batch, targets).loss; },
          epsilon);
      summary.max_rel_error_mse = std::max(summary.max_rel_error_mse, err);
    }
  }
  return summary;
}

}  // namespace clhpo::nn

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clhpo/dataset.hpp"
#include "clhpo/kernels.hpp"

namespace clhpo::nn {

// Fully connected net: ReLU on hidden layers, identity on the output layer.
// weights[l] is (dims[l+1] x dims[l]), row-major; biases[l] has dims[l+1].
struct MlpModel {
  std::vector<int> layer_dims;
  std::vector<Mat> weights;
  std::vector<std::vector<double>> biases;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
};

// Same shapes as the model parameters it was computed against.
struct GradientSet {
  std::vector<Mat> dweights;
  std::vector<std::vector<double>> dbiases;

  void add_scaled(const GradientSet& other, double scale);
};

struct LossGrad {
  double loss = 0.0;
  GradientSet grads;
};

// Class mask for restricted-softmax losses: allowed[c] != 0 means class c
// participates. Masked-out classes are removed before normalization and get
// zero gradient.
using ClassMask = std::vector<std::uint8_t>;

ClassMask mask_from_classes(const std::vector<int>& classes, int n_classes);

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.
MlpModel init_mlp(const std::vector<int>& layer_dims, std::uint64_t seed);

// Logits for a batch, one row per example.
Mat forward(const MlpModel& model, std::span<const Example> batch);

// Activations of the last hidden layer (the input itself when the model has
// no hidden layer). Used by nearest-mean-of-exemplars classification.
Mat penultimate_features(const MlpModel& model, std::span<const Example> batch);

// Row-wise softmax over the allowed classes (all classes when mask absent).
// Max-subtraction keeps it finite; masked-out entries come back as 0.
Mat softmax_rows(const Mat& logits, const ClassMask* mask);

// Mean softmax cross-entropy over the batch with exact analytic gradients.
LossGrad loss_and_grad(const MlpModel& model, std::span<const Example> batch,
                       const std::optional<ClassMask>& class_mask = std::nullopt);

// Mean squared difference between the model's logits and target_logits,
// averaged over all batch*C entries.
LossGrad mse_logit_loss_and_grad(const MlpModel& model, std::span<const Example> batch,
                                 const Mat& target_logits);

// Backprop from an arbitrary gradient w.r.t. the output logits. The building
// block the specific losses (and the CL method losses) share.
GradientSet backward_from_logit_grad(const MlpModel& model, std::span<const Example> batch,
                                     const Mat& dlogits);

// theta <- theta - lr * g. Rejects lr <= 0 and non-finite gradients.
void sgd_step(MlpModel& model, const GradientSet& grads, double lr);

// Text checkpoint, header "CLHPO-MLP-1"; parameters serialized as hex floats
// so a load reproduces the model bit-exactly.
void save_mlp(const MlpModel& model, const std::string& path);
MlpModel load_mlp(const std::string& path);

// Central finite differences vs analytic gradients over random models and
// batches, for the CE, masked-CE and logit-MSE losses. Relative error uses
// denominator max(|analytic|, |numeric|, 1e-8).
struct GradCheckSummary {
  double max_rel_error_ce = 0.0;
  double max_rel_error_masked_ce = 0.0;
  double max_rel_error_mse = 0.0;
  int cases = 0;

  double worst() const;
};

GradCheckSummary finite_difference_check(int n_cases, std::uint64_t seed,
                                         double epsilon = 1e-4);

}  // namespace clhpo::nn

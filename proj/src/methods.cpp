#include "clhpo/methods.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include "clhpo/error.hpp"

namespace clhpo::methods {

namespace {

std::mutex g_observer_mutex;
StepObserver g_observer;

void notify_step(LedgerPhase phase, int task_id, const std::vector<int>& current_ids,
                 const std::vector<int>& replay_ids) {
  std::lock_guard<std::mutex> lock(g_observer_mutex);
  if (g_observer) {
    StepInfo info;
    info.phase = phase;
    info.task_id = task_id;
    info.current_ids = current_ids;
    info.replay_ids = replay_ids;
    g_observer(info);
  }
}

bool observer_installed() {
  std::lock_guard<std::mutex> lock(g_observer_mutex);
  return static_cast<bool>(g_observer);
}

std::vector<Example> entries_to_examples(std::span<const BufferEntry> entries) {
  std::vector<Example> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.example);
  return out;
}

std::vector<int> example_ids(std::span<const Example> examples) {
  std::vector<int> ids;
  ids.reserve(examples.size());
  for (const auto& ex : examples) ids.push_back(ex.id);
  return ids;
}

}  // namespace

void set_step_observer(StepObserver obs) {
  std::lock_guard<std::mutex> lock(g_observer_mutex);
  g_observer = std::move(obs);
}

std::uint64_t shuffle_seed(std::uint64_t task_seed) {
  return derive_seed(task_seed, 0x53484641ULL);  // "SHFL"
}

std::uint64_t buffer_seed(std::uint64_t task_seed) {
  return derive_seed(task_seed, 0x42554646ULL);  // "BUFF"
}

TrainerState make_trainer(MethodKind method, nn::MlpModel model, int buffer_capacity,
                          int n_classes) {
  TrainerState state;
  state.method = method;
  state.buffer = ReplayBuffer(buffer_capacity, n_classes);
  if (method == MethodKind::ICARL) state.icarl.emplace();
  if (method == MethodKind::ESMER) {
    state.esmer.emplace();
    state.esmer->stable = model;  // teacher starts as a copy of the online model
  }
  state.model = std::move(model);
  return state;
}

void validate_config(MethodKind method, const HyperparamConfig& hp) {
  if (!(hp.lr > 0.0)) throw ArgumentError("config: lr must be > 0");
  const bool wants_derpp = method == MethodKind::DERPP;
  const bool wants_esmer = method == MethodKind::ESMER;
  if (wants_derpp != (hp.alpha.has_value() && hp.beta.has_value()) ||
      (!wants_derpp && (hp.alpha || hp.beta)))
    throw ArgumentError("config: alpha/beta are exactly the DER++ coefficients");
  if (wants_esmer != hp.loss_margin.has_value())
    throw ArgumentError("config: loss_margin is exactly the ESMER coefficient");
}

std::vector<std::vector<int>> make_batch_schedule(int n, int epochs, int batch_size,
                                                  Rng& rng) {
  if (n < 0 || epochs < 1 || batch_size < 1)
    throw ArgumentError("make_batch_schedule: bad arguments");
  std::vector<std::vector<int>> schedule;
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (int start = 0; start < n; start += batch_size) {
      const int end = std::min(n, start + batch_size);
      schedule.emplace_back(order.begin() + start, order.begin() + end);
    }
  }
  return schedule;
}

nn::LossGrad batch_loss_er(const TrainerState& state, std::span<const Example> current,
                           std::span<const BufferEntry> replay) {
  if (replay.empty()) return nn::loss_and_grad(state.model, current);
  std::vector<Example> combined(current.begin(), current.end());
  for (const auto& e : replay) combined.push_back(e.example);
  return nn::loss_and_grad(state.model, combined);
}

nn::LossGrad batch_loss_er_ace(const TrainerState& state, std::span<const Example> current,
                               std::span<const BufferEntry> replay) {
  const int n_classes = state.model.output_dim();
  auto out = nn::loss_and_grad(state.model, current,
                               nn::mask_from_classes(state.current_classes, n_classes));
  if (!replay.empty()) {
    const auto replay_examples = entries_to_examples(replay);
    auto rep = nn::loss_and_grad(state.model, replay_examples,
                                 nn::mask_from_classes(state.seen_classes, n_classes));
    out.loss += rep.loss;
    out.grads.add_scaled(rep.grads, 1.0);
  }
  return out;
}

nn::LossGrad batch_loss_derpp(const TrainerState& state, std::span<const Example> current,
                              std::span<const BufferEntry> replay_1,
                              std::span<const BufferEntry> replay_2,
                              const HyperparamConfig& hp) {
  const double alpha = hp.alpha.value_or(0.0);
  const double beta = hp.beta.value_or(0.0);
  auto out = nn::loss_and_grad(state.model, current);

  if (alpha != 0.0 && !replay_1.empty()) {
    Mat targets(static_cast<int>(replay_1.size()), state.model.output_dim());
    for (std::size_t i = 0; i < replay_1.size(); ++i) {
      if (!replay_1[i].stored_logits)
        throw StateError("batch_loss_derpp: replay entry has no stored logits");
      for (int c = 0; c < targets.cols; ++c)
        targets.at(static_cast<int>(i), c) = (*replay_1[i].stored_logits)[static_cast<std::size_t>(c)];
    }
    const auto replay_examples = entries_to_examples(replay_1);
    auto distill = nn::mse_logit_loss_and_grad(state.model, replay_examples, targets);
    out.loss += alpha * distill.loss;
    out.grads.add_scaled(distill.grads, alpha);
  }
  if (beta != 0.0 && !replay_2.empty()) {
    const auto replay_examples = entries_to_examples(replay_2);
    auto ce = nn::loss_and_grad(state.model, replay_examples);
    out.loss += beta * ce.loss;
    out.grads.add_scaled(ce.grads, beta);
  }
  return out;
}

nn::LossGrad batch_loss_icarl(const TrainerState& state, std::span<const Example> current,
                              std::span<const BufferEntry> replay) {
  auto out = nn::loss_and_grad(state.model, current);
  if (!replay.empty() && state.icarl && state.icarl->has_pre_task) {
    const auto replay_examples = entries_to_examples(replay);
    const Mat teacher_logits = nn::forward(state.icarl->pre_task_model, replay_examples);
    const Mat q = nn::softmax_rows(teacher_logits, nullptr);
    const Mat logits = nn::forward(state.model, replay_examples);
    const Mat p = nn::softmax_rows(logits, nullptr);

    const double inv_n = 1.0 / static_cast<double>(replay_examples.size());
    double distill_loss = 0.0;
    Mat dz(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
      for (int c = 0; c < logits.cols; ++c) {
        distill_loss -= q.at(i, c) * std::log(p.at(i, c));
        dz.at(i, c) = (p.at(i, c) - q.at(i, c)) * inv_n;
      }
    }
    distill_loss *= inv_n;
    auto grads = nn::backward_from_logit_grad(state.model, replay_examples, dz);
    out.loss += kIcarlDistillWeight * distill_loss;
    out.grads.add_scaled(grads, kIcarlDistillWeight);
  }
  return out;
}

nn::LossGrad batch_loss_esmer(TrainerState& state, std::span<const Example> current,
                              std::span<const BufferEntry> replay,
                              const HyperparamConfig& hp) {
  if (!state.esmer) throw StateError("batch_loss_esmer: ESMER aux not initialized");
  if (current.empty()) throw ArgumentError("batch_loss_esmer: empty current batch");
  auto& aux = *state.esmer;
  const double margin = hp.loss_margin.value_or(1.0);

  const Mat logits = nn::forward(state.model, current);
  const Mat probs = nn::softmax_rows(logits, nullptr);
  const int n = logits.rows;
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<double> per_example(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    per_example[static_cast<std::size_t>(i)] =
        -std::log(probs.at(i, current[static_cast<std::size_t>(i)].label));
  double raw_mean = 0.0;
  for (double l : per_example) raw_mean += l;
  raw_mean *= inv_n;

  // First batch of the stream establishes the running mean; gating starts
  // after that.
  const bool gate = aux.loss_ema_ready;
  const double threshold = margin * aux.loss_ema;

  double loss = 0.0;
  Mat dz(logits.rows, logits.cols);
  for (int i = 0; i < n; ++i) {
    const double l = per_example[static_cast<std::size_t>(i)];
    const double w = (gate && l > threshold) ? threshold / l : 1.0;
    loss += w * l;
    const int y = current[static_cast<std::size_t>(i)].label;
    for (int c = 0; c < logits.cols; ++c)
      dz.at(i, c) = w * (probs.at(i, c) - (c == y ? 1.0 : 0.0)) * inv_n;
  }
  loss *= inv_n;

  nn::LossGrad out;
  out.loss = loss;
  out.grads = nn::backward_from_logit_grad(state.model, current, dz);

  if (!replay.empty()) {
    const auto replay_examples = entries_to_examples(replay);
    const Mat stable_logits = nn::forward(aux.stable, replay_examples);
    auto distill = nn::mse_logit_loss_and_grad(state.model, replay_examples, stable_logits);
    out.loss += kEsmerDistillWeight * distill.loss;
    out.grads.add_scaled(distill.grads, kEsmerDistillWeight);
  }

  if (!aux.loss_ema_ready) {
    aux.loss_ema = raw_mean;
    aux.loss_ema_ready = true;
  } else {
    aux.loss_ema = kEsmerLossEmaDecay * aux.loss_ema + (1.0 - kEsmerLossEmaDecay) * raw_mean;
  }
  return out;
}

std::vector<Example> icarl_build_exemplars(const TrainerState& state,
                                           std::span<const Example> class_data, int m) {
  if (m < 1) throw ArgumentError("icarl_build_exemplars: m must be >= 1");
  if (class_data.empty()) throw ArgumentError("icarl_build_exemplars: class has no data");

  const Mat feats = nn::penultimate_features(state.model, class_data);
  const int dim = feats.cols;
  const int n = feats.rows;
  std::vector<double> class_mean(static_cast<std::size_t>(dim), 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < dim; ++k) class_mean[static_cast<std::size_t>(k)] += feats.at(i, k);
  for (double& x : class_mean) x /= static_cast<double>(n);

  const int take = std::min(m, n);
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  std::vector<double> running_sum(static_cast<std::size_t>(dim), 0.0);
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(take));
  for (int k = 1; k <= take; ++k) {
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (chosen[static_cast<std::size_t>(i)]) continue;
      double d2 = 0.0;
      for (int c = 0; c < dim; ++c) {
        const double mean_c = (running_sum[static_cast<std::size_t>(c)] + feats.at(i, c)) /
                              static_cast<double>(k);
        const double diff = class_mean[static_cast<std::size_t>(c)] - mean_c;
        d2 += diff * diff;
      }
      if (d2 < best_dist) {
        best_dist = d2;
        best = i;
      }
    }
    chosen[static_cast<std::size_t>(best)] = true;
    for (int c = 0; c < dim; ++c)
      running_sum[static_cast<std::size_t>(c)] += feats.at(best, c);
    out.push_back(class_data[static_cast<std::size_t>(best)]);
  }
  return out;
}

std::map<int, std::vector<double>> icarl_class_means(const TrainerState& state) {
  if (!state.icarl) throw StateError("icarl_class_means: not an iCaRL trainer");
  std::map<int, std::vector<double>> means;
  for (const auto& [cls, exemplars] : state.icarl->exemplars) {
    const Mat feats = nn::penultimate_features(state.model, exemplars);
    std::vector<double> mean(static_cast<std::size_t>(feats.cols), 0.0);
    for (int i = 0; i < feats.rows; ++i)
      for (int k = 0; k < feats.cols; ++k) mean[static_cast<std::size_t>(k)] += feats.at(i, k);
    for (double& x : mean) x /= static_cast<double>(feats.rows);
    means.emplace(cls, std::move(mean));
  }
  return means;
}

int icarl_nme_predict(const TrainerState& state, const Example& x,
                      const std::vector<int>& classes) {
  const auto means = icarl_class_means(state);
  if (means.empty()) throw StateError("icarl_nme_predict: no exemplars yet");
  const Example* one = &x;
  const Mat f = nn::penultimate_features(state.model, std::span<const Example>(one, 1));
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (const auto& [cls, mean] : means) {
    if (!classes.empty() &&
        std::find(classes.begin(), classes.end(), cls) == classes.end())
      continue;
    double d2 = 0.0;
    for (int k = 0; k < f.cols; ++k) {
      const double diff = f.at(0, k) - mean[static_cast<std::size_t>(k)];
      d2 += diff * diff;
    }
    if (d2 < best_d2) {
      best_d2 = d2;
      best = cls;
    }
  }
  if (best < 0) throw StateError("icarl_nme_predict: no exemplars for requested classes");
  return best;
}

void train_task(TrainerState& state, int task_id, const std::vector<int>& task_classes,
                std::span<const Example> data, const HyperparamConfig& hp,
                const TrainOptions& opt, std::uint64_t seed, CostLedger& ledger,
                LedgerPhase phase) {
  validate_config(state.method, hp);
  for (int c : task_classes)
    if (std::binary_search(state.seen_classes.begin(), state.seen_classes.end(), c))
      throw StreamError("train_task: class " + std::to_string(c) +
                        " already trained in an earlier task");

  state.current_classes = task_classes;
  std::sort(state.current_classes.begin(), state.current_classes.end());
  state.seen_classes.insert(state.seen_classes.end(), task_classes.begin(), task_classes.end());
  std::sort(state.seen_classes.begin(), state.seen_classes.end());

  if (state.icarl) {
    state.icarl->pre_task_model = state.model;
    state.icarl->has_pre_task = true;
  }

  // The unit is spent once training starts, even if the pass later aborts on
  // a numeric blow-up.
  ledger.add_unit(phase, task_id);

  Rng shuffle_rng(shuffle_seed(seed));
  Rng buffer_rng(buffer_seed(seed));
  const bool observed = observer_installed();

  const auto schedule =
      make_batch_schedule(static_cast<int>(data.size()), opt.epochs, opt.batch_size, shuffle_rng);
  for (const auto& batch_idx : schedule) {
    std::vector<Example> current;
    current.reserve(batch_idx.size());
    for (int i : batch_idx) current.push_back(data[static_cast<std::size_t>(i)]);
    const int replay_k = static_cast<int>(current.size());

    nn::LossGrad lg;
    std::vector<int> replay_ids;
    switch (state.method) {
      case MethodKind::ER: {
        auto replay = state.buffer.empty() ? std::vector<BufferEntry>{}
                                           : state.buffer.sample_batch(replay_k, buffer_rng);
        if (observed)
          for (const auto& e : replay) replay_ids.push_back(e.example.id);
        lg = batch_loss_er(state, current, replay);
        break;
      }
      case MethodKind::ER_ACE: {
        auto replay = state.buffer.empty() ? std::vector<BufferEntry>{}
                                           : state.buffer.sample_batch(replay_k, buffer_rng);
        if (observed)
          for (const auto& e : replay) replay_ids.push_back(e.example.id);
        lg = batch_loss_er_ace(state, current, replay);
        break;
      }
      case MethodKind::DERPP: {
        std::vector<BufferEntry> replay_1, replay_2;
        if (hp.alpha.value_or(0.0) != 0.0 && !state.buffer.empty())
          replay_1 = state.buffer.sample_batch(replay_k, buffer_rng);
        if (hp.beta.value_or(0.0) != 0.0 && !state.buffer.empty())
          replay_2 = state.buffer.sample_batch(replay_k, buffer_rng);
        if (observed) {
          for (const auto& e : replay_1) replay_ids.push_back(e.example.id);
          for (const auto& e : replay_2) replay_ids.push_back(e.example.id);
        }
        lg = batch_loss_derpp(state, current, replay_1, replay_2, hp);
        break;
      }
      case MethodKind::ICARL: {
        auto replay = state.buffer.empty() ? std::vector<BufferEntry>{}
                                           : state.buffer.sample_batch(replay_k, buffer_rng);
        if (observed)
          for (const auto& e : replay) replay_ids.push_back(e.example.id);
        lg = batch_loss_icarl(state, current, replay);
        break;
      }
      case MethodKind::ESMER: {
        auto replay = state.buffer.empty() ? std::vector<BufferEntry>{}
                                           : state.buffer.sample_batch(replay_k, buffer_rng);
        if (observed)
          for (const auto& e : replay) replay_ids.push_back(e.example.id);
        lg = batch_loss_esmer(state, current, replay, hp);
        break;
      }
    }

    if (observed) notify_step(phase, task_id, example_ids(current), replay_ids);
    nn::sgd_step(state.model, lg.grads, hp.lr);
    if (state.esmer) ema_update(state.esmer->stable, state.model, opt.esmer_stable_decay);
  }

  // Insert the task's examples once training is done. DER++ stores the
  // now-trained model's logits as distillation targets for later tasks.
  if (state.method == MethodKind::DERPP && !data.empty()) {
    const Mat logits = nn::forward(state.model, data);
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::vector<double> row(logits.row(static_cast<int>(i)),
                              logits.row(static_cast<int>(i)) + logits.cols);
      state.buffer.reservoir_insert(data[i], task_id, buffer_rng, row);
    }
  } else {
    for (const auto& ex : data) state.buffer.reservoir_insert(ex, task_id, buffer_rng);
  }

  if (state.icarl) {
    const int m_per =
        std::max<int>(1, state.buffer.capacity() /
                             std::max<int>(1, static_cast<int>(state.seen_classes.size())));
    for (int c : task_classes) {
      std::vector<Example> class_data;
      for (const auto& ex : data)
        if (ex.label == c) class_data.push_back(ex);
      if (!class_data.empty())
        state.icarl->exemplars[c] = icarl_build_exemplars(state, class_data, m_per);
    }
    for (auto& [cls, exemplars] : state.icarl->exemplars)
      if (static_cast<int>(exemplars.size()) > m_per)
        exemplars.resize(static_cast<std::size_t>(m_per));
  }
}

}  // namespace clhpo::methods

#include "doctest.h"

#include <cmath>

#include "clhpo/error.hpp"
#include "clhpo/methods.hpp"
#include "support/helpers.hpp"

using namespace clhpo;
using test_support::models_equal_bitwise;
using test_support::plain_sgd_reference;
using test_support::random_batch;

namespace {

methods::TrainerState make_state(MethodKind method, int dim, int n_classes, int capacity,
                                 std::uint64_t seed) {
  return methods::make_trainer(method, nn::init_mlp({dim, 6, n_classes}, seed), capacity,
                               n_classes);
}

std::vector<BufferEntry> entries_from(const std::vector<Example>& examples, int task_id,
                                      bool with_logits = false, const nn::MlpModel* model = nullptr) {
  std::vector<BufferEntry> out;
  for (const auto& ex : examples) {
    BufferEntry e;
    e.example = ex;
    e.task_id = task_id;
    if (with_logits) {
      const Example* one = &ex;
      const Mat logits = nn::forward(*model, std::span<const Example>(one, 1));
      e.stored_logits = std::vector<double>(logits.v.begin(), logits.v.end());
    }
    out.push_back(std::move(e));
  }
  return out;
}

bool grads_equal_bitwise(const nn::GradientSet& a, const nn::GradientSet& b) {
  for (std::size_t l = 0; l < a.dweights.size(); ++l) {
    if (a.dweights[l].v != b.dweights[l].v) return false;
    if (a.dbiases[l] != b.dbiases[l]) return false;
  }
  return true;
}

double max_grad_gap(const nn::GradientSet& a, const nn::GradientSet& b) {
  double worst = 0.0;
  for (std::size_t l = 0; l < a.dweights.size(); ++l) {
    for (std::size_t i = 0; i < a.dweights[l].v.size(); ++i)
      worst = std::max(worst, std::abs(a.dweights[l].v[i] - b.dweights[l].v[i]));
    for (std::size_t i = 0; i < a.dbiases[l].size(); ++i)
      worst = std::max(worst, std::abs(a.dbiases[l][i] - b.dbiases[l][i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("config validation matches method requirements") {
  HyperparamConfig lr_only;
  lr_only.lr = 0.1;
  CHECK_NOTHROW(methods::validate_config(MethodKind::ER, lr_only));
  CHECK_THROWS_AS(methods::validate_config(MethodKind::DERPP, lr_only), ArgumentError);
  CHECK_THROWS_AS(methods::validate_config(MethodKind::ESMER, lr_only), ArgumentError);

  HyperparamConfig derpp = lr_only;
  derpp.alpha = 0.5;
  derpp.beta = 0.5;
  CHECK_NOTHROW(methods::validate_config(MethodKind::DERPP, derpp));
  CHECK_THROWS_AS(methods::validate_config(MethodKind::ER, derpp), ArgumentError);

  HyperparamConfig bad = lr_only;
  bad.lr = 0.0;
  CHECK_THROWS_AS(methods::validate_config(MethodKind::ER, bad), ArgumentError);
}

TEST_CASE("batch schedule covers every example once per epoch") {
  Rng rng(1);
  const auto schedule = methods::make_batch_schedule(10, 3, 4, rng);
  CHECK(schedule.size() == 9);  // 3 epochs x ceil(10/4)
  std::vector<int> counts(10, 0);
  for (const auto& batch : schedule)
    for (int i : batch) ++counts[static_cast<std::size_t>(i)];
  for (int c : counts) CHECK(c == 3);
}

TEST_CASE("er with empty replay is exactly plain cross-entropy") {
  Rng rng(2);
  const auto state = make_state(MethodKind::ER, 3, 4, 10, 5);
  const auto current = random_batch(rng, 6, 3, 4);
  const auto lg = methods::batch_loss_er(state, current, {});
  const auto plain = nn::loss_and_grad(state.model, current);
  CHECK(lg.loss == plain.loss);
  CHECK(grads_equal_bitwise(lg.grads, plain.grads));
}

TEST_CASE("er with empty current reduces to replay cross-entropy") {
  Rng rng(3);
  const auto state = make_state(MethodKind::ER, 3, 4, 10, 5);
  const auto replay_examples = random_batch(rng, 5, 3, 4);
  const auto replay = entries_from(replay_examples, 0);
  const auto lg = methods::batch_loss_er(state, {}, replay);
  const auto plain = nn::loss_and_grad(state.model, replay_examples);
  CHECK(lg.loss == plain.loss);
  CHECK(grads_equal_bitwise(lg.grads, plain.grads));
}

TEST_CASE("er equals cross-entropy on the manually concatenated batch") {
  Rng rng(4);
  const auto state = make_state(MethodKind::ER, 3, 4, 10, 5);
  const auto current = random_batch(rng, 6, 3, 4);
  const auto replay_examples = random_batch(rng, 4, 3, 4);
  const auto replay = entries_from(replay_examples, 0);
  const auto lg = methods::batch_loss_er(state, current, replay);

  std::vector<Example> concat = current;
  concat.insert(concat.end(), replay_examples.begin(), replay_examples.end());
  const auto oracle = nn::loss_and_grad(state.model, concat);
  CHECK(lg.loss == oracle.loss);
  CHECK(grads_equal_bitwise(lg.grads, oracle.grads));
}

TEST_CASE("er-ace on the first task equals er") {
  Rng rng(5);
  auto state = make_state(MethodKind::ER_ACE, 3, 4, 10, 6);
  state.current_classes = {0, 1, 2, 3};  // first task covers every class
  state.seen_classes = {0, 1, 2, 3};
  const auto current = random_batch(rng, 6, 3, 4);
  const auto ace = methods::batch_loss_er_ace(state, current, {});
  const auto er = methods::batch_loss_er(state, current, {});
  CHECK(ace.loss == er.loss);
  CHECK(grads_equal_bitwise(ace.grads, er.grads));
}

TEST_CASE("er-ace sums two independently masked terms") {
  Rng rng(6);
  auto state = make_state(MethodKind::ER_ACE, 3, 6, 10, 7);
  state.current_classes = {4, 5};
  state.seen_classes = {0, 1, 2, 3, 4, 5};
  auto current = random_batch(rng, 5, 3, 6);
  for (auto& ex : current) ex.label = 4 + (ex.label % 2);
  auto replay_examples = random_batch(rng, 4, 3, 6);
  for (auto& ex : replay_examples) ex.label %= 4;  // old classes
  const auto replay = entries_from(replay_examples, 0);

  const auto lg = methods::batch_loss_er_ace(state, current, replay);
  const auto term1 =
      nn::loss_and_grad(state.model, current, nn::mask_from_classes({4, 5}, 6));
  const auto term2 = nn::loss_and_grad(state.model, replay_examples,
                                       nn::mask_from_classes({0, 1, 2, 3, 4, 5}, 6));
  CHECK(lg.loss == doctest::Approx(term1.loss + term2.loss).epsilon(1e-15));
  auto summed = term1.grads;
  summed.add_scaled(term2.grads, 1.0);
  CHECK(max_grad_gap(lg.grads, summed) == 0.0);
}

TEST_CASE("er-ace with empty replay is the masked current term only") {
  Rng rng(7);
  auto state = make_state(MethodKind::ER_ACE, 3, 6, 10, 8);
  state.current_classes = {1, 2};
  state.seen_classes = {0, 1, 2};
  auto current = random_batch(rng, 5, 3, 6);
  for (auto& ex : current) ex.label = 1 + (ex.label % 2);
  const auto lg = methods::batch_loss_er_ace(state, current, {});
  const auto oracle =
      nn::loss_and_grad(state.model, current, nn::mask_from_classes({1, 2}, 6));
  CHECK(lg.loss == oracle.loss);
  CHECK(grads_equal_bitwise(lg.grads, oracle.grads));
}

TEST_CASE("derpp with zero coefficients is plain cross-entropy") {
  Rng rng(8);
  const auto state = make_state(MethodKind::DERPP, 3, 4, 10, 9);
  const auto current = random_batch(rng, 6, 3, 4);
  const auto replay = entries_from(random_batch(rng, 4, 3, 4), 0, true, &state.model);
  HyperparamConfig hp;
  hp.lr = 0.1;
  hp.alpha = 0.0;
  hp.beta = 0.0;
  const auto lg = methods::batch_loss_derpp(state, current, replay, replay, hp);
  const auto plain = nn::loss_and_grad(state.model, current);
  CHECK(lg.loss == plain.loss);
  CHECK(grads_equal_bitwise(lg.grads, plain.grads));
}

TEST_CASE("derpp distillation term vanishes when stored logits equal live logits") {
  Rng rng(9);
  const auto state = make_state(MethodKind::DERPP, 3, 4, 10, 10);
  const auto current = random_batch(rng, 6, 3, 4);
  const auto replay = entries_from(random_batch(rng, 4, 3, 4), 0, true, &state.model);
  HyperparamConfig with_alpha, without_alpha;
  with_alpha.lr = without_alpha.lr = 0.1;
  with_alpha.alpha = 1.0;
  with_alpha.beta = 0.0;
  without_alpha.alpha = 0.0;
  without_alpha.beta = 0.0;
  const auto a = methods::batch_loss_derpp(state, current, replay, {}, with_alpha);
  const auto b = methods::batch_loss_derpp(state, current, replay, {}, without_alpha);
  CHECK(a.loss == b.loss);
  CHECK(grads_equal_bitwise(a.grads, b.grads));
}

TEST_CASE("derpp is the sum of its three terms") {
  Rng rng(10);
  auto teacher = nn::init_mlp({3, 6, 4}, 123);  // stored logits from another model
  const auto state = make_state(MethodKind::DERPP, 3, 4, 10, 11);
  const auto current = random_batch(rng, 6, 3, 4);
  const auto replay_1_examples = random_batch(rng, 4, 3, 4);
  const auto replay_1 = entries_from(replay_1_examples, 0, true, &teacher);
  const auto replay_2_examples = random_batch(rng, 3, 3, 4);
  const auto replay_2 = entries_from(replay_2_examples, 0);
  HyperparamConfig hp;
  hp.lr = 0.1;
  hp.alpha = 1.0;
  hp.beta = 1.0;
  const auto lg = methods::batch_loss_derpp(state, current, replay_1, replay_2, hp);

  const auto term1 = nn::loss_and_grad(state.model, current);
  Mat targets(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 4; ++c) targets.at(i, c) = (*replay_1[i].stored_logits)[c];
  const auto term2 = nn::mse_logit_loss_and_grad(state.model, replay_1_examples, targets);
  const auto term3 = nn::loss_and_grad(state.model, replay_2_examples);
  CHECK(lg.loss == doctest::Approx(term1.loss + term2.loss + term3.loss).epsilon(1e-12));
  auto summed = term1.grads;
  summed.add_scaled(term2.grads, 1.0);
  summed.add_scaled(term3.grads, 1.0);
  CHECK(max_grad_gap(lg.grads, summed) < 1e-12);
}

TEST_CASE("derpp rejects replay entries without stored logits") {
  Rng rng(11);
  const auto state = make_state(MethodKind::DERPP, 3, 4, 10, 12);
  const auto current = random_batch(rng, 3, 3, 4);
  const auto bare = entries_from(random_batch(rng, 2, 3, 4), 0);
  HyperparamConfig hp;
  hp.lr = 0.1;
  hp.alpha = 1.0;
  hp.beta = 0.0;
  CHECK_THROWS_AS(methods::batch_loss_derpp(state, current, bare, {}, hp), StateError);
}

TEST_CASE("esmer gating inactive below the margin threshold") {
  Rng rng(12);
  auto state = make_state(MethodKind::ESMER, 3, 4, 10, 13);
  state.esmer->loss_ema = 1e9;  // threshold far above any real loss
  state.esmer->loss_ema_ready = true;
  const auto current = random_batch(rng, 5, 3, 4);
  const auto replay_examples = random_batch(rng, 4, 3, 4);
  const auto replay = entries_from(replay_examples, 0);
  HyperparamConfig hp;
  hp.lr = 0.1;
  hp.loss_margin = 1.0;
  const auto lg = methods::batch_loss_esmer(state, current, replay, hp);

  const auto ce = nn::loss_and_grad(state.model, current);
  const Mat stable_logits = nn::forward(state.esmer->stable, replay_examples);
  const auto distill = nn::mse_logit_loss_and_grad(state.model, replay_examples, stable_logits);
  CHECK(lg.loss == doctest::Approx(ce.loss + distill.loss).epsilon(1e-15));
  auto summed = ce.grads;
  summed.add_scaled(distill.grads, 1.0);
  CHECK(max_grad_gap(lg.grads, summed) < 1e-15);
}

TEST_CASE("huge margin never gates") {
  Rng rng(13);
  auto state = make_state(MethodKind::ESMER, 3, 4, 10, 14);
  state.esmer->loss_ema = 1e-6;  // tiny running mean
  state.esmer->loss_ema_ready = true;
  const auto current = random_batch(rng, 5, 3, 4);
  HyperparamConfig hp;
  hp.lr = 0.1;
  hp.loss_margin = 1e12;  // margin * mu stays above every loss
  const auto lg = methods::batch_loss_esmer(state, current, {}, hp);
  const auto ce = nn::loss_and_grad(state.model, current);
  CHECK(lg.loss == doctest::Approx(ce.loss).epsilon(1e-15));
}

TEST_CASE("outlier contribution is scaled by margin*mu/loss") {
  // Two-example batch, margin*mu chosen between the two losses: the oracle
  // combines singleton gradients with weights {1, thr/loss}.
  Rng rng(14);
  auto state = make_state(MethodKind::ESMER, 3, 4, 10, 15);
  auto batch = random_batch(rng, 2, 3, 4);
  // force one outlier by scaling its features away from anything sensible
  for (double& x : batch[1].features) x *= 50.0;

  // measure the raw per-example losses first
  const auto l0 = nn::loss_and_grad(state.model, std::vector<Example>{batch[0]});
  const auto l1 = nn::loss_and_grad(state.model, std::vector<Example>{batch[1]});
  REQUIRE(l1.loss > l0.loss);
  const double threshold = 0.5 * (l0.loss + l1.loss);
  state.esmer->loss_ema = threshold;  // margin = 1 -> threshold = mu
  state.esmer->loss_ema_ready = true;

  HyperparamConfig hp;
  hp.lr = 0.1;
  hp.loss_margin = 1.0;
  const auto lg = methods::batch_loss_esmer(state, batch, {}, hp);

  const double w1 = threshold / l1.loss;
  CHECK(lg.loss == doctest::Approx(0.5 * (l0.loss + w1 * l1.loss)).epsilon(1e-12));
  auto expected = l0.grads;  // singleton grads average with weights /2
  nn::GradientSet scaled = l1.grads;
  expected.add_scaled(scaled, w1);
  for (auto& w : expected.dweights)
    for (double& g : w.v) g *= 0.5;
  for (auto& b : expected.dbiases)
    for (double& g : b) g *= 0.5;
  CHECK(max_grad_gap(lg.grads, expected) < 1e-12);
}

TEST_CASE("esmer updates the running loss mean") {
  Rng rng(15);
  auto state = make_state(MethodKind::ESMER, 3, 4, 10, 16);
  const auto batch = random_batch(rng, 5, 3, 4);
  HyperparamConfig hp;
  hp.lr = 0.1;
  hp.loss_margin = 1.0;
  CHECK_FALSE(state.esmer->loss_ema_ready);
  const auto first = methods::batch_loss_esmer(state, batch, {}, hp);
  CHECK(state.esmer->loss_ema_ready);
  CHECK(state.esmer->loss_ema == doctest::Approx(first.loss).epsilon(1e-12));
  const double before = state.esmer->loss_ema;
  const auto other_batch = random_batch(rng, 5, 3, 4);
  methods::batch_loss_esmer(state, other_batch, {}, hp);
  CHECK(state.esmer->loss_ema != before);
}

TEST_CASE("exemplar mean with m equal to class size is the class mean") {
  Rng rng(16);
  auto state = make_state(MethodKind::ICARL, 3, 4, 20, 17);
  auto data = random_batch(rng, 8, 3, 4);
  for (auto& ex : data) ex.label = 1;
  const auto exemplars = methods::icarl_build_exemplars(state, data, 8);
  CHECK(exemplars.size() == 8);
  std::set<int> ids;
  for (const auto& ex : exemplars) ids.insert(ex.id);
  CHECK(ids.size() == 8);  // whole class, each example once
}

TEST_CASE("herding with m=1 returns the feature-space point closest to the mean") {
  Rng rng(17);
  auto state = make_state(MethodKind::ICARL, 3, 4, 20, 18);
  auto data = random_batch(rng, 12, 3, 4);
  for (auto& ex : data) ex.label = 0;

  const Mat feats = nn::penultimate_features(state.model, data);
  std::vector<double> mean(static_cast<std::size_t>(feats.cols), 0.0);
  for (int i = 0; i < feats.rows; ++i)
    for (int k = 0; k < feats.cols; ++k) mean[static_cast<std::size_t>(k)] += feats.at(i, k);
  for (double& x : mean) x /= feats.rows;
  int best = -1;
  double best_d = 0.0;
  for (int i = 0; i < feats.rows; ++i) {
    double d = 0.0;
    for (int k = 0; k < feats.cols; ++k) {
      const double diff = feats.at(i, k) - mean[static_cast<std::size_t>(k)];
      d += diff * diff;
    }
    if (best < 0 || d < best_d) {
      best = i;
      best_d = d;
    }
  }

  const auto exemplars = methods::icarl_build_exemplars(state, data, 1);
  REQUIRE(exemplars.size() == 1);
  CHECK(exemplars[0].id == data[static_cast<std::size_t>(best)].id);
}

TEST_CASE("nme separates well-separated classes perfectly") {
  const auto ds = synth_gaussian(2, 3, 30, 12.0, 19);
  auto state = make_state(MethodKind::ICARL, 3, 2, 60, 20);
  std::vector<Example> class0, class1;
  for (const auto& ex : ds.examples) (ex.label == 0 ? class0 : class1).push_back(ex);
  state.icarl->exemplars[0] = methods::icarl_build_exemplars(state, class0, 30);
  state.icarl->exemplars[1] = methods::icarl_build_exemplars(state, class1, 30);

  int correct = 0;
  for (const auto& ex : ds.examples)
    if (methods::icarl_nme_predict(state, ex) == ex.label) ++correct;
  CHECK(correct == static_cast<int>(ds.examples.size()));
}

TEST_CASE("nme errors when nothing has been seen") {
  auto state = make_state(MethodKind::ICARL, 3, 2, 10, 21);
  Example ex;
  ex.features = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(methods::icarl_nme_predict(state, ex), StateError);
}

// ---------------------------------------------------------------------------
// train_task integration
// ---------------------------------------------------------------------------

namespace {

struct TinyTask {
  std::vector<Example> data;
  std::vector<int> classes;
};

TinyTask tiny_task(std::uint64_t seed, int n = 24, int n_classes = 2, int dim = 3) {
  Rng rng(seed);
  TinyTask task;
  task.data = random_batch(rng, n, dim, n_classes);
  for (int c = 0; c < n_classes; ++c) task.classes.push_back(c);
  return task;
}

}  // namespace

TEST_CASE("er on the first task walks exactly the plain-sgd trajectory") {
  const auto task = tiny_task(30);
  const std::uint64_t init_seed = 44, task_seed = 99;
  const methods::TrainOptions opt{3, 8};
  HyperparamConfig hp;
  hp.lr = 0.05;

  auto state = methods::make_trainer(MethodKind::ER, nn::init_mlp({3, 6, 2}, init_seed), 50, 2);
  CostLedger ledger;
  methods::train_task(state, 0, task.classes, task.data, hp, opt, task_seed, ledger,
                      LedgerPhase::Selection);

  const auto reference = plain_sgd_reference(nn::init_mlp({3, 6, 2}, init_seed), task.data,
                                             hp.lr, opt.epochs, opt.batch_size, task_seed);
  CHECK(models_equal_bitwise(state.model, reference));
  CHECK(ledger.selection_units() == 1);
}

TEST_CASE("derpp with zero coefficients matches plain fine-tuning bit for bit") {
  const auto task = tiny_task(31);
  const std::uint64_t init_seed = 45, task_seed = 100;
  const methods::TrainOptions opt{4, 8};
  HyperparamConfig hp;
  hp.lr = 0.05;
  hp.alpha = 0.0;
  hp.beta = 0.0;

  auto state =
      methods::make_trainer(MethodKind::DERPP, nn::init_mlp({3, 6, 2}, init_seed), 50, 2);
  CostLedger ledger;
  methods::train_task(state, 0, task.classes, task.data, hp, opt, task_seed, ledger,
                      LedgerPhase::Selection);

  const auto reference = plain_sgd_reference(nn::init_mlp({3, 6, 2}, init_seed), task.data,
                                             hp.lr, opt.epochs, opt.batch_size, task_seed);
  CHECK(models_equal_bitwise(state.model, reference));
}

TEST_CASE("er and er-ace coincide on a single-task stream") {
  const auto task = tiny_task(32);
  const std::uint64_t init_seed = 46, task_seed = 101;
  const methods::TrainOptions opt{5, 8};
  HyperparamConfig hp;
  hp.lr = 0.08;

  auto er = methods::make_trainer(MethodKind::ER, nn::init_mlp({3, 6, 2}, init_seed), 50, 2);
  auto ace =
      methods::make_trainer(MethodKind::ER_ACE, nn::init_mlp({3, 6, 2}, init_seed), 50, 2);
  CostLedger ledger;
  methods::train_task(er, 0, task.classes, task.data, hp, opt, task_seed, ledger,
                      LedgerPhase::Selection);
  methods::train_task(ace, 0, task.classes, task.data, hp, opt, task_seed, ledger,
                      LedgerPhase::Selection);
  CHECK(models_equal_bitwise(er.model, ace.model));
}

TEST_CASE("training twice with one seed is bit-reproducible") {
  const auto task = tiny_task(33);
  for (MethodKind method : {MethodKind::ER, MethodKind::DERPP, MethodKind::ESMER,
                            MethodKind::ICARL, MethodKind::ER_ACE}) {
    HyperparamConfig hp;
    hp.lr = 0.05;
    if (method == MethodKind::DERPP) {
      hp.alpha = 0.5;
      hp.beta = 0.5;
    }
    if (method == MethodKind::ESMER) hp.loss_margin = 1.2;
    auto run = [&] {
      auto state = methods::make_trainer(method, nn::init_mlp({3, 6, 2}, 9), 20, 2);
      CostLedger ledger;
      methods::train_task(state, 0, task.classes, task.data, hp, methods::TrainOptions{3, 8},
                          77, ledger, LedgerPhase::Selection);
      return state;
    };
    const auto a = run();
    const auto b = run();
    CHECK(models_equal_bitwise(a.model, b.model));
    CHECK(a.buffer.seen_count() == b.buffer.seen_count());
  }
}

TEST_CASE("repeating a class across tasks is a stream error") {
  const auto task = tiny_task(34);
  HyperparamConfig hp;
  hp.lr = 0.05;
  auto state = methods::make_trainer(MethodKind::ER, nn::init_mlp({3, 6, 2}, 1), 20, 2);
  CostLedger ledger;
  methods::train_task(state, 0, task.classes, task.data, hp, methods::TrainOptions{1, 8}, 5,
                      ledger, LedgerPhase::Selection);
  CHECK_THROWS_AS(methods::train_task(state, 1, {1}, task.data, hp,
                                      methods::TrainOptions{1, 8}, 6, ledger,
                                      LedgerPhase::Selection),
                  StreamError);
}

TEST_CASE("each train_task call costs exactly one unit") {
  const auto ds = synth_gaussian(4, 3, 10, 6.0, 40);
  HyperparamConfig hp;
  hp.lr = 0.05;
  auto state = methods::make_trainer(MethodKind::ER, nn::init_mlp({3, 6, 4}, 2), 20, 4);
  CostLedger ledger;
  std::vector<Example> task0, task1;
  for (const auto& ex : ds.examples)
    (ex.label < 2 ? task0 : task1).push_back(ex);
  methods::train_task(state, 0, {0, 1}, task0, hp, methods::TrainOptions{2, 8}, 5, ledger,
                      LedgerPhase::Selection);
  CHECK(ledger.total_units() == 1);
  methods::train_task(state, 1, {2, 3}, task1, hp, methods::TrainOptions{2, 8}, 6, ledger,
                      LedgerPhase::Retrain);
  CHECK(ledger.total_units() == 2);
  CHECK(ledger.selection_units() == 1);
  CHECK(ledger.retrain_units() == 1);
}

TEST_CASE("derpp stores logits at insertion and replays them later") {
  const auto ds = synth_gaussian(4, 3, 12, 8.0, 41);
  HyperparamConfig hp;
  hp.lr = 0.05;
  hp.alpha = 0.5;
  hp.beta = 0.5;
  auto state = methods::make_trainer(MethodKind::DERPP, nn::init_mlp({3, 6, 4}, 3), 100, 4);
  CostLedger ledger;
  std::vector<Example> task0, task1;
  for (const auto& ex : ds.examples)
    (ex.label < 2 ? task0 : task1).push_back(ex);
  methods::train_task(state, 0, {0, 1}, task0, hp, methods::TrainOptions{2, 8}, 5, ledger,
                      LedgerPhase::Selection);
  for (const auto& entry : state.buffer.entries()) {
    REQUIRE(entry.stored_logits.has_value());
    CHECK(entry.stored_logits->size() == 4);
  }
  // second task trains with replay terms active
  CHECK_NOTHROW(methods::train_task(state, 1, {2, 3}, task1, hp, methods::TrainOptions{2, 8},
                                    6, ledger, LedgerPhase::Selection));
}

TEST_CASE("seen classes accumulate and the buffer fills at task end") {
  const auto task = tiny_task(35);
  HyperparamConfig hp;
  hp.lr = 0.05;
  auto state = methods::make_trainer(MethodKind::ER, nn::init_mlp({3, 6, 2}, 4), 100, 2);
  CostLedger ledger;
  methods::train_task(state, 0, task.classes, task.data, hp, methods::TrainOptions{2, 8}, 5,
                      ledger, LedgerPhase::Selection);
  CHECK(state.seen_classes == std::vector<int>{0, 1});
  CHECK(state.buffer.size() == static_cast<int>(task.data.size()));
  CHECK(state.buffer.seen_count() == static_cast<int>(task.data.size()));
}

TEST_CASE("icarl keeps per-class exemplars within the per-class budget") {
  const auto ds = synth_gaussian(4, 3, 12, 8.0, 42);
  HyperparamConfig hp;
  hp.lr = 0.05;
  auto state = methods::make_trainer(MethodKind::ICARL, nn::init_mlp({3, 6, 4}, 5), 8, 4);
  CostLedger ledger;
  std::vector<Example> task0, task1;
  for (const auto& ex : ds.examples)
    (ex.label < 2 ? task0 : task1).push_back(ex);
  methods::train_task(state, 0, {0, 1}, task0, hp, methods::TrainOptions{2, 8}, 5, ledger,
                      LedgerPhase::Selection);
  CHECK(state.icarl->exemplars.at(0).size() == 4);  // 8 / 2 classes
  methods::train_task(state, 1, {2, 3}, task1, hp, methods::TrainOptions{2, 8}, 6, ledger,
                      LedgerPhase::Selection);
  for (const auto& [cls, exemplars] : state.icarl->exemplars)
    CHECK(exemplars.size() <= 2);  // 8 / 4 classes after task 2
}

#include <doctest.h>

#include "evgraph/train.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>

using namespace evgraph;
using evtest::random_matrix;

namespace {

LabelMask mask_of(std::vector<int> labels, std::vector<Split> splits, int classes = 2) {
  LabelMask m;
  m.labels = std::move(labels);
  m.splits = std::move(splits);
  m.num_classes = classes;
  return m;
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 30;
  c.num_layers = 2;
  c.hidden_width = 8;
  c.pae_hidden = 16;
  c.predictor_hidden = 16;
  c.cheb_order = 2;
  return c;
}

Dataset small_population(std::uint64_t seed) {
  SynthSpec s;
  s.n_subjects = 40;
  s.feature_dim = 8;
  s.seed = seed;
  return generate_synthetic(s);
}

}  // namespace

TEST_CASE("masked cross-entropy anchors") {
  Tape tape(false);
  auto mask = mask_of({0, 1, 1}, {Split::kTrain, Split::kTrain, Split::kTest});
  Matrix perfect(3, 2);
  perfect << 1, 0, 0, 1, 1, 0;
  CHECK(masked_cross_entropy(tape, Tensor::constant(perfect), mask).item() == 0.0);

  CHECK(masked_cross_entropy(tape, Tensor::constant(Matrix::Constant(3, 2, 0.5)), mask).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  auto mask5 = mask_of({4, 2}, {Split::kTrain, Split::kTrain}, 5);
  CHECK(masked_cross_entropy(tape, Tensor::constant(Matrix::Constant(2, 5, 0.2)), mask5).item() ==
        doctest::Approx(std::log(5.0)).epsilon(1e-15));

  // log clamped at 1e-12
  Matrix wrong(3, 2);
  wrong << 0, 1, 0, 1, 0, 1;
  CHECK(masked_cross_entropy(tape, Tensor::constant(wrong), mask).item() ==
        doctest::Approx(-std::log(1e-12) / 2.0));

  auto empty = mask_of({0, 1}, {Split::kTest, Split::kTest});
  CHECK_THROWS_AS(masked_cross_entropy(tape, Tensor::constant(Matrix::Constant(2, 2, 0.5)), empty), DomainError);
}

TEST_CASE("masked cross-entropy gradient ignores unmasked rows") {
  RngStream rng(1);
  auto mask = mask_of({0, 1, 1, 0}, {Split::kTrain, Split::kTest, Split::kTrain, Split::kVal});
  auto f = [&](Tape& t, const Tensor& logits) { return masked_cross_entropy(t, softmax_rows(t, logits), mask); };
  CHECK(evtest::grad_error(f, random_matrix(4, 2, rng)) < 1e-6);
  Tensor logits = Tensor::parameter(random_matrix(4, 2, rng));
  Tape tape;
  tape.backward(f(tape, logits));
  CHECK(logits.grad().row(1).isZero(0.0));
  CHECK(logits.grad().row(3).isZero(0.0));
}

TEST_CASE("Adam") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  RngStream rng(2);
  Tensor w = Tensor::parameter(random_matrix(2, 2, rng));
  const Matrix before = w.value();
  std::vector<NamedTensor> params = {{"w", "g", w, false}};
  AdamState state;
  w.grad().setZero();
  adam_step(params, state, cfg);
  CHECK(w.value() == before);

  // the first bias-corrected step has unit magnitude
  Tensor s = Tensor::parameter(Matrix::Constant(1, 1, 3.0));
  std::vector<NamedTensor> scalar = {{"s", "g", s, false}};
  AdamState st;
  s.grad()(0, 0) = 0.37;
  adam_step(scalar, st, cfg);
  CHECK(s.value()(0, 0) == doctest::Approx(3.0 - cfg.learning_rate).epsilon(1e-6));

  // decoupled decay shrinks weights before the step and skips biases
  AdamConfig decay;
  decay.weight_decay = 0.5;
  Tensor wt = Tensor::parameter(Matrix::Constant(1, 1, 2.0));
  Tensor bt = Tensor::parameter(Matrix::Constant(1, 1, 2.0));
  std::vector<NamedTensor> both = {{"w", "g", wt, false}, {"b", "g", bt, true}};
  AdamState sd;
  wt.grad().setZero();
  bt.grad().setZero();
  adam_step(both, sd, decay);
  CHECK(wt.value()(0, 0) == doctest::Approx(2.0 * (1.0 - 0.01 * 0.5)).epsilon(1e-15));
  CHECK(bt.value()(0, 0) == 2.0);
}

TEST_CASE("Adam lowers a fixed tiny loss over 50 steps") {
  RngStream rng(3);
  Tensor x = Tensor::constant(random_matrix(6, 3, rng));
  Tensor w = Tensor::parameter(random_matrix(3, 2, rng));
  auto mask = mask_of({0, 1, 0, 1, 1, 0}, std::vector<Split>(6, Split::kTrain));
  std::vector<NamedTensor> params = {{"w", "g", w, false}};
  AdamState state;
  AdamConfig cfg;
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 50; ++step) {
    w.zero_grad();
    Tape tape;
    Tensor loss = masked_cross_entropy(tape, softmax_rows(tape, matmul(tape, x, w)), mask);
    tape.backward(loss);
    adam_step(params, state, cfg);
    (step == 0 ? first : last) = loss.item();
  }
  CHECK(last < first);
}

TEST_CASE("fit is deterministic and keeps the loss finite") {
  Dataset d = small_population(4);
  Problem p = make_problem(d, GraphKind::kAdaptive);
  TrainConfig c = small_config();
  FitResult a = fit(p, c);
  FitResult b = fit(p, c);
  REQUIRE(a.history.size() == 30);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(std::isfinite(a.history[i].train_loss));
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_accuracy == b.history[i].val_accuracy);
    CHECK(a.history[i].epoch == static_cast<int>(i) + 1);
  }
  auto ta = a.params.named_tensors();
  auto tb = b.params.named_tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].tensor.value() == tb[i].tensor.value());
  CHECK(a.history.back().train_loss < a.history.front().train_loss);
}

TEST_CASE("test labels never influence training") {
  Dataset d = small_population(5);
  Dataset shuffled = d;
  auto test = d.mask.indices(Split::kTest);
  REQUIRE(test.size() > 2);
  std::vector<int> labels;
  for (Index i : test) labels.push_back(d.mask.labels[static_cast<std::size_t>(i)]);
  std::rotate(labels.begin(), labels.begin() + 1, labels.end());
  for (std::size_t k = 0; k < test.size(); ++k) {
    shuffled.mask.labels[static_cast<std::size_t>(test[k])] = 1 - labels[k];
  }
  TrainConfig c = small_config();
  c.epochs = 10;
  FitResult a = fit(make_problem(d, GraphKind::kAdaptive), c);
  FitResult b = fit(make_problem(shuffled, GraphKind::kAdaptive), c);
  auto ta = a.params.named_tensors();
  auto tb = b.params.named_tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].tensor.value() == tb[i].tensor.value());
}

TEST_CASE("baseline graphs leave the association encoder untouched") {
  Dataset d = small_population(6);
  TrainConfig c = small_config();
  c.epochs = 5;
  Problem p = make_problem(d, GraphKind::kRandom);
  FitResult r = fit(p, c);
  ModelParams init = init_params(make_dims(p, c), c.seed, c.effective_pae_dropout());
  CHECK(r.params.pae.w1.value() == init.pae.w1.value());
  CHECK(r.params.predictor.w1.value() != init.predictor.w1.value());
}

TEST_CASE("separable synthetic population is learned") {
  SynthSpec s;
  s.seed = 1;
  s.informativeness = Informativeness::kFull;
  Problem p = make_problem(generate_synthetic(s), GraphKind::kAdaptive);
  TrainConfig c;
  c.seed = 1;
  FitResult r = fit(p, c);
  CHECK(accuracy(predict(p, r.params), p.mask, Split::kTest) >= 0.95);
}

TEST_CASE("metrics") {
  Matrix probs(4, 2);
  probs << 0.9, 0.1, 0.4, 0.6, 0.5, 0.5, 0.2, 0.8;
  CHECK(argmax_rows(probs) == std::vector<int>{0, 1, 0, 1});
  auto all_test = std::vector<Split>(4, Split::kTest);
  auto m = mask_of({0, 1, 1, 1}, all_test);
  CHECK(accuracy(probs, m, Split::kTest) == doctest::Approx(0.75));
  CHECK(auc(probs, m, Split::kTest) == doctest::Approx(1.0));
  // tp=2, fp=0, fn=1
  CHECK(f1_score(probs, m, Split::kTest) == doctest::Approx(0.8));

  auto tied = mask_of({1, 0, 1, 0}, all_test);
  Matrix same = Matrix::Constant(4, 2, 0.5);
  CHECK(auc(same, tied, Split::kTest) == doctest::Approx(0.5));

  Matrix three(3, 3);
  three << 0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8;
  auto m3 = mask_of({0, 1, 2}, std::vector<Split>(3, Split::kTest), 3);
  CHECK(auc(three, m3, Split::kTest) == doctest::Approx(1.0));
  CHECK(std::isnan(f1_score(three, m3, Split::kTest)));
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.effective_pae_dropout() == c.dropout);
  c.pae_dropout = 0.5;
  CHECK(c.effective_pae_dropout() == 0.5);
  c = {};
  c.edge_dropout = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

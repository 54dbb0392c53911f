#include <doctest.h>

#include <cmath>

#include "ic/classifier.hpp"
#include "ic/evaluation.hpp"
#include "ic/synthetic.hpp"

using namespace ic;

namespace {

ModelConfig head_config(int classes, int hidden = 4) {
  ModelConfig c;
  c.encoder_hidden = hidden;
  c.decoder_hidden = 2 * hidden;
  c.input_dim = 2;
  c.num_classes = classes;
  return c;
}

// Three classes of 2-D sequences: constant offsets far apart.
std::pair<std::vector<Sequence>, std::vector<int>> separable_set(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sequence> seqs;
  std::vector<int> labels;
  const double centers[3][2] = {{1.0, 0.0}, {-1.0, 0.5}, {0.0, -1.0}};
  for (std::size_t i = 0; i < per_class; ++i)
    for (int c = 0; c < 3; ++c) {
      Sequence s(6, 2);
      for (Index t = 0; t < 6; ++t)
        for (Index d = 0; d < 2; ++d) s(t, d) = centers[c][d] + 0.1 * rng.normal();
      seqs.push_back(s);
      labels.push_back(c);
    }
  return {seqs, labels};
}

}  // namespace

TEST_CASE("zero head gives uniform probabilities") {
  ModelConfig c = head_config(5);
  ModelParams p = ModelParams::zeros(c);
  Vector probs = classify(p, Vector::Random(8));
  for (Index i = 0; i < 5; ++i) CHECK(probs(i) == doctest::Approx(0.2));
}

TEST_CASE("softmax of a dominant logit") {
  Matrix logits(4, 1);
  logits << 10, 0, 0, 0;
  Matrix p = softmax_columns(logits);
  CHECK(p(0, 0) == doctest::Approx(0.99986).epsilon(1e-5));
  CHECK(p(0, 0) == doctest::Approx(std::exp(10.0) / (std::exp(10.0) + 3.0)).epsilon(1e-15));
}

TEST_CASE("probabilities form a simplex point for any input") {
  Rng rng(1);
  ModelConfig c = head_config(4);
  ModelParams p = ModelParams::initialize(c, rng);
  for (int trial = 0; trial < 200; ++trial) {
    Vector latent(8);
    for (Index i = 0; i < 8; ++i) latent(i) = rng.uniform(-1000, 1000);
    Vector probs = classify(p, latent);
    CHECK(probs.minCoeff() >= 0.0);
    CHECK(std::abs(probs.sum() - 1.0) < 1e-9);
  }
  CHECK_THROWS(classify(p, Vector::Zero(3)));
}

TEST_CASE("class loss") {
  Vector p(2);
  p << 0.5, 0.5;
  CHECK(class_loss(p, 0) == doctest::Approx(0.693147).epsilon(1e-6));
  Vector uniform = Vector::Constant(10, 0.1);
  CHECK(class_loss(uniform, 7) == doctest::Approx(2.302585).epsilon(1e-6));
  Vector one_hot = Vector::Zero(3);
  one_hot(1) = 1.0;
  CHECK(class_loss(one_hot, 1) == 0.0);
  CHECK(class_loss(one_hot, 0) == doctest::Approx(-std::log(kProbabilityFloor)));
  CHECK_THROWS_AS(class_loss(one_hot, 3), std::out_of_range);

  double previous = INFINITY;
  for (double q = 0.05; q < 1.0; q += 0.05) {
    Vector v(2);
    v << q, 1.0 - q;
    const double loss = class_loss(v, 0);
    CHECK(loss < previous);
    previous = loss;
  }
}

TEST_CASE("combined loss is the mean of its terms") {
  CHECK(combined_loss(0, 0) == 0.0);
  CHECK(combined_loss(2, 4) == 3.0);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
    CHECK(combined_loss(a, a) == a);
    CHECK(combined_loss(a, b) == 0.5 * a + 0.5 * b);
  }
}

TEST_CASE("strategy (i) fits a separable set") {
  auto [seqs, labels] = separable_set(10, 3);
  ModelConfig c = head_config(3);
  c.seq_len = 6;
  c.learning_rate = 1e-2;
  c.batch_size = 10;
  StrategyResult r = train_strategy_i(c, seqs, labels, 60);
  const std::vector<int> predicted = predict(r.trainer.params(), seqs);
  CHECK(accuracy(predicted, labels) >= 95.0);

  StrategyResult again = train_strategy_i(c, seqs, labels, 60);
  CHECK(again.trainer.params() == r.trainer.params());

  const std::vector<int> none(labels.size(), -1);
  CHECK_THROWS_AS(train_strategy_i(c, seqs, none, 1), std::invalid_argument);
}

TEST_CASE("strategy (ii)") {
  auto [seqs, labels] = separable_set(6, 4);
  ModelConfig c = head_config(3);
  c.seq_len = 6;
  c.learning_rate = 1e-2;
  Trainer pre(c);
  train_autoregression(pre, seqs, 5);
  const ModelParams pretrained = pre.params();

  SUBCASE("zero epochs keep the pretrained weights") {
    StrategyResult r = train_strategy_ii(c, pretrained, seqs, labels, 0);
    CHECK(r.trainer.params() == pretrained);
    CHECK(r.trace.empty());
  }
  SUBCASE("decoder recurrence stays frozen") {
    StrategyResult r = train_strategy_ii(c, pretrained, seqs, labels, 5);
    CHECK(r.trainer.params().decoder == pretrained.decoder);
    CHECK(!(r.trainer.params().head_w == pretrained.head_w));
  }
  SUBCASE("no labels means no head gradient") {
    const std::vector<int> none(labels.size(), -1);
    StrategyResult r = train_strategy_ii(c, pretrained, seqs, none, 5);
    CHECK(r.trainer.params().head_w == pretrained.head_w);
    CHECK(r.trainer.params().head_b == pretrained.head_b);
    CHECK(!(r.trainer.params().out_w == pretrained.out_w));
  }
  SUBCASE("dropping the prediction term changes the trace") {
    StrategyResult with = train_strategy_ii(c, pretrained, seqs, labels, 3);
    StrategyResult without = train_strategy_ii(c, pretrained, seqs, labels, 3, {0.0, 0.5});
    CHECK(with.trace.back().loss != without.trace.back().loss);
    CHECK(without.trace.back().pred == 0.0);  // zero-weight terms are not evaluated
  }
}

TEST_CASE("head gradient matches finite differences") {
  ModelConfig c = head_config(3, 2);
  c.seq_len = 3;
  Rng rng(5);
  ModelParams p = ModelParams::initialize(c, rng);
  std::vector<Sequence> seqs{Sequence::Random(3, 2), Sequence::Random(3, 2)};
  const std::vector<int> labels{2, 0};
  const SequenceBatch batch = make_batch(seqs);
  ModelParams g;
  loss_and_gradients(p, c, batch, labels, kCombinedWeights, &g);
  const double h = 1e-5;
  for (Matrix* m : {&p.head_w, &p.head_b}) {
    const Matrix& analytic = m == &p.head_w ? g.head_w : g.head_b;
    for (Index k = 0; k < m->size(); ++k) {
      const double saved = m->data()[k];
      m->data()[k] = saved + h;
      const double up = loss_and_gradients(p, c, batch, labels, kCombinedWeights, nullptr).total;
      m->data()[k] = saved - h;
      const double down = loss_and_gradients(p, c, batch, labels, kCombinedWeights, nullptr).total;
      m->data()[k] = saved;
      CHECK(analytic.data()[k] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
    }
  }
}

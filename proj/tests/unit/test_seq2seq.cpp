#include <doctest.h>

#include <cmath>

#include "ic/classifier.hpp"
#include "ic/seq2seq.hpp"
#include "ic/synthetic.hpp"

using namespace ic;

namespace {

ModelConfig toy_config(int layers = 1) {
  ModelConfig c;
  c.encoder_layers = layers;
  c.encoder_hidden = 3;
  c.decoder_hidden = 6;
  c.input_dim = 4;
  c.seq_len = 4;
  c.num_classes = 3;
  c.seed = 11;
  return c;
}

std::vector<Sequence> random_sequences(std::size_t count, Index steps, Index features, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sequence> out;
  for (std::size_t i = 0; i < count; ++i) {
    Sequence s(steps, features);
    for (Index t = 0; t < steps; ++t)
      for (Index f = 0; f < features; ++f) s(t, f) = rng.uniform(-1.0, 1.0);
    out.push_back(s);
  }
  return out;
}

double max_gradient_error(const ModelConfig& config, const LossWeights& weights, std::span<const int> labels) {
  Rng rng(config.seed);
  ModelParams params = ModelParams::initialize(config, rng);
  const auto seqs = random_sequences(labels.size(), config.seq_len, config.input_dim, 5);
  const SequenceBatch batch = make_batch(seqs);

  ModelParams grads;
  loss_and_gradients(params, config, batch, labels, weights, &grads);

  const double h = 1e-5;
  double worst = 0.0;
  auto p = tensors(params);
  auto g = tensors(grads);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!is_trainable(p[i].role, config)) continue;
    Matrix& value = *p[i].value;
    for (Index k = 0; k < value.size(); ++k) {
      const double saved = value.data()[k];
      value.data()[k] = saved + h;
      const double up = loss_and_gradients(params, config, batch, labels, weights, nullptr).total;
      value.data()[k] = saved - h;
      const double down = loss_and_gradients(params, config, batch, labels, weights, nullptr).total;
      value.data()[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g[i].value->data()[k];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-7});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.decoder_hidden = 31;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.lr_decay = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.encoder_layers = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("config json round trip") {
  ModelConfig c = toy_config(2);
  c.learning_rate = 3e-3;
  c.decoder_gain = 4.0;
  nlohmann::json j = c;
  CHECK(j.get<ModelConfig>() == c);
}

TEST_CASE("latent length is twice the encoder hidden size") {
  for (int hidden : {1, 3, 125}) {
    ModelConfig c = toy_config();
    c.encoder_hidden = hidden;
    c.decoder_hidden = 2 * hidden;
    Rng rng(1);
    ModelParams p = ModelParams::initialize(c, rng);
    const auto seqs = random_sequences(2, 5, 4, 3);
    Encoding e = encode(p, make_batch(seqs));
    CHECK(e.latent.rows() == 2 * hidden);
    CHECK(e.latent.cols() == 2);
    CHECK(e.latent.allFinite());
  }
  ModelConfig big;
  big.encoder_hidden = 1024;
  big.decoder_hidden = 2048;
  CHECK(big.latent_dim() == 2048);
}

TEST_CASE("latent is the final forward and backward states of the last layer") {
  ModelConfig c = toy_config();
  Rng rng(2);
  ModelParams p = ModelParams::initialize(c, rng);
  const auto seqs = random_sequences(1, 4, 4, 9);
  const Sequence& s = seqs[0];

  Vector hf = Vector::Zero(3), hb = Vector::Zero(3);
  for (Index t = 0; t < 4; ++t) hf = gru_cell_forward(p.encoder[0][0], s.row(t).transpose(), hf);
  for (Index t = 3; t >= 0; --t) hb = gru_cell_forward(p.encoder[0][1], s.row(t).transpose(), hb);

  Encoding e = encode(p, make_batch(seqs));
  for (Index i = 0; i < 3; ++i) {
    CHECK(e.latent(i, 0) == doctest::Approx(hf(i)).epsilon(1e-14));
    CHECK(e.latent(3 + i, 0) == doctest::Approx(hb(i)).epsilon(1e-14));
  }
}

TEST_CASE("batched encoding matches one-at-a-time encoding") {
  ModelConfig c = toy_config(2);
  Rng rng(4);
  ModelParams p = ModelParams::initialize(c, rng);
  const auto seqs = random_sequences(7, 4, 4, 10);
  Matrix all = encode_latents(p, seqs, 3);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    Matrix one = encode(p, make_batch(std::span<const Sequence>(&seqs[i], 1))).latent;
    CHECK((one.col(0) - all.col(static_cast<Index>(i))).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("decoder unrolls from the latent with zero inputs") {
  // Hidden 2, input 2, two steps, evaluated by hand from the gate equations.
  ModelConfig c;
  c.encoder_hidden = 1;
  c.decoder_hidden = 2;
  c.input_dim = 2;
  ModelParams p = ModelParams::zeros(c);
  p.decoder.uz << 0.5, 0.0, 0.0, -0.5;
  p.decoder.un << 0.0, 1.0, 1.0, 0.0;
  p.decoder.br << 1.0, 1.0;
  p.out_w << 1.0, 0.0, 1.0, 1.0;
  p.out_b << 0.0, 0.5;
  // The zero-input weights must have no effect.
  p.decoder.wz.setConstant(7.0);
  p.decoder.wn.setConstant(-3.0);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double h0 = 0.2, h1 = -0.4;
  std::vector<std::array<double, 2>> expect;
  for (int k = 0; k < 2; ++k) {
    const double z0 = sig(0.5 * h0), z1 = sig(-0.5 * h1);
    const double r = sig(1.0);
    const double n0 = std::tanh(r * h1), n1 = std::tanh(r * h0);
    const double a = (1 - z0) * n0 + z0 * h0;
    const double b = (1 - z1) * n1 + z1 * h1;
    h0 = a;
    h1 = b;
    expect.push_back({h0, h0 + h1 + 0.5});
  }
  Vector latent(2);
  latent << 0.2, -0.4;
  Sequence out = decode_sequence(p, latent, 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(out(k, 0) == doctest::Approx(expect[k][0]).epsilon(1e-14));
    CHECK(out(k, 1) == doctest::Approx(expect[k][1]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(decode_sequence(p, Vector::Zero(3), 2), ShapeError);
}

TEST_CASE("prediction loss is the mean squared error") {
  Matrix a(2, 3), b(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  b << 1, 0, 3, 4, 8, 6;
  CHECK(prediction_loss(a, b) == doctest::Approx((4.0 + 9.0) / 6.0));
  CHECK(prediction_loss(a, a) == 0.0);
  CHECK_THROWS_AS(prediction_loss(a, Matrix(3, 2)), ShapeError);
}

TEST_CASE("batch loss matches a per-sample brute force evaluation") {
  ModelConfig c = toy_config();
  Rng rng(6);
  ModelParams p = ModelParams::initialize(c, rng);
  const auto seqs = random_sequences(3, 4, 4, 7);
  const std::vector<int> labels{2, -1, 0};
  const LossBreakdown got = loss_and_gradients(p, c, make_batch(seqs), labels, kCombinedWeights, nullptr);

  double pred = 0.0, cls = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    Vector latent = encode(p, make_batch(std::span<const Sequence>(&seqs[i], 1))).latent.col(0);
    pred += prediction_loss(decode_sequence(p, latent, 4), seqs[i]) / 3.0;
    if (labels[i] >= 0) cls += class_loss(classify(p, latent), static_cast<std::size_t>(labels[i])) / 2.0;
  }
  CHECK(got.pred == doctest::Approx(pred).epsilon(1e-12));
  CHECK(got.cls == doctest::Approx(cls).epsilon(1e-12));
  CHECK(got.total == doctest::Approx(combined_loss(cls, pred)).epsilon(1e-12));
  CHECK(got.labeled == 2);
}

TEST_CASE("reverse target compares against the time-reversed input") {
  ModelConfig c = toy_config();
  c.reverse_target = true;
  Rng rng(8);
  ModelParams p = ModelParams::initialize(c, rng);
  const auto seqs = random_sequences(1, 4, 4, 1);
  Vector latent = encode(p, make_batch(seqs)).latent.col(0);
  const Sequence reversed = seqs[0].colwise().reverse();
  const double expect = prediction_loss(decode_sequence(p, latent, 4), reversed);
  CHECK(loss_and_gradients(p, c, make_batch(seqs), {}, {}, nullptr).pred == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
  const std::vector<int> labels{0, 2, -1};
  SUBCASE("prediction loss") { CHECK(max_gradient_error(toy_config(), {1.0, 0.0}, labels) < 1e-4); }
  SUBCASE("class loss") { CHECK(max_gradient_error(toy_config(), {0.0, 1.0}, labels) < 1e-4); }
  SUBCASE("combined loss") { CHECK(max_gradient_error(toy_config(), kCombinedWeights, labels) < 1e-4); }
  SUBCASE("stacked encoder") { CHECK(max_gradient_error(toy_config(2), kCombinedWeights, labels) < 1e-4); }
  SUBCASE("trainable decoder and reversed target") {
    ModelConfig c = toy_config();
    c.decoder_frozen = false;
    c.reverse_target = true;
    CHECK(max_gradient_error(c, kCombinedWeights, labels) < 1e-4);
  }
}

TEST_CASE("frozen tensors keep zero optimizer moments") {
  ModelConfig c = toy_config();
  Trainer t(c);
  const GruParams decoder_before = t.params().decoder;
  const auto seqs = random_sequences(6, 4, 4, 2);
  t.run_epoch(seqs, {}, {});
  CHECK(t.params().decoder == decoder_before);
  CHECK(t.optimizer().m.decoder == GruParams::zeros(4, 6));
  CHECK(!(t.params().out_w == Trainer(c).params().out_w));
}

TEST_CASE("adam update follows the bias-corrected recursion") {
  Matrix param(1, 2), grad(1, 2), m = Matrix::Zero(1, 2), v = Matrix::Zero(1, 2);
  param << 1.0, -2.0;
  const AdamOptions o;
  double pm[2] = {0, 0}, pv[2] = {0, 0}, pp[2] = {1.0, -2.0};
  const double grads[3][2] = {{0.5, -1.0}, {0.1, 0.3}, {-0.2, 2.0}};
  for (int step = 1; step <= 3; ++step) {
    grad << grads[step - 1][0], grads[step - 1][1];
    adam_update(param, grad, m, v, static_cast<std::uint64_t>(step), 0.01, o);
    for (int i = 0; i < 2; ++i) {
      const double g = grads[step - 1][i];
      pm[i] = 0.9 * pm[i] + 0.1 * g;
      pv[i] = 0.999 * pv[i] + 0.001 * g * g;
      const double mh = pm[i] / (1 - std::pow(0.9, step));
      const double vh = pv[i] / (1 - std::pow(0.999, step));
      pp[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(param(0, i) == doctest::Approx(pp[i]).epsilon(1e-14));
    }
  }
  // First step moves every coordinate by about lr regardless of gradient scale.
  Matrix q = Matrix::Zero(1, 1), gm = Matrix::Constant(1, 1, 1e-3), mm = Matrix::Zero(1, 1), vv = Matrix::Zero(1, 1);
  adam_update(q, gm, mm, vv, 1, 0.01, o);
  CHECK(q(0, 0) == doctest::Approx(-0.01).epsilon(1e-4));
}

TEST_CASE("gradient clipping bounds the global norm") {
  ModelConfig c = toy_config();
  ModelParams g = ModelParams::zeros(c);
  g.out_w.setConstant(10.0);
  g.decoder.un.setConstant(100.0);  // frozen: excluded from the norm
  const double before = clip_gradients(g, c, 5.0);
  CHECK(before == doctest::Approx(10.0 * std::sqrt(static_cast<double>(g.out_w.size()))));
  CHECK(g.out_w.norm() == doctest::Approx(5.0));
  CHECK(g.decoder.un(0, 0) == 100.0);
}

TEST_CASE("learning rate decays by 5 percent every 50 epochs") {
  ModelConfig c;
  c.learning_rate = 1e-4;
  CHECK(c.learning_rate_at(0) == doctest::Approx(1e-4));
  CHECK(c.learning_rate_at(49) == doctest::Approx(1e-4));
  CHECK(c.learning_rate_at(50) == doctest::Approx(0.95e-4));
  CHECK(c.learning_rate_at(120) == doctest::Approx(1e-4 * 0.95 * 0.95));
}

TEST_CASE("zero epochs leave the initialization untouched") {
  ModelConfig c = toy_config();
  Trainer t(c);
  Rng rng(c.seed);
  const ModelParams init = ModelParams::initialize(c, rng);
  const auto seqs = random_sequences(4, 4, 4, 3);
  CHECK(train_autoregression(t, seqs, 0).empty());
  CHECK(t.params() == init);
}

TEST_CASE("training is deterministic for a fixed seed") {
  ModelConfig c = toy_config();
  const auto seqs = random_sequences(9, 4, 4, 3);
  Trainer a(c), b(c);
  CHECK(train_autoregression(a, seqs, 5) == train_autoregression(b, seqs, 5));
  CHECK(a == b);
  c.seed = 12;
  Trainer d(c);
  train_autoregression(d, seqs, 5);
  CHECK(!(d.params() == a.params()));
}

TEST_CASE("batches without any loss signal skip the optimizer step") {
  ModelConfig c = toy_config();
  c.batch_size = 2;
  Trainer t(c);
  const ModelParams before = t.params();
  const auto seqs = random_sequences(4, 4, 4, 3);
  const std::vector<int> none{-1, -1, -1, -1};
  const EpochStats s = t.run_epoch(seqs, none, {0.0, 1.0});
  CHECK(s.steps == 0);
  CHECK(t.params() == before);
  CHECK(t.optimizer().step == 0);
}

TEST_CASE("non-finite parameters raise a numeric error") {
  ModelConfig c = toy_config();
  Rng rng(1);
  ModelParams p = ModelParams::initialize(c, rng);
  p.encoder[0][0].wz(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto seqs = random_sequences(2, 4, 4, 3);
  CHECK_THROWS_AS(encode(p, make_batch(seqs)), NumericError);
  Trainer t(c, p, 1);
  CHECK_THROWS_AS(t.run_epoch(seqs, {}, {}), NumericError);
}

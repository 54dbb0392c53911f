#include "ic/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ic/classifier.hpp"

namespace ic {

using nlohmann::json;

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (encoder_layers < 1) fail("encoder_layers must be >= 1");
  if (encoder_hidden < 1) fail("encoder_hidden must be >= 1");
  if (input_dim < 1) fail("input_dim must be >= 1");
  if (decoder_hidden != 2 * encoder_hidden) fail("decoder_hidden must equal 2 * encoder_hidden");
  if (seq_len < 1) fail("seq_len must be >= 1");
  if (num_classes < 0) fail("num_classes must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must lie in (0, 1]");
  if (decay_interval_epochs < 1) fail("decay_interval_epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    fail("adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be > 0");
  if (!(decoder_gain > 0.0)) fail("decoder_gain must be > 0");
}

double ModelConfig::learning_rate_at(std::size_t epoch) const {
  const auto intervals = static_cast<double>(epoch / static_cast<std::size_t>(decay_interval_epochs));
  return learning_rate * std::pow(lr_decay, intervals);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"encoder_layers", c.encoder_layers},
           {"encoder_hidden", c.encoder_hidden},
           {"input_dim", c.input_dim},
           {"decoder_hidden", c.decoder_hidden},
           {"seq_len", c.seq_len},
           {"num_classes", c.num_classes},
           {"decoder_frozen", c.decoder_frozen},
           {"reverse_target", c.reverse_target},
           {"learning_rate", c.learning_rate},
           {"lr_decay", c.lr_decay},
           {"decay_interval_epochs", c.decay_interval_epochs},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"clip_norm", c.clip_norm},
           {"decoder_gain", c.decoder_gain},
           {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2},
           {"adam_epsilon", c.adam_epsilon}};
}

void from_json(const json& j, ModelConfig& c) {
  ModelConfig d;
  c.encoder_layers = j.value("encoder_layers", d.encoder_layers);
  c.encoder_hidden = j.value("encoder_hidden", d.encoder_hidden);
  c.input_dim = j.value("input_dim", d.input_dim);
  c.decoder_hidden = j.value("decoder_hidden", 2 * c.encoder_hidden);
  c.seq_len = j.value("seq_len", d.seq_len);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.decoder_frozen = j.value("decoder_frozen", d.decoder_frozen);
  c.reverse_target = j.value("reverse_target", d.reverse_target);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.lr_decay = j.value("lr_decay", d.lr_decay);
  c.decay_interval_epochs = j.value("decay_interval_epochs", d.decay_interval_epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.decoder_gain = j.value("decoder_gain", d.decoder_gain);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", d.adam_epsilon);
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

void fill_uniform(Matrix& m, double bound, Rng& rng) {
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
}

void init_gru(GruParams& p, Rng& rng, double recurrent_gain = 1.0) {
  const double w_bound = 1.0 / std::sqrt(static_cast<double>(p.input_dim()));
  const double u_bound = 1.0 / std::sqrt(static_cast<double>(p.hidden_dim()));
  for (Matrix* w : {&p.wz, &p.wr, &p.wn}) fill_uniform(*w, w_bound, rng);
  for (Matrix* u : {&p.uz, &p.ur, &p.un}) fill_uniform(*u, recurrent_gain * u_bound, rng);
  for (Matrix* b : {&p.bz, &p.br, &p.bn}) fill_uniform(*b, u_bound, rng);
}

template <class Params, class Ref>
std::vector<Ref> collect(Params& p) {
  std::vector<Ref> out;
  auto add_gru = [&](const std::string& prefix, auto& g, TensorRole role) {
    out.push_back({prefix + ".wz", &g.wz, role});
    out.push_back({prefix + ".wr", &g.wr, role});
    out.push_back({prefix + ".wn", &g.wn, role});
    out.push_back({prefix + ".uz", &g.uz, role});
    out.push_back({prefix + ".ur", &g.ur, role});
    out.push_back({prefix + ".un", &g.un, role});
    out.push_back({prefix + ".bz", &g.bz, role});
    out.push_back({prefix + ".br", &g.br, role});
    out.push_back({prefix + ".bn", &g.bn, role});
  };
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    add_gru("encoder.l" + std::to_string(l) + ".fwd", p.encoder[l][0], TensorRole::Encoder);
    add_gru("encoder.l" + std::to_string(l) + ".bwd", p.encoder[l][1], TensorRole::Encoder);
  }
  add_gru("decoder", p.decoder, TensorRole::DecoderRecurrent);
  out.push_back({"output.w", &p.out_w, TensorRole::Output});
  out.push_back({"output.b", &p.out_b, TensorRole::Output});
  out.push_back({"head.w", &p.head_w, TensorRole::Head});
  out.push_back({"head.b", &p.head_b, TensorRole::Head});
  return out;
}

}  // namespace

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  const Index hidden = config.encoder_hidden;
  for (int l = 0; l < config.encoder_layers; ++l) {
    const Index in = l == 0 ? config.input_dim : 2 * hidden;
    p.encoder.push_back({GruParams::zeros(in, hidden), GruParams::zeros(in, hidden)});
  }
  p.decoder = GruParams::zeros(config.input_dim, config.decoder_hidden);
  p.out_w.setZero(config.input_dim, config.decoder_hidden);
  p.out_b.setZero(config.input_dim, 1);
  p.head_w.setZero(config.num_classes, config.latent_dim());
  p.head_b.setZero(config.num_classes, 1);
  return p;
}

ModelParams ModelParams::initialize(const ModelConfig& config, Rng& rng) {
  ModelParams p = zeros(config);
  for (auto& layer : p.encoder) {
    init_gru(layer[0], rng);
    init_gru(layer[1], rng);
  }
  init_gru(p.decoder, rng, config.decoder_gain);
  const double out_bound = 1.0 / std::sqrt(static_cast<double>(config.decoder_hidden));
  fill_uniform(p.out_w, out_bound, rng);
  fill_uniform(p.out_b, out_bound, rng);
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(config.latent_dim()));
  fill_uniform(p.head_w, head_bound, rng);
  fill_uniform(p.head_b, head_bound, rng);
  return p;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  auto ta = tensors(a);
  auto tb = tensors(b);
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const Matrix& x = *ta[i].value;
    const Matrix& y = *tb[i].value;
    if (x.rows() != y.rows() || x.cols() != y.cols() || x != y) return false;
  }
  return true;
}

std::vector<TensorRef> tensors(ModelParams& params) { return collect<ModelParams, TensorRef>(params); }
std::vector<ConstTensorRef> tensors(const ModelParams& params) {
  return collect<const ModelParams, ConstTensorRef>(params);
}

bool is_trainable(TensorRole role, const ModelConfig& config) {
  return !(role == TensorRole::DecoderRecurrent && config.decoder_frozen);
}

bool all_finite(const ModelParams& params) {
  for (const auto& t : tensors(params))
    if (!t.value->allFinite()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Forward passes

SequenceBatch make_batch(std::span<const Sequence> sequences, std::span<const std::size_t> indices) {
  SequenceBatch batch;
  if (indices.empty()) return batch;
  const Sequence& first = sequences[indices.front()];
  const Index steps = first.rows();
  const Index features = first.cols();
  const auto count = static_cast<Index>(indices.size());
  batch.steps.assign(static_cast<std::size_t>(steps), Matrix(features, count));
  for (Index b = 0; b < count; ++b) {
    const Sequence& s = sequences[indices[static_cast<std::size_t>(b)]];
    if (s.rows() != steps || s.cols() != features)
      throw ShapeError("make_batch: sequences must share one shape");
    for (Index t = 0; t < steps; ++t) batch.steps[static_cast<std::size_t>(t)].col(b) = s.row(t).transpose();
  }
  return batch;
}

SequenceBatch make_batch(std::span<const Sequence> sequences) {
  std::vector<std::size_t> all(sequences.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return make_batch(sequences, all);
}

Encoding encode(const ModelParams& params, const SequenceBatch& batch) {
  if (params.encoder.empty()) throw ShapeError("encode: model has no encoder layers");
  const std::size_t steps = batch.steps.size();
  if (steps == 0) throw ShapeError("encode: empty sequence");
  const Index hidden = params.encoder.front()[0].hidden_dim();
  const Index count = batch.batch_size();

  Encoding enc;
  enc.cache.layers.resize(params.encoder.size());
  std::vector<Matrix> inputs = batch.steps;
  std::vector<Matrix> fwd(steps), bwd(steps);
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    auto& cache = enc.cache.layers[l];
    cache[0].resize(steps);
    cache[1].resize(steps);
    Matrix h = Matrix::Zero(hidden, count);
    for (std::size_t t = 0; t < steps; ++t) {
      h = gru_step(params.encoder[l][0], inputs[t], h, &cache[0][t]);
      fwd[t] = h;
    }
    h.setZero(hidden, count);
    for (std::size_t k = 0; k < steps; ++k) {
      const std::size_t t = steps - 1 - k;
      h = gru_step(params.encoder[l][1], inputs[t], h, &cache[1][k]);
      bwd[t] = h;
    }
    if (l + 1 < params.encoder.size()) {
      for (std::size_t t = 0; t < steps; ++t) {
        inputs[t].resize(2 * hidden, count);
        inputs[t] << fwd[t], bwd[t];
      }
    }
  }
  enc.latent.resize(2 * hidden, count);
  enc.latent << fwd[steps - 1], bwd[0];
  if (!enc.latent.allFinite()) throw NumericError("encode: non-finite activation (exploding parameters?)");
  return enc;
}

Matrix encode_latents(const ModelParams& params, std::span<const Sequence> sequences, std::size_t chunk) {
  const Index dim = 2 * params.encoder.front()[0].hidden_dim();
  Matrix out(dim, static_cast<Index>(sequences.size()));
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < sequences.size(); start += chunk) {
    const std::size_t end = std::min(sequences.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Encoding enc = encode(params, make_batch(sequences, idx));
    out.middleCols(static_cast<Index>(start), static_cast<Index>(end - start)) = enc.latent;
  }
  return out;
}

std::vector<Matrix> decode(const ModelParams& params, const Matrix& latent, std::size_t steps, DecoderCache* cache) {
  if (latent.rows() != params.decoder.hidden_dim())
    throw ShapeError("decode: latent length " + std::to_string(latent.rows()) + " != decoder hidden " +
                     std::to_string(params.decoder.hidden_dim()));
  const Matrix zero_input = Matrix::Zero(params.decoder.input_dim(), latent.cols());
  std::vector<Matrix> out;
  out.reserve(steps);
  if (cache) {
    cache->steps.assign(steps, GruStepCache{});
    cache->hidden.assign(steps, Matrix{});
  }
  Matrix h = latent;
  for (std::size_t k = 0; k < steps; ++k) {
    h = gru_step(params.decoder, zero_input, h, cache ? &cache->steps[k] : nullptr);
    out.push_back((params.out_w * h).colwise() + params.out_b.col(0));
    if (cache) cache->hidden[k] = h;
  }
  return out;
}

Sequence decode_sequence(const ModelParams& params, const Vector& latent, std::size_t steps) {
  Matrix column = latent;
  std::vector<Matrix> frames = decode(params, column, steps);
  Sequence seq(static_cast<Index>(steps), params.out_w.rows());
  for (std::size_t k = 0; k < steps; ++k) seq.row(static_cast<Index>(k)) = frames[k].col(0).transpose();
  return seq;
}

double prediction_loss(const Matrix& predicted, const Matrix& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols())
    throw ShapeError("prediction_loss: shape mismatch");
  if (predicted.size() == 0) return 0.0;
  return (predicted - target).squaredNorm() / static_cast<double>(predicted.size());
}

// ---------------------------------------------------------------------------
// Backpropagation

LossBreakdown loss_and_gradients(const ModelParams& params, const ModelConfig& config, const SequenceBatch& batch,
                                 std::span<const int> labels, const LossWeights& weights, ModelParams* grads) {
  const std::size_t steps = batch.steps.size();
  const Index count = batch.batch_size();
  if (!labels.empty() && static_cast<Index>(labels.size()) != count)
    throw ShapeError("loss_and_gradients: label count does not match batch");
  if (grads) *grads = ModelParams::zeros(config);

  Encoding enc = encode(params, batch);
  Matrix d_latent = Matrix::Zero(enc.latent.rows(), count);
  LossBreakdown loss;

  // Prediction term.
  if (weights.pred != 0.0) {
    DecoderCache dcache;
    std::vector<Matrix> predicted = decode(params, enc.latent, steps, grads ? &dcache : nullptr);
    const double denom = static_cast<double>(steps) * static_cast<double>(predicted.front().rows()) *
                         static_cast<double>(count);
    std::vector<Matrix> d_pred(steps);
    double sq = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
      const Matrix& target = batch.steps[config.reverse_target ? steps - 1 - k : k];
      Matrix diff = predicted[k] - target;
      sq += diff.squaredNorm();
      if (grads) d_pred[k] = (2.0 * weights.pred / denom) * diff;
    }
    loss.pred = sq / denom;
    if (grads) {
      Matrix d_h = Matrix::Zero(params.decoder.hidden_dim(), count);
      for (std::size_t k = steps; k-- > 0;) {
        grads->out_w.noalias() += d_pred[k] * dcache.hidden[k].transpose();
        grads->out_b += d_pred[k].rowwise().sum();
        d_h.noalias() += params.out_w.transpose() * d_pred[k];
        d_h = gru_step_backward(params.decoder, dcache.steps[k], d_h, grads->decoder, nullptr);
      }
      d_latent += d_h;
    }
  }

  // Classification term over labeled columns.
  std::vector<Index> labeled;
  for (Index b = 0; b < static_cast<Index>(labels.size()); ++b)
    if (labels[static_cast<std::size_t>(b)] >= 0) labeled.push_back(b);
  loss.labeled = labeled.size();
  if (weights.cls != 0.0 && !labeled.empty()) {
    if (config.num_classes < 1) throw ShapeError("loss_and_gradients: labels given but model has no classifier head");
    Matrix probs = classify_batch(params, enc.latent);
    const double scale = weights.cls / static_cast<double>(labeled.size());
    Matrix d_logits = Matrix::Zero(probs.rows(), count);
    double ce = 0.0;
    for (Index b : labeled) {
      const int y = labels[static_cast<std::size_t>(b)];
      if (y >= probs.rows()) throw std::out_of_range("loss_and_gradients: label index out of range");
      const double p = probs(y, b);
      ce += -std::log(std::max(p, kProbabilityFloor));
      if (p >= kProbabilityFloor) {
        d_logits.col(b) = scale * probs.col(b);
        d_logits(y, b) -= scale;
      }
    }
    loss.cls = ce / static_cast<double>(labeled.size());
    if (grads) {
      grads->head_w.noalias() += d_logits * enc.latent.transpose();
      grads->head_b += d_logits.rowwise().sum();
      d_latent.noalias() += params.head_w.transpose() * d_logits;
    }
  }

  loss.total = weights.pred * loss.pred + (labeled.empty() ? 0.0 : weights.cls * loss.cls);
  if (!grads) return loss;

  // Encoder: inject the latent gradient at the final state of each direction
  // of the last layer, then walk the layers downwards.
  const Index hidden = params.encoder.front()[0].hidden_dim();
  std::vector<Matrix> d_out_f(steps, Matrix::Zero(hidden, count));
  std::vector<Matrix> d_out_b(steps, Matrix::Zero(hidden, count));
  d_out_f[steps - 1] = d_latent.topRows(hidden);
  d_out_b[0] = d_latent.bottomRows(hidden);
  for (std::size_t l = params.encoder.size(); l-- > 0;) {
    const auto& cache = enc.cache.layers[l];
    const bool need_input_grad = l > 0;
    std::vector<Matrix> d_input(steps);
    Matrix d_x;
    Matrix d_h = Matrix::Zero(hidden, count);
    for (std::size_t t = steps; t-- > 0;) {
      d_h += d_out_f[t];
      d_h = gru_step_backward(params.encoder[l][0], cache[0][t], d_h, grads->encoder[l][0],
                              need_input_grad ? &d_x : nullptr);
      if (need_input_grad) d_input[t] = d_x;
    }
    d_h.setZero(hidden, count);
    for (std::size_t k = steps; k-- > 0;) {
      const std::size_t t = steps - 1 - k;
      d_h += d_out_b[t];
      d_h = gru_step_backward(params.encoder[l][1], cache[1][k], d_h, grads->encoder[l][1],
                              need_input_grad ? &d_x : nullptr);
      if (need_input_grad) d_input[t] += d_x;
    }
    if (need_input_grad) {
      for (std::size_t t = 0; t < steps; ++t) {
        d_out_f[t] = d_input[t].topRows(hidden);
        d_out_b[t] = d_input[t].bottomRows(hidden);
      }
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Optimizer

AdamState AdamState::zeros(const ModelConfig& config) {
  return AdamState{0, ModelParams::zeros(config), ModelParams::zeros(config)};
}

void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, std::uint64_t step, double lr,
                 const AdamOptions& o) {
  m = o.beta1 * m + (1.0 - o.beta1) * grad;
  v = o.beta2 * v + (1.0 - o.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + o.epsilon);
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               const ModelConfig& config) {
  state.step += 1;
  const AdamOptions options{config.adam_beta1, config.adam_beta2, config.adam_epsilon};
  auto p = tensors(params);
  auto g = tensors(grads);
  auto m = tensors(state.m);
  auto v = tensors(state.v);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!is_trainable(p[i].role, config)) continue;
    adam_update(*p[i].value, *g[i].value, *m[i].value, *v[i].value, state.step, lr, options);
  }
}

double clip_gradients(ModelParams& grads, const ModelConfig& config, double max_norm) {
  double sq = 0.0;
  auto all = tensors(grads);
  for (const auto& t : all)
    if (is_trainable(t.role, config)) sq += t.value->squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& t : all)
      if (is_trainable(t.role, config)) *t.value *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const ModelConfig& config) : config_(config), rng_(config.seed) {
  config_.validate();
  params_ = ModelParams::initialize(config_, rng_);
  adam_ = AdamState::zeros(config_);
}

Trainer::Trainer(const ModelConfig& config, ModelParams params, std::uint64_t seed)
    : config_(config), params_(std::move(params)), rng_(seed) {
  config_.validate();
  adam_ = AdamState::zeros(config_);
}

Trainer::Trainer(ModelConfig config, ModelParams params, AdamState adam, Rng rng, std::size_t epoch)
    : config_(std::move(config)), params_(std::move(params)), adam_(std::move(adam)), rng_(rng), epoch_(epoch) {
  config_.validate();
}

void Trainer::reset_optimizer() { adam_ = AdamState::zeros(config_); }

EpochStats Trainer::run_epoch(std::span<const Sequence> data, std::span<const int> labels,
                              const LossWeights& weights) {
  if (!labels.empty() && labels.size() != data.size())
    throw std::invalid_argument("run_epoch: labels must align with data");
  EpochStats stats;
  if (data.empty()) {
    ++epoch_;
    return stats;
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng_.shuffle(order);

  const double lr = current_learning_rate();
  const auto batch_size = static_cast<std::size_t>(config_.batch_size);
  ModelParams grads;
  std::vector<int> batch_labels;
  double weight_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::span<const std::size_t> idx(order.data() + start, end - start);
    batch_labels.clear();
    if (!labels.empty())
      for (std::size_t i : idx) batch_labels.push_back(labels[i]);

    const SequenceBatch batch = make_batch(data, idx);
    const LossBreakdown loss = loss_and_gradients(params_, config_, batch, batch_labels, weights, &grads);
    if (!std::isfinite(loss.total))
      throw NumericError("training: non-finite loss at epoch " + std::to_string(epoch_) + " (pred " +
                         std::to_string(loss.pred) + ", class " + std::to_string(loss.cls) + ")");
    const bool has_signal = weights.pred != 0.0 || (weights.cls != 0.0 && loss.labeled > 0);
    if (has_signal) {
      clip_gradients(grads, config_, config_.clip_norm);
      adam_step(params_, grads, adam_, lr, config_);
      stats.steps += 1;
    }
    const auto w = static_cast<double>(idx.size());
    stats.loss += w * loss.total;
    stats.pred += w * loss.pred;
    stats.cls += w * loss.cls;
    weight_sum += w;
  }
  stats.loss /= weight_sum;
  stats.pred /= weight_sum;
  stats.cls /= weight_sum;
  ++epoch_;
  return stats;
}

std::vector<double> train_autoregression(Trainer& trainer, std::span<const Sequence> data, std::size_t epochs) {
  if (data.empty() && epochs > 0) throw std::invalid_argument("train_autoregression: empty dataset");
  std::vector<double> history;
  history.reserve(epochs);
  for (std::size_t e = 0; e < epochs; ++e) history.push_back(trainer.run_epoch(data, {}, LossWeights{1.0, 0.0}).loss);
  return history;
}

}  // namespace ic

#include "ic/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ic {

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index c = 0; c < logits.cols(); ++c) {
    const double top = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - top).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

Matrix classify_batch(const ModelParams& params, const Matrix& latents) {
  if (latents.rows() != params.head_w.cols())
    throw ShapeError("classify: latent length " + std::to_string(latents.rows()) + " != head input " +
                     std::to_string(params.head_w.cols()));
  if (params.head_w.rows() == 0) throw ShapeError("classify: model has no classifier head");
  return softmax_columns((params.head_w * latents).colwise() + params.head_b.col(0));
}

Vector classify(const ModelParams& params, const Vector& latent) {
  Matrix column = latent;
  return classify_batch(params, column).col(0);
}

double class_loss(const Vector& probs, std::size_t label) {
  if (label >= static_cast<std::size_t>(probs.size()))
    throw std::out_of_range("class_loss: label " + std::to_string(label) + " outside " +
                            std::to_string(probs.size()) + " classes");
  return -std::log(std::max(probs[static_cast<Index>(label)], kProbabilityFloor));
}

double combined_loss(double class_term, double pred_term) { return 0.5 * class_term + 0.5 * pred_term; }

std::vector<int> predict(const ModelParams& params, std::span<const Sequence> sequences) {
  std::vector<int> out;
  if (sequences.empty()) return out;
  const Matrix probs = classify_batch(params, encode_latents(params, sequences));
  out.reserve(sequences.size());
  for (Index c = 0; c < probs.cols(); ++c) {
    Index best = 0;
    probs.col(c).maxCoeff(&best);
    out.push_back(static_cast<int>(best));
  }
  return out;
}

namespace {

std::vector<EpochStats> fit(Trainer& trainer, std::span<const Sequence> data, std::span<const int> labels,
                            std::size_t epochs, const LossWeights& weights) {
  std::vector<EpochStats> trace;
  trace.reserve(epochs);
  for (std::size_t e = 0; e < epochs; ++e) trace.push_back(trainer.run_epoch(data, labels, weights));
  return trace;
}

}  // namespace

StrategyResult train_strategy_i(const ModelConfig& config, std::span<const Sequence> data,
                                std::span<const int> labels, std::size_t epochs, const LossWeights& weights) {
  if (std::none_of(labels.begin(), labels.end(), [](int y) { return y >= 0; }))
    throw std::invalid_argument("train_strategy_i: at least one labeled sample is required");
  Trainer trainer(config);
  auto trace = fit(trainer, data, labels, epochs, weights);
  return {std::move(trainer), std::move(trace)};
}

StrategyResult train_strategy_ii(const ModelConfig& config, const ModelParams& pretrained,
                                 std::span<const Sequence> data, std::span<const int> labels, std::size_t epochs,
                                 const LossWeights& weights) {
  Trainer trainer(config, pretrained, config.seed + 1);
  auto trace = fit(trainer, data, labels, epochs, weights);
  return {std::move(trainer), std::move(trace)};
}

}  // namespace ic

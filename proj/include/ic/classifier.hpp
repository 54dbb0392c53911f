#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ic/seq2seq.hpp"

namespace ic {

inline constexpr double kProbabilityFloor = 1e-12;

/// Column-wise softmax, shifted by the column max for stability.
Matrix softmax_columns(const Matrix& logits);

/// Affine layer plus softmax on one latent vector.
Vector classify(const ModelParams& params, const Vector& latent);
/// Same for a latent_dim x count matrix; returns classes x count.
Matrix classify_batch(const ModelParams& params, const Matrix& latents);

/// Cross entropy -log p[label], with p floored at kProbabilityFloor.
double class_loss(const Vector& probs, std::size_t label);

/// 0.5 * class_term + 0.5 * pred_term.
double combined_loss(double class_term, double pred_term);

inline constexpr LossWeights kCombinedWeights{0.5, 0.5};

/// argmax class of every sequence under the current head.
std::vector<int> predict(const ModelParams& params, std::span<const Sequence> sequences);

struct StrategyResult {
  Trainer trainer;
  std::vector<EpochStats> trace;
};

/// Joint training from random initialization: every batch mixes L_PRED over
/// all samples with L_CLASS over its labeled members. labels[i] = -1 marks
/// unlabeled samples; at least one label is required.
StrategyResult train_strategy_i(const ModelConfig& config, std::span<const Sequence> data,
                                std::span<const int> labels, std::size_t epochs,
                                const LossWeights& weights = kCombinedWeights);

/// Fine-tunes pretrained auto-regression parameters with L_IC. The decoder
/// recurrence stays frozen per the config. With no labels this reduces to
/// pure L_PRED training.
StrategyResult train_strategy_ii(const ModelConfig& config, const ModelParams& pretrained,
                                 std::span<const Sequence> data, std::span<const int> labels, std::size_t epochs,
                                 const LossWeights& weights = kCombinedWeights);

}  // namespace ic

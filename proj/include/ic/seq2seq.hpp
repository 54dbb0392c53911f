#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ic/gru.hpp"
#include "ic/rng.hpp"

namespace ic {

/// One sample as a T x feature matrix (flattened keypoints per row).
using Sequence = Matrix;

struct ModelConfig {
  int encoder_layers = 1;
  int encoder_hidden = 16;  // per direction
  int input_dim = 4;        // N * D
  int decoder_hidden = 32;  // must equal 2 * encoder_hidden
  int seq_len = 20;
  int num_classes = 0;  // 0 disables the classifier head
  bool decoder_frozen = true;
  bool reverse_target = false;
  double learning_rate = 1e-4;
  double lr_decay = 0.95;
  int decay_interval_epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;  // <= 0 disables clipping
  /// Scales the init bound of the decoder's recurrent matrices. With zero
  /// decoder inputs a gain of 1 lets the frozen state decay within a few steps.
  double decoder_gain = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  int latent_dim() const { return 2 * encoder_hidden; }
  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;
  double learning_rate_at(std::size_t epoch) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

enum class TensorRole { Encoder, DecoderRecurrent, Output, Head };

struct ModelParams {
  std::vector<std::array<GruParams, 2>> encoder;  // [layer][forward, backward]
  GruParams decoder;
  Matrix out_w, out_b;    // input_dim x decoder_hidden, input_dim x 1
  Matrix head_w, head_b;  // classes x latent, classes x 1

  static ModelParams zeros(const ModelConfig& config);
  /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per weight matrix; biases use the gate's hidden size.
  static ModelParams initialize(const ModelConfig& config, Rng& rng);

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

struct TensorRef {
  std::string name;
  Matrix* value;
  TensorRole role;
};
struct ConstTensorRef {
  std::string name;
  const Matrix* value;
  TensorRole role;
};

/// Every tensor in a fixed, documented order (the checkpoint order).
std::vector<TensorRef> tensors(ModelParams& params);
std::vector<ConstTensorRef> tensors(const ModelParams& params);

bool is_trainable(TensorRole role, const ModelConfig& config);
bool all_finite(const ModelParams& params);

/// Time-major batch: steps[t] is feature x batch.
struct SequenceBatch {
  std::vector<Matrix> steps;
  Index batch_size() const { return steps.empty() ? 0 : steps.front().cols(); }
};
SequenceBatch make_batch(std::span<const Sequence> sequences, std::span<const std::size_t> indices);
SequenceBatch make_batch(std::span<const Sequence> sequences);

struct EncoderCache {
  // [layer][direction] -> steps in processing order
  std::vector<std::array<std::vector<GruStepCache>, 2>> layers;
};

struct Encoding {
  Matrix latent;  // latent_dim x batch: [H_f; H_b] of the last layer
  EncoderCache cache;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs the stacked bidirectional recurrence. Throws NumericError on
/// non-finite activations.
Encoding encode(const ModelParams& params, const SequenceBatch& batch);

/// Latents for a whole pool, one column per sequence.
Matrix encode_latents(const ModelParams& params, std::span<const Sequence> sequences, std::size_t chunk = 256);

struct DecoderCache {
  std::vector<GruStepCache> steps;
  std::vector<Matrix> hidden;  // hidden after each step
};

/// Unrolls the decoder from `latent` with zero inputs; one feature x batch
/// matrix per step.
std::vector<Matrix> decode(const ModelParams& params, const Matrix& latent, std::size_t steps,
                           DecoderCache* cache = nullptr);

/// Single-sample decode, T x feature.
Sequence decode_sequence(const ModelParams& params, const Vector& latent, std::size_t steps);

/// Mean squared error over every step and coordinate.
double prediction_loss(const Matrix& predicted, const Matrix& target);

struct LossWeights {
  double pred = 1.0;
  double cls = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  double pred = 0.0;  // mean L_PRED over the batch
  double cls = 0.0;   // mean L_CLASS over labeled columns
  std::size_t labeled = 0;
};

/// Forward pass plus exact backpropagation through time.
/// labels[b] is a class index or -1 for unlabeled columns (may be empty:
/// all unlabeled). When `grads` is non-null it is overwritten with the
/// gradient of `total` for every tensor, frozen ones included.
LossBreakdown loss_and_gradients(const ModelParams& params, const ModelConfig& config, const SequenceBatch& batch,
                                 std::span<const int> labels, const LossWeights& weights, ModelParams* grads);

struct AdamState {
  std::uint64_t step = 0;
  ModelParams m, v;

  static AdamState zeros(const ModelConfig& config);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// In-place bias-corrected Adam update of one tensor; `step` is the 1-based step number.
void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, std::uint64_t step, double lr,
                 const AdamOptions& options);

/// Updates every trainable tensor and increments the step counter.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               const ModelConfig& config);

/// Rescales trainable gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_gradients(ModelParams& grads, const ModelConfig& config, double max_norm);

struct EpochStats {
  double loss = 0.0;  // sample-weighted mean of batch totals
  double pred = 0.0;
  double cls = 0.0;
  std::size_t steps = 0;
};

/// Owns the single mutable copy of the parameters, the optimizer state and
/// the shuffling generator.
class Trainer {
 public:
  explicit Trainer(const ModelConfig& config);
  Trainer(const ModelConfig& config, ModelParams params, std::uint64_t seed);
  Trainer(ModelConfig config, ModelParams params, AdamState adam, Rng rng, std::size_t epoch);

  /// One pass over `data` in shuffled mini-batches. labels aligned with data
  /// (-1 for unlabeled) or empty. Throws NumericError on a non-finite loss.
  EpochStats run_epoch(std::span<const Sequence> data, std::span<const int> labels, const LossWeights& weights);

  void reset_optimizer();
  double current_learning_rate() const { return config_.learning_rate_at(epoch_); }

  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  ModelParams& mutable_params() { return params_; }
  const AdamState& optimizer() const { return adam_; }
  const Rng& rng() const { return rng_; }
  std::size_t epoch() const { return epoch_; }

  friend bool operator==(const Trainer&, const Trainer&) = default;

 private:
  ModelConfig config_;
  ModelParams params_;
  AdamState adam_;
  Rng rng_;
  std::size_t epoch_ = 0;
};

/// Mini-batch Adam on L_PRED only. Returns the per-epoch mean loss.
std::vector<double> train_autoregression(Trainer& trainer, std::span<const Sequence> data, std::size_t epochs);

}  // namespace ic

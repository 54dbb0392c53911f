#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ic/classifier.hpp"
#include "ic/keypoints.hpp"
#include "ic/selection.hpp"

namespace ic {

/// Sequences ready for the model plus their ids and known labels (-1 when
/// unknown or hidden).
struct Pool {
  std::vector<std::string> ids;
  std::vector<Sequence> sequences;
  std::vector<int> labels;

  std::size_t size() const { return ids.size(); }
};

/// Resamples to seq_len when needed and flattens each sample.
Pool make_pool(const Dataset& dataset, std::span<const std::size_t> indices, std::size_t seq_len);

struct LoopConfig {
  StrategyKind strategy = StrategyKind::KR;
  double per = 0.05;
  std::size_t iterations = 5;       // Niter
  std::size_t epochs_per_iter = 50;  // Nepoches
  std::size_t clusters = 4;          // M
  std::size_t cap = 0;               // 0 means 2 * clusters
  std::size_t label_budget = 0;      // 0 means unlimited
  LossWeights weights = kCombinedWeights;
  ClusterMetric metric = ClusterMetric::Euclidean;
  bool reset_optimizer = false;
  std::uint64_t seed = 0;

  std::size_t effective_cap() const { return cap > 0 ? cap : 2 * clusters; }
  void validate() const;
};

void to_json(nlohmann::json& j, const LoopConfig& c);
void from_json(const nlohmann::json& j, LoopConfig& c);

struct IterationRecord {
  std::size_t iteration = 0;
  std::vector<std::string> selected_ids;
  std::size_t labeled_count = 0;
  double labeled_fraction = 0.0;
  std::optional<double> test_accuracy;
  double train_loss = 0.0;  // final fine-tuning epoch

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

void to_json(nlohmann::json& j, const IterationRecord& r);
void from_json(const nlohmann::json& j, IterationRecord& r);

/// Iterative label selection as an explicit state machine:
/// propose() recomputes latents, uncertainty, entropy and clusters from the
/// current model and picks the next query set; commit() records the labels
/// for that set and fine-tunes with the combined loss for epochs_per_iter.
class ActiveLoop {
 public:
  ActiveLoop(Pool train, Pool test, Trainer trainer, LoopConfig config);

  bool finished() const;
  bool has_pending() const { return has_pending_; }

  /// Pool indices of the open query set; computes it on first call and
  /// returns the same set until commit(). Empty when finished.
  const std::vector<std::size_t>& propose();
  std::vector<std::string> pending_ids() const;
  const std::vector<std::size_t>& pending() const { return pending_; }

  /// labels aligned with the pending set. Throws std::invalid_argument (and
  /// changes nothing) on a size mismatch or an out-of-range class.
  void commit(std::span<const int> labels);

  const Trainer& trainer() const { return trainer_; }
  const LoopConfig& config() const { return config_; }
  const Pool& train_pool() const { return train_; }
  const Pool& test_pool() const { return test_; }
  const std::vector<IterationRecord>& history() const { return history_; }
  /// Assigned class per pool index (-1 while unlabeled).
  const std::vector<int>& assigned_labels() const { return assigned_; }
  std::size_t labeled_count() const { return labeled_order_.size(); }
  const std::vector<std::size_t>& labeled_order() const { return labeled_order_; }
  std::size_t iteration() const { return iteration_; }
  /// State behind the last proposal (empty before the first).
  const std::optional<SelectionState>& selection_state() const { return state_; }
  const Matrix& latents() const { return latents_; }

  /// Test accuracy of the current model in percent, nullopt without a test pool.
  std::optional<double> evaluate() const;

  /// Everything except the trainer, which is checkpointed separately.
  nlohmann::json save_state() const;
  static ActiveLoop restore(Pool train, Pool test, Trainer trainer, const nlohmann::json& state);

 private:
  void refresh_state();

  Pool train_;
  Pool test_;
  Trainer trainer_;
  LoopConfig config_;
  Rng rng_;
  std::vector<int> assigned_;
  std::vector<std::size_t> labeled_order_;
  std::vector<std::size_t> pending_;
  bool has_pending_ = false;
  std::size_t iteration_ = 0;
  std::vector<IterationRecord> history_;
  std::optional<SelectionState> state_;
  Matrix latents_;
};

/// Label source: returns one class index per requested id, or throws.
using Oracle = std::function<std::vector<int>(std::span<const std::string> ids)>;

/// Drives the loop to completion. An oracle exception propagates with the
/// open selection left uncommitted.
void run_active_loop(ActiveLoop& loop, const Oracle& oracle);

/// Oracle answering from the pool's known labels.
Oracle pool_oracle(const Pool& pool);

}  // namespace ic

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ic/active_loop.hpp"

namespace ic {

enum class DistanceMetric { Cosine, Euclidean };

/// Majority vote among the k nearest columns of `train`. Ties between
/// classes go to the class of the nearest tied neighbour, then the lowest
/// class index. Neighbours are ordered by (distance, column index).
int knn_classify(const Matrix& train, std::span<const int> train_labels, const Vector& query, std::size_t k = 1,
                 DistanceMetric metric = DistanceMetric::Cosine);

/// 100 * correct / total. Throws on empty or mismatched input.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Comparison methods: KNN on raw features, PC (pretrained latents + KNN),
/// C and C-EP (classifier trained on L_CLASS only), IC (joint strategy from
/// scratch) and the IC-* variants built on the pretrained auto-encoder.
enum class Method { KNN, PC, C, C_EP, IC, IC_PB, IC_EP, IC_KR, IC_KT, IC_KEP, IC_KPB };

std::string to_string(Method method);
std::optional<Method> parse_method(std::string_view name);

struct SimulationConfig {
  ModelConfig model;                 // num_classes and input_dim must match the data
  std::size_t pretrain_epochs = 100;
  std::size_t epochs_per_iter = 50;
  std::size_t clusters = 0;  // 0 means the class count
  double per = 0.05;
  std::size_t knn_k = 1;
  DistanceMetric knn_metric = DistanceMetric::Cosine;
  ClusterMetric cluster_metric = ClusterMetric::Euclidean;

  std::size_t cluster_count() const {
    return clusters > 0 ? clusters : static_cast<std::size_t>(model.num_classes);
  }
};

void to_json(nlohmann::json& j, const SimulationConfig& c);
void from_json(const nlohmann::json& j, SimulationConfig& c);

/// Auto-regression pretraining shared by every IC-* / PC cell with the same
/// seed. Thread-safe.
class PretrainCache {
 public:
  const ModelParams& get(const Pool& train, const SimulationConfig& config, std::uint64_t seed);

 private:
  std::mutex mutex_;
  std::map<std::uint64_t, ModelParams> params_;
};

/// Model config for one seeded cell.
ModelConfig seeded_model(const SimulationConfig& config, std::uint64_t seed);
/// Pretrains from Trainer(seeded_model(config, seed)).
ModelParams pretrain(const Pool& train, const SimulationConfig& config, std::uint64_t seed);

/// Builds the loop a method uses at a given label budget (count of labels).
ActiveLoop make_method_loop(Method method, const Pool& train, const Pool& test, const SimulationConfig& config,
                            std::size_t label_budget, std::uint64_t seed, PretrainCache* cache);

/// Number of labels a budget fraction buys on a pool of n samples.
std::size_t budget_count(double budget, std::size_t n);

struct CellResult {
  double accuracy = 0.0;       // last iteration
  double best_accuracy = 0.0;  // best across iterations
  std::vector<IterationRecord> history;
};

/// One (method, budget, seed) simulation with labels supplied by the pool.
CellResult run_cell(Method method, const Pool& train, const Pool& test, const SimulationConfig& config,
                    double budget, std::uint64_t seed, PretrainCache* cache = nullptr);

struct CurvePoint {
  double budget = 0.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double best_accuracy = 0.0;  // seed mean of per-run best
  std::vector<double> per_seed;
};

struct BudgetCurve {
  std::string method;
  std::vector<CurvePoint> points;  // strictly increasing budgets
  std::vector<std::uint64_t> seeds;
};

/// Receives every finished (budget, seed) cell.
using CellObserver = std::function<void(double budget, std::uint64_t seed, const CellResult& cell)>;

/// Averages run_cell over seeds for each budget. Budgets must lie in (0, 1]
/// and are sorted; duplicates are rejected.
BudgetCurve simulate_with_oracle(Method method, const Pool& train, const Pool& test, const SimulationConfig& config,
                                 std::vector<double> budgets, std::span<const std::uint64_t> seeds,
                                 PretrainCache* cache = nullptr, const CellObserver& on_cell = {});

/// Smallest budget whose mean accuracy reaches target, nullopt if none does.
std::optional<double> labels_to_reach(const BudgetCurve& curve, double target_accuracy);

/// Header "method,budget,mean_acc,std_acc", one row per curve point.
void write_curves_csv(std::ostream& out, std::span<const BudgetCurve> curves);
std::vector<BudgetCurve> read_curves_csv(std::istream& in);

/// Static line chart of accuracy against labeled fraction.
std::string render_svg(std::span<const BudgetCurve> curves);

}  // namespace ic

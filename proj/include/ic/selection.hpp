#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ic/kmeans.hpp"

namespace ic {

/// The six query strategies. Random is the uniform baseline used by the
/// C / IC / KNN / PC comparison methods and is not a K-strategy.
enum class StrategyKind { PB, EP, KR, KT, KEP, KPB, Random };

std::string to_string(StrategyKind kind);
/// Accepts "pb", "ep", "kr", "kt", "kep", "kpb", "random" (any case).
std::optional<StrategyKind> parse_strategy(std::string_view name);
bool is_cluster_strategy(StrategyKind kind);

/// Max class probability per column of a classes x count matrix.
std::vector<double> uncertainty_vector(const Matrix& probs);
/// Natural-log entropy with 0 log 0 = 0.
double entropy(const Vector& probs);
std::vector<double> entropy_vector(const Matrix& probs);

struct SelectionState {
  std::vector<std::string> ids;
  std::vector<char> labeled;  // mask aligned with ids
  std::vector<double> uncertainty;
  std::vector<double> entropy;
  Clustering clustering;
  std::size_t iteration = 0;

  std::size_t size() const { return ids.size(); }
  std::size_t unlabeled_count() const;
};

/// Number of picks a cluster (or the whole pool) of `population` samples asks for.
std::size_t samples_for(double per, std::size_t population);

/// Ranked pool indices for one query round. Labeled samples are never
/// candidates; the result has no duplicates and at most `cap` entries.
/// K-strategies rank inside each cluster and interleave the clusters round
/// robin, so truncation keeps every cluster represented. Ties break on
/// ascending sample id. `seed` drives KR and Random.
std::vector<std::size_t> select_indices(StrategyKind kind, const SelectionState& state, double per,
                                        std::size_t cap, std::uint64_t seed);

std::vector<std::string> select(StrategyKind kind, const SelectionState& state, double per, std::size_t cap,
                                std::uint64_t seed);

}  // namespace ic

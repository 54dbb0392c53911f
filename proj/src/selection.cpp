#include "ic/selection.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "ic/rng.hpp"

namespace ic {

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::PB: return "pb";
    case StrategyKind::EP: return "ep";
    case StrategyKind::KR: return "kr";
    case StrategyKind::KT: return "kt";
    case StrategyKind::KEP: return "kep";
    case StrategyKind::KPB: return "kpb";
    case StrategyKind::Random: return "random";
  }
  return "?";
}

std::optional<StrategyKind> parse_strategy(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (StrategyKind k : {StrategyKind::PB, StrategyKind::EP, StrategyKind::KR, StrategyKind::KT, StrategyKind::KEP,
                         StrategyKind::KPB, StrategyKind::Random})
    if (to_string(k) == lower) return k;
  return std::nullopt;
}

bool is_cluster_strategy(StrategyKind kind) {
  return kind == StrategyKind::KR || kind == StrategyKind::KT || kind == StrategyKind::KEP ||
         kind == StrategyKind::KPB;
}

std::vector<double> uncertainty_vector(const Matrix& probs) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(probs.cols()));
  for (Index c = 0; c < probs.cols(); ++c) out.push_back(probs.col(c).maxCoeff());
  return out;
}

double entropy(const Vector& probs) {
  double h = 0.0;
  for (Index i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
  return std::max(h, 0.0);
}

std::vector<double> entropy_vector(const Matrix& probs) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(probs.cols()));
  for (Index c = 0; c < probs.cols(); ++c) out.push_back(entropy(probs.col(c)));
  return out;
}

std::size_t SelectionState::unlabeled_count() const {
  return static_cast<std::size_t>(std::count(labeled.begin(), labeled.end(), 0));
}

std::size_t samples_for(double per, std::size_t population) {
  if (!(per > 0.0) || population == 0) return 0;
  const double raw = std::ceil(per * static_cast<double>(population) - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(raw));
}

namespace {

/// Orders candidates by `key` (ascending) with ascending id as tie-break.
template <class Key>
void rank_by(std::vector<std::size_t>& items, const SelectionState& s, Key key) {
  std::sort(items.begin(), items.end(), [&](std::size_t a, std::size_t b) {
    const double ka = key(a), kb = key(b);
    if (ka != kb) return ka < kb;
    return s.ids[a] < s.ids[b];
  });
}

void rank(StrategyKind kind, std::vector<std::size_t>& items, const SelectionState& s, Rng& rng) {
  switch (kind) {
    case StrategyKind::PB:
    case StrategyKind::KPB:
      rank_by(items, s, [&](std::size_t i) { return s.uncertainty[i]; });
      break;
    case StrategyKind::EP:
    case StrategyKind::KEP:
      rank_by(items, s, [&](std::size_t i) { return -s.entropy[i]; });
      break;
    case StrategyKind::KT:
      rank_by(items, s, [&](std::size_t i) { return s.clustering.distances[i]; });
      break;
    case StrategyKind::KR:
    case StrategyKind::Random:
      std::sort(items.begin(), items.end(), [&](std::size_t a, std::size_t b) { return s.ids[a] < s.ids[b]; });
      rng.shuffle(items);
      break;
  }
}

}  // namespace

std::vector<std::size_t> select_indices(StrategyKind kind, const SelectionState& state, double per, std::size_t cap,
                                        std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> out;
  if (cap == 0) return out;

  if (!is_cluster_strategy(kind)) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < state.size(); ++i)
      if (!state.labeled[i]) pool.push_back(i);
    rank(kind, pool, state, rng);
    const std::size_t take = std::min({pool.size(), samples_for(per, state.size()), cap});
    out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    return out;
  }

  const std::size_t clusters = state.clustering.cluster_count();
  std::vector<std::vector<std::size_t>> members(clusters);
  std::vector<std::size_t> population(clusters, 0);
  for (std::size_t i = 0; i < state.size(); ++i) {
    const std::size_t c = state.clustering.assignments[i];
    ++population[c];
    if (!state.labeled[i]) members[c].push_back(i);
  }
  std::size_t rounds = 0;
  for (std::size_t c = 0; c < clusters; ++c) {
    rank(kind, members[c], state, rng);
    members[c].resize(std::min(members[c].size(), samples_for(per, population[c])));
    rounds = std::max(rounds, members[c].size());
  }
  for (std::size_t r = 0; r < rounds && out.size() < cap; ++r)
    for (std::size_t c = 0; c < clusters && out.size() < cap; ++c)
      if (r < members[c].size()) out.push_back(members[c][r]);
  return out;
}

std::vector<std::string> select(StrategyKind kind, const SelectionState& state, double per, std::size_t cap,
                                std::uint64_t seed) {
  std::vector<std::string> ids;
  for (std::size_t i : select_indices(kind, state, per, cap, seed)) ids.push_back(state.ids[i]);
  return ids;
}

}  // namespace ic

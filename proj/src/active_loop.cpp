#include "ic/active_loop.hpp"

#include <algorithm>
#include <stdexcept>

namespace ic {

using nlohmann::json;

Pool make_pool(const Dataset& dataset, std::span<const std::size_t> indices, std::size_t seq_len) {
  Pool pool;
  const std::vector<int> labels = dataset.label_indices();
  for (std::size_t i : indices) {
    const Sample& s = dataset.samples.at(i);
    pool.ids.push_back(s.id);
    pool.sequences.push_back(to_sequence(s.frames == seq_len ? s : resample_length(s, seq_len)));
    pool.labels.push_back(labels[i]);
  }
  return pool;
}

void LoopConfig::validate() const {
  if (!(per > 0.0 && per <= 1.0)) throw std::invalid_argument("loop config: per must lie in (0, 1]");
  if (clusters < 1) throw std::invalid_argument("loop config: clusters must be >= 1");
}

void to_json(json& j, const LoopConfig& c) {
  j = json{{"strategy", to_string(c.strategy)},
           {"per", c.per},
           {"iterations", c.iterations},
           {"epochs_per_iter", c.epochs_per_iter},
           {"clusters", c.clusters},
           {"cap", c.cap},
           {"label_budget", c.label_budget},
           {"pred_weight", c.weights.pred},
           {"class_weight", c.weights.cls},
           {"metric", c.metric == ClusterMetric::Cosine ? "cosine" : "euclidean"},
           {"reset_optimizer", c.reset_optimizer},
           {"seed", c.seed}};
}

void from_json(const json& j, LoopConfig& c) {
  LoopConfig d;
  const auto strategy = parse_strategy(j.value("strategy", to_string(d.strategy)));
  if (!strategy) throw std::invalid_argument("loop config: unknown strategy");
  c.strategy = *strategy;
  c.per = j.value("per", d.per);
  c.iterations = j.value("iterations", d.iterations);
  c.epochs_per_iter = j.value("epochs_per_iter", d.epochs_per_iter);
  c.clusters = j.value("clusters", d.clusters);
  c.cap = j.value("cap", d.cap);
  c.label_budget = j.value("label_budget", d.label_budget);
  c.weights.pred = j.value("pred_weight", d.weights.pred);
  c.weights.cls = j.value("class_weight", d.weights.cls);
  c.metric = j.value("metric", std::string("euclidean")) == "cosine" ? ClusterMetric::Cosine : ClusterMetric::Euclidean;
  c.reset_optimizer = j.value("reset_optimizer", d.reset_optimizer);
  c.seed = j.value("seed", d.seed);
}

void to_json(json& j, const IterationRecord& r) {
  j = json{{"iteration", r.iteration},
           {"selected_ids", r.selected_ids},
           {"labeled_count", r.labeled_count},
           {"labeled_fraction", r.labeled_fraction},
           {"test_accuracy", r.test_accuracy ? json(*r.test_accuracy) : json(nullptr)},
           {"train_loss", r.train_loss}};
}

void from_json(const json& j, IterationRecord& r) {
  r.iteration = j.at("iteration").get<std::size_t>();
  r.selected_ids = j.at("selected_ids").get<std::vector<std::string>>();
  r.labeled_count = j.at("labeled_count").get<std::size_t>();
  r.labeled_fraction = j.at("labeled_fraction").get<double>();
  const json& acc = j.at("test_accuracy");
  r.test_accuracy = acc.is_null() ? std::nullopt : std::optional<double>(acc.get<double>());
  r.train_loss = j.value("train_loss", 0.0);
}

ActiveLoop::ActiveLoop(Pool train, Pool test, Trainer trainer, LoopConfig config)
    : train_(std::move(train)),
      test_(std::move(test)),
      trainer_(std::move(trainer)),
      config_(config),
      rng_(config.seed),
      assigned_(train_.size(), -1) {
  config_.validate();
  if (trainer_.config().num_classes < 1) throw std::invalid_argument("active loop: model needs a classifier head");
  if (config_.clusters > train_.size() && train_.size() > 0)
    throw std::invalid_argument("active loop: more clusters than training samples");
}

bool ActiveLoop::finished() const {
  if (has_pending_) return false;
  if (iteration_ >= config_.iterations) return true;
  if (labeled_order_.size() >= train_.size()) return true;
  return config_.label_budget > 0 && labeled_order_.size() >= config_.label_budget;
}

void ActiveLoop::refresh_state() {
  const ModelParams& params = trainer_.params();
  latents_ = encode_latents(params, train_.sequences);
  const Matrix probs = classify_batch(params, latents_);
  SelectionState s;
  s.ids = train_.ids;
  s.labeled.assign(train_.size(), 0);
  for (std::size_t i : labeled_order_) s.labeled[i] = 1;
  s.uncertainty = uncertainty_vector(probs);
  s.entropy = entropy_vector(probs);
  KMeansOptions km;
  km.metric = config_.metric;
  s.clustering = cluster_latents(latents_, config_.clusters, rng_.next(), km);
  s.iteration = iteration_;
  state_ = std::move(s);
}

const std::vector<std::size_t>& ActiveLoop::propose() {
  if (has_pending_ || finished()) return pending_;
  refresh_state();
  std::size_t cap = config_.effective_cap();
  if (config_.label_budget > 0) cap = std::min(cap, config_.label_budget - labeled_order_.size());
  pending_ = select_indices(config_.strategy, *state_, config_.per, cap, rng_.next());
  has_pending_ = !pending_.empty();
  return pending_;
}

std::vector<std::string> ActiveLoop::pending_ids() const {
  std::vector<std::string> ids;
  if (!has_pending_) return ids;
  for (std::size_t i : pending_) ids.push_back(train_.ids[i]);
  return ids;
}

void ActiveLoop::commit(std::span<const int> labels) {
  if (!has_pending_) throw std::logic_error("commit: no open query set");
  if (labels.size() != pending_.size()) throw std::invalid_argument("commit: label count does not match query set");
  const int classes = trainer_.config().num_classes;
  for (int y : labels)
    if (y < 0 || y >= classes) throw std::invalid_argument("commit: class index " + std::to_string(y) + " out of range");

  IterationRecord record;
  record.iteration = iteration_;
  for (std::size_t k = 0; k < pending_.size(); ++k) {
    assigned_[pending_[k]] = labels[k];
    labeled_order_.push_back(pending_[k]);
    record.selected_ids.push_back(train_.ids[pending_[k]]);
  }
  pending_.clear();
  has_pending_ = false;

  if (config_.reset_optimizer) trainer_.reset_optimizer();
  for (std::size_t e = 0; e < config_.epochs_per_iter; ++e)
    record.train_loss = trainer_.run_epoch(train_.sequences, assigned_, config_.weights).loss;

  record.labeled_count = labeled_order_.size();
  record.labeled_fraction =
      static_cast<double>(labeled_order_.size()) / static_cast<double>(std::max<std::size_t>(1, train_.size()));
  record.test_accuracy = evaluate();
  history_.push_back(std::move(record));
  ++iteration_;
}

std::optional<double> ActiveLoop::evaluate() const {
  if (test_.size() == 0) return std::nullopt;
  if (std::any_of(test_.labels.begin(), test_.labels.end(), [](int y) { return y < 0; })) return std::nullopt;
  const std::vector<int> predicted = predict(trainer_.params(), test_.sequences);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == test_.labels[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(predicted.size());
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<Index>(), j.at("cols").get<Index>());
  const json& data = j.at("data");
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = data[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

}  // namespace

json ActiveLoop::save_state() const {
  json j;
  j["config"] = config_;
  j["rng"] = rng_.serialize();
  j["assigned"] = assigned_;
  j["labeled_order"] = labeled_order_;
  j["pending"] = pending_;
  j["has_pending"] = has_pending_;
  j["iteration"] = iteration_;
  j["history"] = history_;
  if (state_) {
    json s;
    s["labeled"] = state_->labeled;
    s["uncertainty"] = state_->uncertainty;
    s["entropy"] = state_->entropy;
    s["assignments"] = state_->clustering.assignments;
    s["centers"] = matrix_json(state_->clustering.centers);
    s["distances"] = state_->clustering.distances;
    s["inertia"] = state_->clustering.inertia;
    s["inertia_trace"] = state_->clustering.inertia_trace;
    s["iteration"] = state_->iteration;
    s["latents"] = matrix_json(latents_);
    j["selection"] = std::move(s);
  }
  return j;
}

ActiveLoop ActiveLoop::restore(Pool train, Pool test, Trainer trainer, const json& j) {
  ActiveLoop loop(std::move(train), std::move(test), std::move(trainer), j.at("config").get<LoopConfig>());
  loop.rng_ = Rng::deserialize(j.at("rng").get<std::string>());
  loop.assigned_ = j.at("assigned").get<std::vector<int>>();
  loop.labeled_order_ = j.at("labeled_order").get<std::vector<std::size_t>>();
  loop.pending_ = j.at("pending").get<std::vector<std::size_t>>();
  loop.has_pending_ = j.at("has_pending").get<bool>();
  loop.iteration_ = j.at("iteration").get<std::size_t>();
  loop.history_ = j.at("history").get<std::vector<IterationRecord>>();
  if (loop.assigned_.size() != loop.train_.size())
    throw std::invalid_argument("restore: saved loop does not match the training pool");
  if (j.contains("selection")) {
    const json& s = j["selection"];
    SelectionState state;
    state.ids = loop.train_.ids;
    state.labeled = s.at("labeled").get<std::vector<char>>();
    state.uncertainty = s.at("uncertainty").get<std::vector<double>>();
    state.entropy = s.at("entropy").get<std::vector<double>>();
    state.clustering.assignments = s.at("assignments").get<std::vector<std::size_t>>();
    state.clustering.centers = matrix_from_json(s.at("centers"));
    state.clustering.distances = s.at("distances").get<std::vector<double>>();
    state.clustering.inertia = s.at("inertia").get<double>();
    state.clustering.inertia_trace = s.at("inertia_trace").get<std::vector<double>>();
    state.iteration = s.at("iteration").get<std::size_t>();
    loop.latents_ = matrix_from_json(s.at("latents"));
    loop.state_ = std::move(state);
  }
  return loop;
}

void run_active_loop(ActiveLoop& loop, const Oracle& oracle) {
  while (!loop.finished()) {
    loop.propose();
    if (!loop.has_pending()) break;
    const std::vector<std::string> ids = loop.pending_ids();
    const std::vector<int> labels = oracle(ids);
    loop.commit(labels);
  }
}

Oracle pool_oracle(const Pool& pool) {
  return [&pool](std::span<const std::string> ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
      auto it = std::find(pool.ids.begin(), pool.ids.end(), id);
      if (it == pool.ids.end()) throw std::out_of_range("oracle: unknown sample '" + id + "'");
      const int y = pool.labels[static_cast<std::size_t>(it - pool.ids.begin())];
      if (y < 0) throw std::out_of_range("oracle: no label for sample '" + id + "'");
      out.push_back(y);
    }
    return out;
  };
}

}  // namespace ic

#include "ic/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ic {

using nlohmann::json;

int knn_classify(const Matrix& train, std::span<const int> train_labels, const Vector& query, std::size_t k,
                 DistanceMetric metric) {
  const auto n = static_cast<std::size_t>(train.cols());
  if (n == 0) throw std::invalid_argument("knn_classify: empty labeled set");
  if (train_labels.size() != n) throw std::invalid_argument("knn_classify: labels do not match points");
  if (k < 1 || k > n) throw std::invalid_argument("knn_classify: k must lie in [1, labeled count]");
  if (query.size() != train.rows()) throw ShapeError("knn_classify: query dimension mismatch");

  std::vector<std::pair<double, std::size_t>> dist(n);
  const double qnorm = query.norm();
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = train.col(static_cast<Index>(i));
    double d;
    if (metric == DistanceMetric::Cosine) {
      const double denom = col.norm() * qnorm;
      d = 1.0 - (denom > 0.0 ? col.dot(query) / denom : 0.0);
    } else {
      d = (col - query).norm();
    }
    dist[i] = {d, i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

  std::map<int, std::size_t> votes;
  for (std::size_t j = 0; j < k; ++j) ++votes[train_labels[dist[j].second]];
  std::size_t top = 0;
  for (const auto& [cls, count] : votes) top = std::max(top, count);
  // Nearest neighbour among the tied classes wins.
  for (std::size_t j = 0; j < k; ++j) {
    const int cls = train_labels[dist[j].second];
    if (votes[cls] == top) return cls;
  }
  return votes.begin()->first;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.empty()) throw std::invalid_argument("accuracy: empty input");
  if (predicted.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == truth[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(predicted.size());
}

namespace {

constexpr std::pair<Method, const char*> kMethodNames[] = {
    {Method::KNN, "KNN"},     {Method::PC, "PC"},         {Method::C, "C"},
    {Method::C_EP, "C-EP"},   {Method::IC, "IC"},         {Method::IC_PB, "IC-PB"},
    {Method::IC_EP, "IC-EP"}, {Method::IC_KR, "IC-KR"},   {Method::IC_KT, "IC-KT"},
    {Method::IC_KEP, "IC-KEP"}, {Method::IC_KPB, "IC-KPB"},
};

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

bool uses_pretraining(Method m) { return m != Method::KNN && m != Method::C && m != Method::C_EP && m != Method::IC; }

StrategyKind method_strategy(Method m) {
  switch (m) {
    case Method::C_EP:
    case Method::IC_EP: return StrategyKind::EP;
    case Method::IC_PB: return StrategyKind::PB;
    case Method::IC_KR: return StrategyKind::KR;
    case Method::IC_KT: return StrategyKind::KT;
    case Method::IC_KEP: return StrategyKind::KEP;
    case Method::IC_KPB: return StrategyKind::KPB;
    default: return StrategyKind::Random;
  }
}

Matrix raw_features(std::span<const Sequence> sequences) {
  if (sequences.empty()) return {};
  Matrix out(sequences.front().size(), static_cast<Index>(sequences.size()));
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const Sequence& s = sequences[i];
    for (Index t = 0; t < s.rows(); ++t)
      out.col(static_cast<Index>(i)).segment(t * s.cols(), s.cols()) = s.row(t).transpose();
  }
  return out;
}

}  // namespace

std::string to_string(Method method) {
  for (const auto& [m, name] : kMethodNames)
    if (m == method) return name;
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  const std::string key = upper(name);
  for (const auto& [m, label] : kMethodNames)
    if (key == label) return m;
  return std::nullopt;
}

void to_json(json& j, const SimulationConfig& c) {
  j = json{{"model", c.model},
           {"pretrain_epochs", c.pretrain_epochs},
           {"epochs_per_iter", c.epochs_per_iter},
           {"clusters", c.clusters},
           {"per", c.per},
           {"knn_k", c.knn_k},
           {"knn_metric", c.knn_metric == DistanceMetric::Cosine ? "cosine" : "euclidean"},
           {"cluster_metric", c.cluster_metric == ClusterMetric::Cosine ? "cosine" : "euclidean"}};
}

void from_json(const json& j, SimulationConfig& c) {
  SimulationConfig d;
  c.model = j.contains("model") ? j["model"].get<ModelConfig>() : d.model;
  c.pretrain_epochs = j.value("pretrain_epochs", d.pretrain_epochs);
  c.epochs_per_iter = j.value("epochs_per_iter", d.epochs_per_iter);
  c.clusters = j.value("clusters", d.clusters);
  c.per = j.value("per", d.per);
  c.knn_k = j.value("knn_k", d.knn_k);
  c.knn_metric = j.value("knn_metric", std::string("cosine")) == "euclidean" ? DistanceMetric::Euclidean
                                                                             : DistanceMetric::Cosine;
  c.cluster_metric = j.value("cluster_metric", std::string("euclidean")) == "cosine" ? ClusterMetric::Cosine
                                                                                    : ClusterMetric::Euclidean;
}

ModelConfig seeded_model(const SimulationConfig& config, std::uint64_t seed) {
  ModelConfig m = config.model;
  m.seed = seed;
  return m;
}

ModelParams pretrain(const Pool& train, const SimulationConfig& config, std::uint64_t seed) {
  Trainer trainer(seeded_model(config, seed));
  train_autoregression(trainer, train.sequences, config.pretrain_epochs);
  return trainer.params();
}

const ModelParams& PretrainCache::get(const Pool& train, const SimulationConfig& config, std::uint64_t seed) {
  std::lock_guard lock(mutex_);
  auto it = params_.find(seed);
  if (it == params_.end()) it = params_.emplace(seed, pretrain(train, config, seed)).first;
  return it->second;
}

std::size_t budget_count(double budget, std::size_t n) {
  if (!(budget > 0.0 && budget <= 1.0)) throw std::invalid_argument("budget must lie in (0, 1]");
  const auto raw = static_cast<std::size_t>(std::ceil(budget * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(raw, std::min<std::size_t>(1, n), n);
}

ActiveLoop make_method_loop(Method method, const Pool& train, const Pool& test, const SimulationConfig& config,
                            std::size_t label_budget, std::uint64_t seed, PretrainCache* cache) {
  if (method == Method::KNN || method == Method::PC)
    throw std::invalid_argument("make_method_loop: " + to_string(method) + " has no training loop");
  LoopConfig loop;
  loop.strategy = method_strategy(method);
  loop.per = config.per;
  loop.iterations = train.size();
  loop.epochs_per_iter = config.epochs_per_iter;
  loop.clusters = config.cluster_count();
  loop.label_budget = label_budget;
  loop.metric = config.cluster_metric;
  loop.seed = seed;
  if (method == Method::C || method == Method::C_EP) loop.weights = LossWeights{0.0, 1.0};

  const ModelConfig model = seeded_model(config, seed);
  if (!uses_pretraining(method)) return ActiveLoop(train, test, Trainer(model), loop);
  ModelParams pretrained = cache ? cache->get(train, config, seed) : pretrain(train, config, seed);
  // Same fine-tuning seed convention as train_strategy_ii.
  return ActiveLoop(train, test, Trainer(model, std::move(pretrained), model.seed + 1), loop);
}

CellResult run_cell(Method method, const Pool& train, const Pool& test, const SimulationConfig& config, double budget,
                    std::uint64_t seed, PretrainCache* cache) {
  const std::size_t count = budget_count(budget, train.size());
  CellResult result;

  if (method == Method::KNN || method == Method::PC) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    order.resize(count);
    std::sort(order.begin(), order.end());

    Matrix train_x, test_x;
    if (method == Method::KNN) {
      train_x = raw_features(train.sequences);
      test_x = raw_features(test.sequences);
    } else {
      const ModelParams& params = cache ? cache->get(train, config, seed) : pretrain(train, config, seed);
      train_x = encode_latents(params, train.sequences);
      test_x = encode_latents(params, test.sequences);
    }
    Matrix chosen(train_x.rows(), static_cast<Index>(count));
    std::vector<int> chosen_labels;
    for (std::size_t j = 0; j < count; ++j) {
      chosen.col(static_cast<Index>(j)) = train_x.col(static_cast<Index>(order[j]));
      chosen_labels.push_back(train.labels[order[j]]);
    }
    std::vector<int> predicted;
    const std::size_t k = std::min(config.knn_k, count);
    for (Index i = 0; i < test_x.cols(); ++i)
      predicted.push_back(knn_classify(chosen, chosen_labels, test_x.col(i), k, config.knn_metric));
    result.accuracy = accuracy(predicted, test.labels);
    result.best_accuracy = result.accuracy;
    IterationRecord record;
    for (std::size_t i : order) record.selected_ids.push_back(train.ids[i]);
    record.labeled_count = count;
    record.labeled_fraction = static_cast<double>(count) / static_cast<double>(train.size());
    record.test_accuracy = result.accuracy;
    result.history.push_back(std::move(record));
    return result;
  }

  ActiveLoop loop = make_method_loop(method, train, test, config, count, seed, cache);
  run_active_loop(loop, pool_oracle(train));
  result.history = loop.history();
  for (const IterationRecord& r : result.history)
    if (r.test_accuracy) result.best_accuracy = std::max(result.best_accuracy, *r.test_accuracy);
  result.accuracy = result.history.empty() ? loop.evaluate().value_or(0.0) : result.history.back().test_accuracy.value_or(0.0);
  return result;
}

BudgetCurve simulate_with_oracle(Method method, const Pool& train, const Pool& test, const SimulationConfig& config,
                                 std::vector<double> budgets, std::span<const std::uint64_t> seeds,
                                 PretrainCache* cache, const CellObserver& on_cell) {
  for (double b : budgets)
    if (!(b > 0.0 && b <= 1.0)) throw std::invalid_argument("simulate_with_oracle: budget " + std::to_string(b) + " outside (0, 1]");
  if (seeds.empty()) throw std::invalid_argument("simulate_with_oracle: at least one seed is required");
  std::sort(budgets.begin(), budgets.end());
  if (std::adjacent_find(budgets.begin(), budgets.end()) != budgets.end())
    throw std::invalid_argument("simulate_with_oracle: duplicate budgets");
  if (std::any_of(test.labels.begin(), test.labels.end(), [](int y) { return y < 0; }) || test.size() == 0)
    throw std::invalid_argument("simulate_with_oracle: test pool needs ground-truth labels");

  BudgetCurve curve;
  curve.method = to_string(method);
  curve.seeds.assign(seeds.begin(), seeds.end());
  for (double budget : budgets) {
    CurvePoint point;
    point.budget = budget;
    double best_sum = 0.0;
    for (std::uint64_t seed : seeds) {
      const CellResult cell = run_cell(method, train, test, config, budget, seed, cache);
      point.per_seed.push_back(cell.accuracy);
      best_sum += cell.best_accuracy;
      if (on_cell) on_cell(budget, seed, cell);
    }
    const auto n = static_cast<double>(point.per_seed.size());
    point.mean_accuracy = std::accumulate(point.per_seed.begin(), point.per_seed.end(), 0.0) / n;
    double var = 0.0;
    for (double a : point.per_seed) var += (a - point.mean_accuracy) * (a - point.mean_accuracy);
    point.std_accuracy = n > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    point.best_accuracy = best_sum / n;
    curve.points.push_back(std::move(point));
  }
  return curve;
}

std::optional<double> labels_to_reach(const BudgetCurve& curve, double target_accuracy) {
  for (const CurvePoint& p : curve.points)
    if (p.mean_accuracy >= target_accuracy) return p.budget;
  return std::nullopt;
}

void write_curves_csv(std::ostream& out, std::span<const BudgetCurve> curves) {
  out << "method,budget,mean_acc,std_acc\n";
  out << std::setprecision(17);
  for (const BudgetCurve& c : curves)
    for (const CurvePoint& p : c.points)
      out << c.method << ',' << p.budget << ',' << p.mean_accuracy << ',' << p.std_accuracy << '\n';
}

std::vector<BudgetCurve> read_curves_csv(std::istream& in) {
  std::vector<BudgetCurve> curves;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || (n == 1 && line.rfind("method,", 0) == 0)) continue;
    std::stringstream ss(line);
    std::string method, budget, mean, sd;
    if (!std::getline(ss, method, ',') || !std::getline(ss, budget, ',') || !std::getline(ss, mean, ',') ||
        !std::getline(ss, sd))
      throw std::runtime_error("curves csv: malformed line " + std::to_string(n));
    if (curves.empty() || curves.back().method != method) curves.push_back(BudgetCurve{method, {}, {}});
    CurvePoint p;
    p.budget = std::stod(budget);
    p.mean_accuracy = std::stod(mean);
    p.std_accuracy = std::stod(sd);
    curves.back().points.push_back(p);
  }
  return curves;
}

std::string render_svg(std::span<const BudgetCurve> curves) {
  constexpr double width = 640, height = 420, left = 60, right = 150, top = 30, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                  "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000"};
  auto sx = [&](double budget) { return left + budget * plot_w; };
  auto sy = [&](double acc) { return top + (1.0 - acc / 100.0) * plot_h; };

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int i = 0; i <= 10; ++i) {
    const double acc = 10.0 * i;
    svg << "<line x1=\"" << left << "\" y1=\"" << sy(acc) << "\" x2=\"" << left + plot_w << "\" y2=\"" << sy(acc)
        << "\" stroke=\"#eeeeee\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << sy(acc) + 4 << "\" text-anchor=\"end\">" << static_cast<int>(acc)
        << "</text>\n";
    const double b = 0.1 * i;
    svg << "<text x=\"" << sx(b) << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\">"
        << static_cast<int>(std::lround(b * 100)) << "</text>\n";
  }
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\">annotated labels (%)</text>\n";
  svg << "<text transform=\"translate(16," << top + plot_h / 2
      << ") rotate(-90)\" text-anchor=\"middle\">test accuracy (%)</text>\n";

  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = palette[c % std::size(palette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const CurvePoint& p : curves[c].points) svg << sx(p.budget) << ',' << sy(p.mean_accuracy) << ' ';
    svg << "\"/>\n";
    for (const CurvePoint& p : curves[c].points)
      svg << "<circle cx=\"" << sx(p.budget) << "\" cy=\"" << sy(p.mean_accuracy) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    const double ly = top + 16.0 * static_cast<double>(c) + 8;
    svg << "<line x1=\"" << left + plot_w + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 32 << "\" y2=\""
        << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + plot_w + 38 << "\" y=\"" << ly + 4 << "\">" << curves[c].method << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace ic

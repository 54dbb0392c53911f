// One PASS/FAIL line per acceptance criterion. Usage: acceptance [name...]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "ic/checkpoint.hpp"
#include "ic/classifier.hpp"
#include "ic/evaluation.hpp"
#include "ic/service.hpp"
#include "ic/synthetic.hpp"

using namespace ic;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kGradientTolerance = 1e-4;
constexpr double kGradientStep = 1e-5;
constexpr double kGradientFloor = 1e-7;  // denominator floor for near-zero gradients
constexpr double kGradientSeconds = 10.0;
constexpr double kConvergenceRatio = 0.1;
constexpr double kConvergenceSeconds = 60.0;
constexpr std::size_t kSelectionCases = 1000;
constexpr double kSelectionSeconds = 30.0;
constexpr double kKMeansSeconds = 10.0;
constexpr double kMarginOverC = 10.0;
constexpr double kDirectionalBudget = 0.10;
constexpr double kDirectionalSeconds = 15.0 * 60.0;
constexpr double kReachTarget = 90.0;
constexpr double kViewTolerance = 1e-6;
constexpr std::size_t kViewTransforms = 1000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------- gradients

Outcome gradient_oracle() {
  const auto start = Clock::now();
  ModelConfig c;
  c.seq_len = 4;
  c.input_dim = 4;  // N = 2 keypoints, D = 2
  c.encoder_hidden = 3;
  c.decoder_hidden = 6;
  c.num_classes = 3;
  c.seed = 21;
  Rng rng(c.seed);
  const ModelParams initial = ModelParams::initialize(c, rng);
  std::vector<Sequence> seqs;
  for (int i = 0; i < 3; ++i) {
    Sequence s(4, 4);
    for (Index k = 0; k < s.size(); ++k) s.data()[k] = rng.normal();
    seqs.push_back(s);
  }
  const SequenceBatch batch = make_batch(seqs);
  const std::vector<int> labels{0, 2, -1};

  double worst = 0.0;
  std::size_t checked = 0;
  const std::pair<const char*, LossWeights> losses[] = {
      {"pred", {1.0, 0.0}}, {"class", {0.0, 1.0}}, {"combined", kCombinedWeights}};
  std::string worst_loss;
  for (const auto& [name, weights] : losses) {
    ModelParams params = initial;
    ModelParams grads;
    loss_and_gradients(params, c, batch, labels, weights, &grads);
    auto p = tensors(params);
    auto g = tensors(grads);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!is_trainable(p[i].role, c)) continue;
      Matrix& value = *p[i].value;
      for (Index k = 0; k < value.size(); ++k) {
        const double saved = value.data()[k];
        value.data()[k] = saved + kGradientStep;
        const double up = loss_and_gradients(params, c, batch, labels, weights, nullptr).total;
        value.data()[k] = saved - kGradientStep;
        const double down = loss_and_gradients(params, c, batch, labels, weights, nullptr).total;
        value.data()[k] = saved;
        const double numeric = (up - down) / (2.0 * kGradientStep);
        const double analytic = g[i].value->data()[k];
        const double err =
            std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), kGradientFloor});
        if (err > worst) {
          worst = err;
          worst_loss = name;
        }
        ++checked;
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {worst < kGradientTolerance && elapsed < kGradientSeconds,
          std::to_string(checked) + " entries, max rel err " + fmt(worst) + " (" + worst_loss + ") < " +
              fmt(kGradientTolerance) + ", " + fmt(elapsed) + " s < " + fmt(kGradientSeconds) + " s"};
}

// -------------------------------------------------------------- convergence

Outcome autoregression_convergence() {
  const auto start = Clock::now();
  SyntheticOptions o;
  o.classes = 4;
  o.train_per_class = 2;
  o.test_per_class = 0;
  o.frames = 20;
  o.noise = 0.0;
  o.seed = 3;
  const Dataset ds = make_synthetic_dataset(o);
  const Pool pool = make_pool(ds, ds.split_or_all("train"), o.frames);

  ModelConfig c;
  c.input_dim = 4;
  c.seq_len = static_cast<int>(o.frames);
  c.encoder_hidden = 32;
  c.decoder_hidden = 64;
  c.learning_rate = 5e-3;
  c.batch_size = 8;
  c.decoder_gain = 5.0;
  c.seed = 1;
  Trainer trainer(c);
  const GruParams decoder_before = trainer.params().decoder;
  const std::vector<double> trace = train_autoregression(trainer, pool.sequences, 300);
  const bool frozen = trainer.params().decoder == decoder_before;
  const double ratio = trace.back() / trace.front();
  const double elapsed = seconds_since(start);
  return {pool.size() == 8 && ratio < kConvergenceRatio && frozen && elapsed < kConvergenceSeconds,
          "L_PRED " + fmt(trace.front()) + " -> " + fmt(trace.back()) + " (ratio " + fmt(ratio) + " < " +
              fmt(kConvergenceRatio) + "), decoder recurrence " + (frozen ? "bit-identical" : "CHANGED") + ", " +
              fmt(elapsed) + " s < " + fmt(kConvergenceSeconds) + " s"};
}

// ---------------------------------------------------------------- selection

Outcome selection_invariants() {
  const auto start = Clock::now();
  const StrategyKind kinds[] = {StrategyKind::PB, StrategyKind::EP,  StrategyKind::KR,
                                StrategyKind::KT, StrategyKind::KEP, StrategyKind::KPB};
  Rng rng(99);
  std::size_t violations = 0, coverage_checks = 0;
  std::string first_violation;
  auto violate = [&](const std::string& what) {
    if (violations++ == 0) first_violation = what;
  };
  for (std::size_t trial = 0; trial < kSelectionCases; ++trial) {
    const std::size_t n = 2 + rng.index(80);
    const std::size_t classes = 2 + rng.index(8);
    const std::size_t clusters = 1 + rng.index(std::min<std::size_t>(n, 6));
    Matrix latents(3, static_cast<Index>(n));
    for (Index i = 0; i < latents.size(); ++i) latents.data()[i] = rng.normal();
    Matrix logits(static_cast<Index>(classes), static_cast<Index>(n));
    for (Index i = 0; i < logits.size(); ++i) logits.data()[i] = 3.0 * rng.normal();
    const Matrix probs = softmax_columns(logits);

    SelectionState s;
    s.clustering = cluster_latents(latents, clusters, rng.next(), KMeansOptions{2, 50, ClusterMetric::Euclidean});
    s.uncertainty = uncertainty_vector(probs);
    s.entropy = entropy_vector(probs);
    const double labeled_rate = rng.uniform(0.0, 0.9);
    for (std::size_t i = 0; i < n; ++i) {
      s.ids.push_back("q" + std::to_string(rng.index(100000)) + "_" + std::to_string(i));
      s.labeled.push_back(rng.uniform() < labeled_rate ? 1 : 0);
    }
    for (double p : s.uncertainty)
      if (p < 1.0 / static_cast<double>(classes) - 1e-12 || p > 1.0 + 1e-12) violate("uncertainty bound");
    for (double h : s.entropy)
      if (h < 0.0 || h > std::log(static_cast<double>(classes)) + 1e-12) violate("entropy bound");

    const bool small = trial % 2 == 0;
    const double per = small ? rng.uniform(1e-4, 0.02) : rng.uniform(0.02, 1.0);
    const std::size_t cap = 2 * clusters;
    std::set<std::size_t> open_clusters;
    for (std::size_t i = 0; i < n; ++i)
      if (!s.labeled[i]) open_clusters.insert(s.clustering.assignments[i]);

    for (StrategyKind kind : kinds) {
      const auto picked = select_indices(kind, s, per, cap, rng.next());
      const std::string where = to_string(kind) + " case " + std::to_string(trial);
      if (picked.size() > cap) violate("cap exceeded, " + where);
      if (std::set<std::size_t>(picked.begin(), picked.end()).size() != picked.size()) violate("duplicate, " + where);
      for (std::size_t i : picked)
        if (s.labeled[i]) violate("labeled id reselected, " + where);
      if (s.unlabeled_count() > 0 && picked.empty()) violate("empty selection, " + where);
      if (small && is_cluster_strategy(kind)) {
        ++coverage_checks;
        std::set<std::size_t> covered;
        for (std::size_t i : picked) covered.insert(s.clustering.assignments[i]);
        if (covered != open_clusters) violate("cluster not covered, " + where);
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {violations == 0 && elapsed < kSelectionSeconds,
          std::to_string(kSelectionCases) + " states x 6 strategies, " + std::to_string(coverage_checks) +
              " coverage checks, " + std::to_string(violations) + " violations" +
              (violations ? " (first: " + first_violation + ")" : "") + ", " + fmt(elapsed) + " s < " +
              fmt(kSelectionSeconds) + " s"};
}

// ------------------------------------------------------------------ k-means

bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::map<std::size_t, std::size_t> forward, backward;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [f, fnew] = forward.emplace(a[i], b[i]);
    auto [r, rnew] = backward.emplace(b[i], a[i]);
    if (f->second != b[i] || r->second != a[i]) return false;
  }
  return true;
}

Outcome kmeans_oracle() {
  const auto start = Clock::now();
  Rng rng(17);
  bool all_exact = true, all_monotone = true;
  std::string detail;
  for (std::size_t blobs : {2u, 3u}) {
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t per_blob = 20 + rng.index(20);
      const Index dim = 8;
      Matrix centers(dim, static_cast<Index>(blobs));
      for (Index i = 0; i < centers.size(); ++i) centers.data()[i] = 6.0 * rng.normal();
      Matrix points(dim, static_cast<Index>(blobs * per_blob));
      std::vector<std::size_t> truth;
      for (std::size_t b = 0; b < blobs; ++b)
        for (std::size_t k = 0; k < per_blob; ++k) {
          const Index col = static_cast<Index>(truth.size());
          for (Index d = 0; d < dim; ++d) points(d, col) = centers(d, static_cast<Index>(b)) + 0.5 * rng.normal();
          truth.push_back(b);
        }
      const Clustering c = cluster_latents(points, blobs, rng.next(), KMeansOptions{10, 100, ClusterMetric::Euclidean});
      all_exact = all_exact && same_partition(c.assignments, truth);
      for (std::size_t i = 1; i < c.inertia_trace.size(); ++i)
        if (c.inertia_trace[i] > c.inertia_trace[i - 1]) all_monotone = false;
    }
  }
  // Lloyd traces on unstructured data exercise the monotonicity more.
  std::size_t traces = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Matrix points(3, 60);
    for (Index i = 0; i < points.size(); ++i) points.data()[i] = rng.normal();
    const Clustering c = cluster_latents(points, 2 + rng.index(6), rng.next(), KMeansOptions{1, 100, ClusterMetric::Euclidean});
    traces += c.inertia_trace.size();
    for (std::size_t i = 1; i < c.inertia_trace.size(); ++i)
      if (c.inertia_trace[i] > c.inertia_trace[i - 1] * (1.0 + 1e-12)) all_monotone = false;
  }
  const double elapsed = seconds_since(start);
  return {all_exact && all_monotone && elapsed < kKMeansSeconds,
          std::string("2/3-blob partitions ") + (all_exact ? "exact" : "WRONG") + " (10 sets), inertia " +
              (all_monotone ? "non-increasing" : "INCREASED") + " over " + std::to_string(traces) +
              "+ Lloyd steps, " + fmt(elapsed) + " s < " + fmt(kKMeansSeconds) + " s"};
}

// ---------------------------------------------------------- the benchmark

struct Benchmark {
  Pool train, test;
  SimulationConfig config;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

Benchmark make_benchmark() {
  SyntheticOptions o;
  o.classes = 4;
  o.train_per_class = 50;  // 200 train
  o.test_per_class = 20;   // 80 test
  o.frames = 24;
  o.keypoints = 2;
  o.phase_jitter = 3.14159;
  o.coordinate_jitter = 1.0;
  o.speed_jitter = 0.2;
  o.frequency_step = 0.5;
  o.noise = 0.1;
  const Dataset ds = make_synthetic_dataset(o);
  Benchmark b;
  b.train = make_pool(ds, ds.split_or_all("train"), o.frames);
  b.test = make_pool(ds, ds.split_or_all("test"), o.frames);
  ModelConfig& m = b.config.model;
  m.input_dim = 4;
  m.seq_len = static_cast<int>(o.frames);
  m.encoder_hidden = 16;
  m.decoder_hidden = 32;
  m.num_classes = 4;
  m.learning_rate = 1e-3;
  m.batch_size = 16;
  m.decoder_gain = 5.0;
  b.config.pretrain_epochs = 300;
  b.config.epochs_per_iter = 50;
  b.config.per = 0.05;
  return b;
}

Benchmark& benchmark() {
  static Benchmark b = make_benchmark();
  return b;
}

PretrainCache& shared_cache() {
  static PretrainCache cache;
  return cache;
}

std::string seeds_text(const CurvePoint& p) {
  std::string out = "[";
  for (std::size_t i = 0; i < p.per_seed.size(); ++i) out += (i ? " " : "") + fmt(p.per_seed[i]);
  return out + "]";
}

Outcome directional_ordering() {
  const auto start = Clock::now();
  Benchmark& b = benchmark();
  std::map<Method, CurvePoint> at;
  for (Method m : {Method::C, Method::C_EP, Method::IC_KR, Method::IC_KEP})
    at[m] = simulate_with_oracle(m, b.train, b.test, b.config, {kDirectionalBudget}, b.seeds, &shared_cache())
                .points.front();
  const double ic_kr = at[Method::IC_KR].mean_accuracy, c = at[Method::C].mean_accuracy;
  const double ic_kep = at[Method::IC_KEP].mean_accuracy, c_ep = at[Method::C_EP].mean_accuracy;
  const double elapsed = seconds_since(start);
  return {ic_kr >= c + kMarginOverC && ic_kep >= c_ep && elapsed < kDirectionalSeconds,
          "at " + fmt(kDirectionalBudget * 100) + "% labels over 5 seeds: IC-KR " + fmt(ic_kr, 4) + " " +
              seeds_text(at[Method::IC_KR]) + " vs C " + fmt(c, 4) + " " + seeds_text(at[Method::C]) + " + " +
              fmt(kMarginOverC) + "; IC-KEP " + fmt(ic_kep, 4) + " vs C-EP " + fmt(c_ep, 4) + ", " + fmt(elapsed) +
              " s < " + fmt(kDirectionalSeconds) + " s"};
}

Outcome labels_to_reach_ordering() {
  const auto start = Clock::now();
  Benchmark& b = benchmark();
  const std::vector<double> budgets{0.05, 0.1, 0.2, 0.3, 0.5, 1.0};
  constexpr double kNone = std::numeric_limits<double>::infinity();
  std::map<Method, double> need;
  std::string detail;
  for (Method m : {Method::IC_KR, Method::IC, Method::KNN}) {
    // Budgets run in increasing order; later budgets cannot change the
    // smallest one that reaches the target.
    BudgetCurve curve;
    curve.method = to_string(m);
    for (double budget : budgets) {
      const BudgetCurve point = simulate_with_oracle(m, b.train, b.test, b.config, {budget}, b.seeds, &shared_cache());
      curve.points.push_back(point.points.front());
      if (point.points.front().mean_accuracy >= kReachTarget) break;
    }
    const auto reached = labels_to_reach(curve, kReachTarget);
    need[m] = reached ? *reached : kNone;
    detail += (detail.empty() ? "" : ", ") + curve.method + " " + (reached ? fmt(*reached * 100) + "%" : "none") +
              " (best mean " + fmt(std::max_element(curve.points.begin(), curve.points.end(),
                                                   [](const CurvePoint& x, const CurvePoint& y) {
                                                     return x.mean_accuracy < y.mean_accuracy;
                                                   })->mean_accuracy,
                                   4) +
              ")";
  }
  const bool ordered = need[Method::IC_KR] <= need[Method::IC] && need[Method::IC] <= need[Method::KNN];
  return {ordered, "labels for " + fmt(kReachTarget) + "%: " + detail + ", " + fmt(seconds_since(start)) + " s"};
}

// ---------------------------------------------------- determinism/persistence

std::string history_file(const std::vector<IterationRecord>& history) {
  std::string out;
  for (const IterationRecord& r : history) out += nlohmann::json(r).dump() + "\n";
  return out;
}

Outcome determinism_and_persistence() {
  const auto start = Clock::now();
  std::vector<std::string> failures;

  SyntheticOptions o;
  o.train_per_class = 10;
  o.test_per_class = 4;
  o.frames = 10;
  const Dataset ds = make_synthetic_dataset(o);
  const Pool train = make_pool(ds, ds.split_or_all("train"), o.frames);
  const Pool test = make_pool(ds, ds.split_or_all("test"), o.frames);
  SimulationConfig sim;
  sim.model.input_dim = 4;
  sim.model.seq_len = static_cast<int>(o.frames);
  sim.model.encoder_hidden = 6;
  sim.model.decoder_hidden = 12;
  sim.model.num_classes = 4;
  sim.model.learning_rate = 5e-3;
  sim.model.batch_size = 10;
  sim.pretrain_epochs = 5;
  sim.epochs_per_iter = 3;
  sim.per = 0.1;

  const fs::path root = fs::temp_directory_path() / "ic_acceptance_persistence";
  fs::remove_all(root);
  fs::create_directories(root);

  // Reruns write bit-identical history files.
  for (Method m : {Method::IC_KEP, Method::IC_KR, Method::C, Method::IC}) {
    const CellResult a = run_cell(m, train, test, sim, 0.3, 7);
    const CellResult b = run_cell(m, train, test, sim, 0.3, 7);
    write_file_atomic(root / "a.jsonl", history_file(a.history));
    write_file_atomic(root / "b.jsonl", history_file(b.history));
    if (a.history.empty() || read_file(root / "a.jsonl") != read_file(root / "b.jsonl"))
      failures.push_back(to_string(m) + " history differs between reruns");
  }

  // Checkpoint round trip.
  ActiveLoop loop = make_method_loop(Method::IC_KEP, train, test, sim, 12, 3, nullptr);
  run_active_loop(loop, pool_oracle(train));
  save_checkpoint(loop.trainer(), root / "model.ckpt");
  const Trainer loaded = load_checkpoint(root / "model.ckpt");
  if (!(loaded == loop.trainer()) || serialize_trainer(loaded) != serialize_trainer(loop.trainer()))
    failures.push_back("checkpoint round trip is not bit-exact");
  const ActiveLoop restored = ActiveLoop::restore(train, test, loaded, loop.save_state());
  if (restored.save_state() != loop.save_state()) failures.push_back("loop state round trip differs");

  // Session round trip and replay.
  save_dataset(ds, root / "data.txt");
  SessionConfig config;
  config.dataset = (root / "data.txt").string();
  config.model = sim.model;
  config.pretrain_epochs = 5;
  config.loop.strategy = StrategyKind::KEP;
  config.loop.per = 0.1;
  config.loop.iterations = 3;
  config.loop.epochs_per_iter = 3;
  config.loop.clusters = 4;
  config.loop.seed = 5;
  std::string id;
  SessionStatus status_before;
  nlohmann::json loop_before;
  std::string ckpt_before;
  std::vector<LabelRecord> labels_before;
  std::vector<IterationRecord> history_before;
  {
    AnnotationService svc(root / "store");
    id = svc.create_session(config);
    svc.wait_idle(id);
    for (int round = 0; round < 2; ++round) {
      std::vector<LabelSubmission> answers;
      for (const QueryItem& q : svc.next_queries(id))
        answers.push_back({q.sample_id, *ds.samples[*ds.find(q.sample_id)].label});
      svc.submit_labels(id, answers, "acceptance");
      svc.wait_idle(id);
    }
    status_before = svc.status(id);
    loop_before = svc.loop_state(id);
    ckpt_before = serialize_trainer(svc.trainer(id));
    labels_before = svc.labels(id);
    history_before = svc.history(id);
  }
  {
    AnnotationService svc(root / "store");
    if (!(svc.status(id) == status_before)) failures.push_back("session status changed across restart");
    if (svc.loop_state(id) != loop_before) failures.push_back("session loop state changed across restart");
    if (serialize_trainer(svc.trainer(id)) != ckpt_before) failures.push_back("session checkpoint changed across restart");
    if (!(svc.labels(id) == labels_before)) failures.push_back("label log changed across restart");

    const SessionData data = resolve_session(config);
    ModelParams pretrained;
    pretrain_session(data, config.pretrain_epochs, pretrained);
    LoopConfig replay_config = config.loop;
    replay_config.iterations = status_before.iteration;
    ActiveLoop replay = build_session_loop(data, replay_config, pretrained);
    std::map<std::string, int> log;
    for (const LabelRecord& r : labels_before) log[r.sample_id] = r.class_index;
    run_active_loop(replay, [&](std::span<const std::string> ids) {
      std::vector<int> out;
      for (const auto& sid : ids) out.push_back(log.at(sid));
      return out;
    });
    if (serialize_trainer(replay.trainer()) != ckpt_before) failures.push_back("replayed model differs from live session");
    if (!(replay.history() == history_before)) failures.push_back("replayed history differs from live session");
  }
  fs::remove_all(root);

  std::string detail = failures.empty() ? "history reruns, checkpoint, loop state, session restart and replay all bit-exact"
                                        : failures.front() + " (" + std::to_string(failures.size()) + " failures)";
  return {failures.empty(), detail + ", " + fmt(seconds_since(start)) + " s"};
}

// ---------------------------------------------------------- view invariance

Outcome view_invariance() {
  const auto start = Clock::now();
  SkeletonSpec spec;
  spec.keypoint_names = {"root", "hip_l", "hip_r", "spine", "head", "hand"};
  spec.root = 0;
  spec.hip_left = 1;
  spec.hip_right = 2;
  spec.spine = 3;
  Rng rng(8);
  Sample s;
  s.id = "skeleton";
  s.frames = 12;
  s.keypoints = 6;
  s.dims = 3;
  for (std::size_t t = 0; t < s.frames; ++t) {
    const double pts[6][3] = {{0.1 * rng.normal(), 1.0, 0.1 * rng.normal()},
                              {-0.3, 1.0 + 0.05 * rng.normal(), 0.1},
                              {0.3, 1.0 + 0.05 * rng.normal(), -0.1},
                              {0.05 * rng.normal(), 1.6, 0.2 * rng.normal()},
                              {rng.normal(), 2.0 + rng.normal(), rng.normal()},
                              {rng.normal(), rng.normal(), rng.normal()}};
    for (const auto& p : pts) s.positions.insert(s.positions.end(), p, p + 3);
  }
  const Sample direct = view_invariant_transform(s, spec);
  double worst = 0.0;
  for (std::size_t k = 0; k < kViewTransforms; ++k) {
    const Eigen::Matrix3d r =
        Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized().toRotationMatrix();
    const Eigen::Vector3d shift(5.0 * rng.normal(), 5.0 * rng.normal(), 5.0 * rng.normal());
    Sample moved = s;
    for (std::size_t t = 0; t < s.frames; ++t)
      for (std::size_t n = 0; n < s.keypoints; ++n) {
        const Eigen::Vector3d p = r * Eigen::Vector3d(s.at(t, n, 0), s.at(t, n, 1), s.at(t, n, 2)) + shift;
        for (std::size_t d = 0; d < 3; ++d) moved.at(t, n, d) = p[static_cast<Index>(d)];
      }
    const Sample canon = view_invariant_transform(moved, spec);
    for (std::size_t i = 0; i < canon.positions.size(); ++i)
      worst = std::max(worst, std::abs(canon.positions[i] - direct.positions[i]));
  }
  return {worst < kViewTolerance, std::to_string(kViewTransforms) + " rigid transforms, max deviation " + fmt(worst) +
                                      " < " + fmt(kViewTolerance) + ", " + fmt(seconds_since(start)) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-oracle", gradient_oracle},
      {"autoregression-convergence", autoregression_convergence},
      {"selection-invariants", selection_invariants},
      {"kmeans-oracle", kmeans_oracle},
      {"directional-ordering", directional_ordering},
      {"labels-to-reach-ordering", labels_to_reach_ordering},
      {"determinism-persistence", determinism_and_persistence},
      {"view-invariance", view_invariance},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);
  for (const std::string& name : wanted)
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; })) {
      std::cerr << "unknown criterion '" << name << "'\n";
      return 2;
    }

  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!wanted.empty() && wanted.count(name) == 0) continue;
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (outcome.pass ? "PASS " : "FAIL ") << name << ": " << outcome.detail << std::endl;
    failed += !outcome.pass;
  }
  return failed == 0 ? 0 : 1;
}

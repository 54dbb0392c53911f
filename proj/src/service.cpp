#include "ic/service.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "ic/checkpoint.hpp"

namespace ic {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::Pretraining: return "pretraining";
    case Phase::AwaitingLabels: return "awaiting_labels";
    case Phase::FineTuning: return "fine_tuning";
    case Phase::Idle: return "idle";
  }
  return "unknown";
}

std::string ServiceError::code_name() const {
  switch (code_) {
    case Code::NotFound: return "not_found";
    case Code::WrongPhase: return "wrong_phase";
    case Code::Validation: return "validation";
    case Code::Internal: return "internal";
  }
  return "internal";
}

void to_json(json& j, const SessionConfig& c) {
  j = json{{"dataset", c.dataset},         {"train_split", c.train_split}, {"test_split", c.test_split},
           {"classes", c.classes},         {"model", c.model},             {"loop", c.loop},
           {"pretrain_epochs", c.pretrain_epochs}};
}

void from_json(const json& j, SessionConfig& c) {
  c = SessionConfig{};
  c.dataset = j.at("dataset").get<std::string>();
  c.train_split = j.value("train_split", c.train_split);
  c.test_split = j.value("test_split", c.test_split);
  c.classes = j.value("classes", c.classes);
  if (j.contains("model")) c.model = j["model"].get<ModelConfig>();
  if (j.contains("loop")) c.loop = j["loop"].get<LoopConfig>();
  c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
}

namespace {

ServiceError validation(const std::string& message, json detail = json::object()) {
  return ServiceError(ServiceError::Code::Validation, message, std::move(detail));
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<int> parse_class(const std::string& label, const std::vector<std::string>& classes) {
  auto it = std::find(classes.begin(), classes.end(), label);
  if (it != classes.end()) return static_cast<int>(it - classes.begin());
  if (label.empty() || !std::all_of(label.begin(), label.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::nullopt;
  if (label.size() > 9) return std::nullopt;
  const int index = std::stoi(label);
  if (index >= static_cast<int>(classes.size())) return std::nullopt;
  return index;
}

}  // namespace

SessionData resolve_session(const SessionConfig& config) {
  if (config.dataset.empty()) throw validation("config: dataset is required");
  if (!fs::exists(config.dataset))
    throw ServiceError(ServiceError::Code::NotFound, "dataset '" + config.dataset + "' not found",
                       json{{"dataset", config.dataset}});
  SessionData data;
  try {
    data.dataset = load_dataset(config.dataset);
  } catch (const DataError& e) {
    throw validation(std::string("dataset: ") + e.what(), json{{"dataset", config.dataset}, {"line", e.line()}});
  }
  const Dataset& ds = data.dataset;
  if (ds.size() == 0) throw validation("dataset has no samples");
  data.classes = config.classes.empty() ? ds.class_names : config.classes;
  if (data.classes.empty()) throw validation("no classes: the dataset is unlabeled and the config lists none");
  if (std::set<std::string>(data.classes.begin(), data.classes.end()).size() != data.classes.size())
    throw validation("class names must be unique");
  const std::size_t features = ds.samples.front().feature_dim();
  for (const Sample& s : ds.samples)
    if (s.feature_dim() != features)
      throw validation("samples disagree on keypoint layout", json{{"sample_id", s.id}});

  data.model = config.model;
  data.model.input_dim = static_cast<int>(features);
  data.model.num_classes = static_cast<int>(data.classes.size());
  try {
    data.model.validate();
    config.loop.validate();
  } catch (const std::invalid_argument& e) {
    throw validation(std::string("config: ") + e.what());
  }

  const std::size_t seq_len = static_cast<std::size_t>(data.model.seq_len);
  data.train = make_pool(ds, ds.split_or_all(config.train_split), seq_len);
  std::fill(data.train.labels.begin(), data.train.labels.end(), -1);
  if (data.train.size() == 0) throw validation("training split '" + config.train_split + "' is empty");
  if (config.loop.clusters > data.train.size()) throw validation("config: more clusters than training samples");

  auto test_split = ds.splits.find(config.test_split);
  if (test_split != ds.splits.end()) {
    data.test = make_pool(ds, test_split->second, seq_len);
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      const Sample& s = ds.samples[test_split->second[i]];
      auto it = s.label ? std::find(data.classes.begin(), data.classes.end(), *s.label) : data.classes.end();
      data.test.labels[i] = it == data.classes.end() ? -1 : static_cast<int>(it - data.classes.begin());
    }
  }
  return data;
}

std::vector<double> pretrain_session(const SessionData& data, std::size_t epochs, ModelParams& out) {
  Trainer trainer(data.model);
  std::vector<double> trace = train_autoregression(trainer, data.train.sequences, epochs);
  out = trainer.params();
  return trace;
}

ActiveLoop build_session_loop(const SessionData& data, const LoopConfig& loop, ModelParams pretrained) {
  return ActiveLoop(data.train, data.test, Trainer(data.model, std::move(pretrained), data.model.seed + 1), loop);
}

Matrix pca_project(const Matrix& points) {
  const Index n = points.rows();
  Matrix out = Matrix::Zero(n, 2);
  if (n == 0 || points.cols() == 0) return out;
  const Matrix centered = points.rowwise() - points.colwise().mean();
  const Matrix cov = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  const Index dims = points.cols();
  for (Index k = 0; k < std::min<Index>(2, dims); ++k) {
    Vector axis = solver.eigenvectors().col(dims - 1 - k);
    Index largest = 0;
    axis.cwiseAbs().maxCoeff(&largest);
    if (axis(largest) < 0) axis = -axis;
    out.col(k) = centered * axis;
  }
  return out;
}

void to_json(json& j, const LabelRecord& r) {
  j = json{{"sample_id", r.sample_id}, {"label", r.label},         {"class_index", r.class_index},
           {"annotator", r.annotator}, {"timestamp", r.timestamp}, {"iteration", r.iteration}};
}

void from_json(const json& j, LabelRecord& r) {
  r.sample_id = j.at("sample_id").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.class_index = j.at("class_index").get<int>();
  r.annotator = j.value("annotator", "");
  r.timestamp = j.value("timestamp", "");
  r.iteration = j.at("iteration").get<std::size_t>();
}

void to_json(json& j, const SessionStatus& s) {
  j = json{{"session_id", s.session_id},
           {"phase", to_string(s.phase)},
           {"iteration", s.iteration},
           {"labeled_count", s.labeled_count},
           {"labeled_fraction", s.labeled_fraction},
           {"train_size", s.train_size},
           {"last_test_accuracy", s.last_test_accuracy ? json(*s.last_test_accuracy) : json(nullptr)},
           {"pretrain_loss", s.pretrain_loss},
           {"loss_trace", s.loss_trace},
           {"pending", s.pending},
           {"remaining", s.remaining},
           {"classes", s.classes},
           {"error", s.error ? json(*s.error) : json(nullptr)}};
}

void to_json(json& j, const QueryItem& q) {
  j = json{{"sample_id", q.sample_id}, {"cluster", q.cluster}, {"uncertainty", q.uncertainty},
           {"entropy", q.entropy},     {"labeled", q.labeled}, {"playback", q.playback}};
}

void to_json(json& j, const ProjectedPoint& p) {
  j = json{{"sample_id", p.sample_id}, {"x", p.x},           {"y", p.y},
           {"cluster", p.cluster},     {"labeled", p.labeled}, {"queried", p.queried}};
}

json playback_json(const Sample& sample) {
  json frames = json::array();
  for (std::size_t t = 0; t < sample.frames; ++t) {
    json points = json::array();
    for (std::size_t n = 0; n < sample.keypoints; ++n) {
      json coords = json::array();
      for (std::size_t d = 0; d < sample.dims; ++d) coords.push_back(sample.at(t, n, d));
      points.push_back(std::move(coords));
    }
    frames.push_back(std::move(points));
  }
  json j{{"id", sample.id},
         {"frames", sample.frames},
         {"keypoints", sample.keypoints},
         {"dims", sample.dims},
         {"positions", std::move(frames)}};
  if (sample.label) j["label"] = *sample.label;
  return j;
}

struct AnnotationService::Session {
  std::string id;
  fs::path dir;
  SessionConfig config;
  std::shared_ptr<const SessionData> data;
  std::string created;

  mutable std::mutex mutex;
  mutable std::condition_variable idle;
  Phase phase = Phase::Pretraining;
  std::shared_ptr<const ActiveLoop> loop;  // null until pretraining ends
  std::vector<double> pretrain_loss;
  std::vector<LabelRecord> labels;
  std::map<std::string, int> round;  // answers for the open query set
  bool busy = false;
  std::optional<std::string> error;
  std::thread worker;
};

AnnotationService::AnnotationService(fs::path store) : store_(std::move(store)) {
  fs::create_directories(store_);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(store_))
    if (entry.is_directory() && fs::exists(entry.path() / "session.json")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const fs::path& dir : dirs) {
    try {
      load_session(dir);
    } catch (const std::exception& e) {
      std::cerr << "skipping session in " << dir << ": " << e.what() << "\n";
    }
  }
}

AnnotationService::~AnnotationService() {
  std::map<std::string, std::shared_ptr<Session>> sessions;
  {
    std::lock_guard lock(mutex_);
    sessions = sessions_;
  }
  for (auto& [id, s] : sessions)
    if (s->worker.joinable()) s->worker.join();
}

std::shared_ptr<AnnotationService::Session> AnnotationService::find(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end())
    throw ServiceError(ServiceError::Code::NotFound, "unknown session '" + session_id + "'",
                       json{{"session_id", session_id}});
  return it->second;
}

std::vector<std::string> AnnotationService::session_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

std::string AnnotationService::create_session(const SessionConfig& config) {
  auto data = std::make_shared<const SessionData>(resolve_session(config));
  auto s = std::make_shared<Session>();
  {
    std::lock_guard lock(mutex_);
    std::string id;
    do {
      std::ostringstream name;
      name << "s" << std::setw(4) << std::setfill('0') << ++counter_;
      id = name.str();
    } while (sessions_.count(id) > 0 || fs::exists(store_ / id));
    s->id = id;
    s->dir = store_ / id;
    s->config = config;
    s->data = data;
    s->created = utc_now();
    fs::create_directories(s->dir);
    persist_session_record(*s);
    sessions_.emplace(id, s);
  }
  start_pretraining(s);
  return s->id;
}

void AnnotationService::persist_session_record(const Session& s) const {
  const json record{{"session_id", s.id}, {"config", s.config}, {"phase", to_string(s.phase)}, {"created", s.created}};
  write_file_atomic(s.dir / "session.json", record.dump(2) + "\n");
}

void AnnotationService::persist(Session& s, const ActiveLoop& loop, const std::vector<double>& pretrain_loss) const {
  const std::string checkpoint = "trainer-" + std::to_string(loop.iteration()) + ".ckpt";
  save_checkpoint(loop.trainer(), s.dir / checkpoint);
  const json state{{"checkpoint", checkpoint}, {"pretrain_loss", pretrain_loss}, {"loop", loop.save_state()}};
  write_file_atomic(s.dir / "loop.json", state.dump() + "\n");
  for (const auto& entry : fs::directory_iterator(s.dir)) {
    const std::string name = entry.path().filename().string();
    if (name != checkpoint && name.rfind("trainer-", 0) == 0 && entry.path().extension() == ".ckpt")
      fs::remove(entry.path());
  }
}

void AnnotationService::launch(const std::shared_ptr<Session>& s, std::function<void()> task) {
  if (s->worker.joinable()) s->worker.join();
  {
    std::lock_guard lock(s->mutex);
    s->busy = true;
    s->error.reset();
  }
  s->worker = std::thread([s, task = std::move(task)] {
    try {
      task();
    } catch (const std::exception& e) {
      std::lock_guard lock(s->mutex);
      s->error = e.what();
    }
    std::lock_guard lock(s->mutex);
    s->busy = false;
    s->idle.notify_all();
  });
}

void AnnotationService::start_pretraining(const std::shared_ptr<Session>& s) {
  launch(s, [this, s] {
    ModelParams pretrained;
    std::vector<double> trace = pretrain_session(*s->data, s->config.pretrain_epochs, pretrained);
    auto loop = std::make_shared<ActiveLoop>(build_session_loop(*s->data, s->config.loop, std::move(pretrained)));
    loop->propose();
    persist(*s, *loop, trace);
    std::lock_guard lock(s->mutex);
    s->pretrain_loss = std::move(trace);
    s->loop = loop;
    s->round.clear();
    s->phase = loop->finished() ? Phase::Idle : Phase::AwaitingLabels;
    persist_session_record(*s);
  });
}

void AnnotationService::start_fine_tuning(const std::shared_ptr<Session>& s, std::vector<int> labels) {
  launch(s, [this, s, labels = std::move(labels)] {
    std::shared_ptr<const ActiveLoop> current;
    std::vector<double> trace;
    {
      std::lock_guard lock(s->mutex);
      current = s->loop;
      trace = s->pretrain_loss;
    }
    auto loop = std::make_shared<ActiveLoop>(*current);
    if (loop->has_pending()) loop->commit(labels);
    loop->propose();
    persist(*s, *loop, trace);
    std::lock_guard lock(s->mutex);
    s->loop = loop;
    s->round.clear();
    s->phase = loop->finished() ? Phase::Idle : Phase::AwaitingLabels;
    persist_session_record(*s);
  });
}

void AnnotationService::load_session(const fs::path& dir) {
  const json record = json::parse(read_file(dir / "session.json"));
  auto s = std::make_shared<Session>();
  s->id = record.at("session_id").get<std::string>();
  s->dir = dir;
  s->config = record.at("config").get<SessionConfig>();
  s->created = record.value("created", "");
  s->data = std::make_shared<const SessionData>(resolve_session(s->config));
  if (fs::exists(dir / "labels.jsonl")) {
    std::istringstream in(read_file(dir / "labels.jsonl"));
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) s->labels.push_back(json::parse(line).get<LabelRecord>());
  }

  bool resume_training = false;
  if (fs::exists(dir / "loop.json")) {
    const json state = json::parse(read_file(dir / "loop.json"));
    Trainer trainer = load_checkpoint(dir / state.at("checkpoint").get<std::string>());
    auto loop = std::make_shared<ActiveLoop>(
        ActiveLoop::restore(s->data->train, s->data->test, std::move(trainer), state.at("loop")));
    s->pretrain_loss = state.at("pretrain_loss").get<std::vector<double>>();
    if (loop->has_pending()) {
      const std::vector<std::string> pending = loop->pending_ids();
      for (const LabelRecord& r : s->labels)
        if (r.iteration == loop->iteration() && std::find(pending.begin(), pending.end(), r.sample_id) != pending.end())
          s->round[r.sample_id] = r.class_index;
      s->phase = s->round.size() == pending.size() ? Phase::FineTuning : Phase::AwaitingLabels;
    } else {
      s->phase = loop->finished() ? Phase::Idle : Phase::FineTuning;
    }
    resume_training = s->phase == Phase::FineTuning;
    s->loop = std::move(loop);
  }

  {
    std::lock_guard lock(mutex_);
    if (sessions_.count(s->id) > 0) throw std::runtime_error("duplicate session id '" + s->id + "'");
    sessions_.emplace(s->id, s);
    const std::string digits = s->id.substr(1);
    if (s->id.size() > 1 && std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
      counter_ = std::max<std::uint64_t>(counter_, std::stoull(digits));
  }
  if (!s->loop) {
    start_pretraining(s);
  } else if (resume_training) {
    std::vector<int> labels;
    for (const std::string& id : s->loop->pending_ids()) labels.push_back(s->round.at(id));
    start_fine_tuning(s, std::move(labels));
  }
}

std::vector<QueryItem> AnnotationService::next_queries(const std::string& session_id) const {
  auto s = find(session_id);
  std::shared_ptr<const ActiveLoop> loop;
  std::map<std::string, int> round;
  {
    std::lock_guard lock(s->mutex);
    if (s->phase != Phase::AwaitingLabels)
      throw ServiceError(ServiceError::Code::WrongPhase, "no open query set while " + to_string(s->phase),
                         json{{"phase", to_string(s->phase)}});
    loop = s->loop;
    round = s->round;
  }
  const SelectionState& state = *loop->selection_state();
  std::vector<QueryItem> items;
  for (std::size_t index : loop->pending()) {
    QueryItem q;
    q.sample_id = loop->train_pool().ids[index];
    q.cluster = state.clustering.assignments[index];
    q.uncertainty = state.uncertainty[index];
    q.entropy = state.entropy[index];
    q.labeled = round.count(q.sample_id) > 0;
    q.playback = sample(session_id, q.sample_id);
    items.push_back(std::move(q));
  }
  return items;
}

std::size_t AnnotationService::submit_labels(const std::string& session_id, std::span<const LabelSubmission> labels,
                                             const std::string& annotator) {
  auto s = find(session_id);
  std::vector<int> ordered;
  std::size_t remaining = 0;
  {
    std::lock_guard lock(s->mutex);
    if (s->phase != Phase::AwaitingLabels)
      throw ServiceError(ServiceError::Code::WrongPhase, "labels are not accepted while " + to_string(s->phase),
                         json{{"phase", to_string(s->phase)}});
    if (labels.empty()) throw validation("no labels submitted");
    const ActiveLoop& loop = *s->loop;
    const std::vector<std::string> pending = loop.pending_ids();
    const std::vector<std::string>& classes = s->data->classes;

    std::vector<LabelRecord> records;
    std::set<std::string> seen;
    const std::string now = utc_now();
    for (const LabelSubmission& l : labels) {
      if (std::find(pending.begin(), pending.end(), l.sample_id) == pending.end())
        throw validation("sample '" + l.sample_id + "' is not in the open query set", json{{"sample_id", l.sample_id}});
      if (s->round.count(l.sample_id) > 0 || !seen.insert(l.sample_id).second)
        throw validation("sample '" + l.sample_id + "' is already labeled", json{{"sample_id", l.sample_id}});
      const std::optional<int> index = parse_class(l.label, classes);
      if (!index)
        throw validation("unknown class '" + l.label + "' for sample '" + l.sample_id + "'",
                         json{{"sample_id", l.sample_id}, {"label", l.label}, {"classes", classes}});
      records.push_back(LabelRecord{l.sample_id, classes[static_cast<std::size_t>(*index)], *index, annotator, now,
                                    loop.iteration()});
    }

    std::string log;
    for (const LabelRecord& r : s->labels) log += json(r).dump() + "\n";
    for (const LabelRecord& r : records) log += json(r).dump() + "\n";
    write_file_atomic(s->dir / "labels.jsonl", log);
    for (LabelRecord& r : records) {
      s->round[r.sample_id] = r.class_index;
      s->labels.push_back(std::move(r));
    }

    remaining = pending.size() - s->round.size();
    if (remaining == 0) {
      for (const std::string& id : pending) ordered.push_back(s->round.at(id));
      s->phase = Phase::FineTuning;
      persist_session_record(*s);
    }
  }
  if (remaining == 0) start_fine_tuning(s, std::move(ordered));
  return remaining;
}

SessionStatus AnnotationService::status(const std::string& session_id) const {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  SessionStatus out;
  out.session_id = s->id;
  out.phase = s->phase;
  out.train_size = s->data->train.size();
  out.classes = s->data->classes;
  out.pretrain_loss = s->pretrain_loss;
  out.error = s->error;
  if (s->loop) {
    const ActiveLoop& loop = *s->loop;
    out.iteration = loop.iteration();
    out.labeled_count = loop.labeled_count();
    out.labeled_fraction = static_cast<double>(out.labeled_count) / static_cast<double>(out.train_size);
    for (const IterationRecord& r : loop.history()) out.loss_trace.push_back(r.train_loss);
    if (!loop.history().empty()) out.last_test_accuracy = loop.history().back().test_accuracy;
    if (loop.has_pending()) {
      out.pending = loop.pending().size();
      out.remaining = out.pending - s->round.size();
    }
  }
  return out;
}

std::vector<ProjectedPoint> AnnotationService::embedding_projection(const std::string& session_id) const {
  auto s = find(session_id);
  std::shared_ptr<const ActiveLoop> loop;
  {
    std::lock_guard lock(s->mutex);
    loop = s->loop;
  }
  if (!loop || !loop->selection_state())
    throw ServiceError(ServiceError::Code::WrongPhase, "latents are not available before pretraining finishes",
                       json{{"phase", "pretraining"}});
  const Matrix projected = pca_project(loop->latents().transpose());
  const SelectionState& state = *loop->selection_state();
  const std::vector<std::size_t>& pending = loop->pending();
  std::vector<ProjectedPoint> points;
  for (std::size_t i = 0; i < loop->train_pool().size(); ++i) {
    ProjectedPoint p;
    p.sample_id = loop->train_pool().ids[i];
    p.x = projected(static_cast<Index>(i), 0);
    p.y = projected(static_cast<Index>(i), 1);
    p.cluster = state.clustering.assignments[i];
    p.labeled = loop->assigned_labels()[i] >= 0;
    p.queried = std::find(pending.begin(), pending.end(), i) != pending.end();
    points.push_back(std::move(p));
  }
  return points;
}

json AnnotationService::sample(const std::string& session_id, const std::string& sample_id) const {
  auto s = find(session_id);
  const std::optional<std::size_t> index = s->data->dataset.find(sample_id);
  if (!index)
    throw ServiceError(ServiceError::Code::NotFound, "unknown sample '" + sample_id + "'",
                       json{{"sample_id", sample_id}});
  Sample copy = s->data->dataset.samples[*index];
  // Ground truth stays hidden from the annotator.
  copy.label.reset();
  return playback_json(copy);
}

std::vector<IterationRecord> AnnotationService::history(const std::string& session_id) const {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  return s->loop ? s->loop->history() : std::vector<IterationRecord>{};
}

std::vector<LabelRecord> AnnotationService::labels(const std::string& session_id) const {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  return s->labels;
}

SessionConfig AnnotationService::config(const std::string& session_id) const { return find(session_id)->config; }

Trainer AnnotationService::trainer(const std::string& session_id) const {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  if (!s->loop)
    throw ServiceError(ServiceError::Code::WrongPhase, "no model before pretraining finishes",
                       json{{"phase", to_string(s->phase)}});
  return s->loop->trainer();
}

json AnnotationService::loop_state(const std::string& session_id) const {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  return s->loop ? s->loop->save_state() : json(nullptr);
}

void AnnotationService::wait_idle(const std::string& session_id) const {
  auto s = find(session_id);
  std::unique_lock lock(s->mutex);
  s->idle.wait(lock, [&] { return !s->busy; });
}

}  // namespace ic

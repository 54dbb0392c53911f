#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ic/active_loop.hpp"

namespace ic {

enum class Phase { Pretraining, AwaitingLabels, FineTuning, Idle };

std::string to_string(Phase phase);

class ServiceError : public std::runtime_error {
 public:
  enum class Code { NotFound, WrongPhase, Validation, Internal };

  ServiceError(Code code, const std::string& message, nlohmann::json detail = nlohmann::json::object())
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  Code code() const { return code_; }
  const nlohmann::json& detail() const { return detail_; }
  /// "not_found", "wrong_phase", "validation" or "internal".
  std::string code_name() const;

 private:
  Code code_;
  nlohmann::json detail_;
};

struct SessionConfig {
  std::string dataset;  // path to a keypoint dataset file
  std::string train_split = "train";
  std::string test_split = "test";  // optional; enables test accuracy when labeled
  std::vector<std::string> classes;  // empty means the dataset's class names
  ModelConfig model;                 // input_dim and num_classes are filled from the data
  LoopConfig loop;
  std::size_t pretrain_epochs = 100;
};

void to_json(nlohmann::json& j, const SessionConfig& c);
void from_json(const nlohmann::json& j, SessionConfig& c);

/// Pools and model config a session trains on, resolved from its config.
struct SessionData {
  Dataset dataset;
  std::vector<std::string> classes;
  ModelConfig model;
  Pool train;
  Pool test;
};

/// Throws ServiceError(NotFound) for a missing dataset and
/// ServiceError(Validation) for an unusable config.
SessionData resolve_session(const SessionConfig& config);

/// The loop a session runs: auto-regression pretraining from model.seed,
/// then fine-tuning from the pretrained parameters. Replaying it with the
/// session's labels reproduces the live model.
std::vector<double> pretrain_session(const SessionData& data, std::size_t epochs, ModelParams& out);
ActiveLoop build_session_loop(const SessionData& data, const LoopConfig& loop, ModelParams pretrained);

/// Top-2 principal component scores of the rows of `points` (n x 2).
/// Each component is sign-fixed so its largest-magnitude entry is positive.
Matrix pca_project(const Matrix& points);

struct LabelRecord {
  std::string sample_id;
  std::string label;
  int class_index = -1;
  std::string annotator;
  std::string timestamp;  // UTC, ISO 8601
  std::size_t iteration = 0;

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

void to_json(nlohmann::json& j, const LabelRecord& r);
void from_json(const nlohmann::json& j, LabelRecord& r);

struct LabelSubmission {
  std::string sample_id;
  std::string label;  // class name, or its index written as a decimal string
};

struct QueryItem {
  std::string sample_id;
  std::size_t cluster = 0;
  double uncertainty = 0.0;
  double entropy = 0.0;
  bool labeled = false;  // already answered in the open round
  nlohmann::json playback;
};

struct SessionStatus {
  std::string session_id;
  Phase phase = Phase::Pretraining;
  std::size_t iteration = 0;
  std::size_t labeled_count = 0;
  double labeled_fraction = 0.0;
  std::size_t train_size = 0;
  std::optional<double> last_test_accuracy;
  std::vector<double> pretrain_loss;
  std::vector<double> loss_trace;  // final fine-tuning loss per iteration
  std::size_t pending = 0;         // open query set size
  std::size_t remaining = 0;       // of which still unlabeled
  std::vector<std::string> classes;
  std::optional<std::string> error;

  friend bool operator==(const SessionStatus&, const SessionStatus&) = default;
};

void to_json(nlohmann::json& j, const SessionStatus& s);

struct ProjectedPoint {
  std::string sample_id;
  double x = 0.0;
  double y = 0.0;
  std::size_t cluster = 0;
  bool labeled = false;
  bool queried = false;
};

void to_json(nlohmann::json& j, const QueryItem& q);
void to_json(nlohmann::json& j, const ProjectedPoint& p);

/// Playback payload: {id, frames, keypoints, dims, positions[t][n][d], label?}.
nlohmann::json playback_json(const Sample& sample);

/// Sessions persisted under one store directory, one subdirectory each:
///   session.json  id, config, phase
///   labels.jsonl  append-only label log
///   loop.json     loop state, pretraining trace and checkpoint file name
///   trainer-<iteration>.ckpt
/// Training runs on a worker thread per session; every read works on a
/// snapshot and never waits for training.
class AnnotationService {
 public:
  /// Opens (creating if needed) the store and resumes every saved session.
  explicit AnnotationService(std::filesystem::path store);
  ~AnnotationService();

  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  std::string create_session(const SessionConfig& config);
  std::vector<std::string> session_ids() const;

  std::vector<QueryItem> next_queries(const std::string& session_id) const;
  /// Returns how many queries of the open round remain unlabeled.
  std::size_t submit_labels(const std::string& session_id, std::span<const LabelSubmission> labels,
                            const std::string& annotator = "");
  SessionStatus status(const std::string& session_id) const;
  std::vector<ProjectedPoint> embedding_projection(const std::string& session_id) const;
  nlohmann::json sample(const std::string& session_id, const std::string& sample_id) const;
  std::vector<IterationRecord> history(const std::string& session_id) const;
  std::vector<LabelRecord> labels(const std::string& session_id) const;
  SessionConfig config(const std::string& session_id) const;

  /// Snapshot of the session's current trainer.
  Trainer trainer(const std::string& session_id) const;
  nlohmann::json loop_state(const std::string& session_id) const;

  /// Blocks until the session has no background task.
  void wait_idle(const std::string& session_id) const;

  const std::filesystem::path& store() const { return store_; }

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& session_id) const;
  void start_pretraining(const std::shared_ptr<Session>& s);
  void start_fine_tuning(const std::shared_ptr<Session>& s, std::vector<int> labels);
  void launch(const std::shared_ptr<Session>& s, std::function<void()> task);
  void persist(Session& s, const ActiveLoop& loop, const std::vector<double>& pretrain_loss) const;
  void persist_session_record(const Session& s) const;
  void load_session(const std::filesystem::path& dir);

  std::filesystem::path store_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace ic

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ic {

class DataError : public std::runtime_error {
 public:
  enum class Kind { Parse, Shape, DuplicateId, Degenerate, Invalid, NotFound };

  DataError(Kind kind, const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), kind_(kind), line_(line) {}

  Kind kind() const { return kind_; }
  /// 1-based line of the offending record, 0 when not file-related.
  std::size_t line() const { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

/// One keypoint sequence. Positions are stored frame-major: [t][n][d].
struct Sample {
  std::string id;
  std::size_t frames = 0;     // T
  std::size_t keypoints = 0;  // N
  std::size_t dims = 0;       // D
  std::vector<double> positions;
  std::optional<std::vector<double>> confidence;  // [t][n]
  std::optional<std::string> label;

  double& at(std::size_t t, std::size_t n, std::size_t d) {
    return positions[(t * keypoints + n) * dims + d];
  }
  double at(std::size_t t, std::size_t n, std::size_t d) const {
    return positions[(t * keypoints + n) * dims + d];
  }
  std::size_t feature_dim() const { return keypoints * dims; }

  /// Throws DataError(Shape/Invalid) if the sample breaks its invariants.
  void validate() const;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;
  std::map<std::string, std::vector<std::size_t>> splits;

  std::size_t size() const { return samples.size(); }
  /// Index of `label` in class_names, or nullopt.
  std::optional<std::size_t> class_index(const std::string& label) const;
  /// Class index of every sample (-1 when unlabeled).
  std::vector<int> label_indices() const;
  std::optional<std::size_t> find(const std::string& id) const;

  /// Rebuilds class_names as the sorted set of labels present.
  void refresh_classes();
  void validate() const;

  /// Indices of the named split, or all indices when the split is absent.
  std::vector<std::size_t> split_or_all(const std::string& name) const;
};

struct SkeletonSpec {
  std::vector<std::string> keypoint_names;
  std::size_t root = 0;
  std::size_t hip_left = 0;
  std::size_t hip_right = 0;
  std::size_t spine = 0;

  void validate() const;
};

enum class ConfidenceAggregate { Min, Mean };

struct PrepOptions {
  double threshold = 0.0;
  ConfidenceAggregate aggregate = ConfidenceAggregate::Min;
  std::size_t target_len = 50;
  bool normalize = true;
};

inline constexpr double kDegenerateEpsilon = 1e-8;

Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::istream& in);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, std::ostream& out);

SkeletonSpec load_skeleton_spec(const std::filesystem::path& path);

/// Per frame: root to the origin, hip_left->hip_right along +x, spine-root
/// direction (orthogonalized against the hip axis) along +y.
Sample view_invariant_transform(const Sample& sample, const SkeletonSpec& spec);

/// Keeps samples whose aggregated confidence reaches `threshold`.
/// Samples without confidence always pass.
Dataset confidence_filter(const Dataset& dataset, double threshold,
                          ConfidenceAggregate aggregate = ConfidenceAggregate::Min);

/// Linear time interpolation to exactly `target_frames` frames.
Sample resample_length(const Sample& sample, std::size_t target_frames);

/// Centers on the mean root position and scales by the largest bounding-box extent.
Sample normalize_sample(const Sample& sample, std::size_t root);

/// Seeded shuffle; the first floor(fraction * n) indices form "train".
Dataset split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

/// Filter, canonicalize (3-D with a skeleton), normalize, then resample.
Dataset preprocess(const Dataset& dataset, const std::optional<SkeletonSpec>& spec,
                   const PrepOptions& options);

/// T x (N*D) matrix, one flattened frame per row.
Eigen::MatrixXd to_sequence(const Sample& sample);

}  // namespace ic

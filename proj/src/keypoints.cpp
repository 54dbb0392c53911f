#include "ic/keypoints.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ic/rng.hpp"

namespace ic {

using nlohmann::json;

namespace {

DataError shape_error(const std::string& id, const std::string& what, std::size_t line = 0) {
  return DataError(DataError::Kind::Shape, "sample '" + id + "': " + what, line);
}

Sample parse_record(const json& rec, std::size_t line) {
  if (!rec.is_object()) throw DataError(DataError::Kind::Parse, "record is not an object", line);
  if (!rec.contains("id") || !rec["id"].is_string())
    throw DataError(DataError::Kind::Parse, "record missing string field 'id'", line);
  Sample s;
  s.id = rec["id"].get<std::string>();
  if (!rec.contains("keypoints") || !rec["keypoints"].is_array())
    throw shape_error(s.id, "missing keypoints array", line);

  const json& kp = rec["keypoints"];
  s.frames = kp.size();
  if (s.frames == 0) throw shape_error(s.id, "no frames", line);
  for (std::size_t t = 0; t < s.frames; ++t) {
    const json& frame = kp[t];
    if (!frame.is_array()) throw shape_error(s.id, "frame is not an array", line);
    if (t == 0) s.keypoints = frame.size();
    if (frame.size() != s.keypoints || s.keypoints == 0)
      throw shape_error(s.id, "inconsistent keypoint count at frame " + std::to_string(t), line);
    for (const json& point : frame) {
      if (!point.is_array()) throw shape_error(s.id, "keypoint is not an array", line);
      if (s.dims == 0) s.dims = point.size();
      if (point.size() != s.dims)
        throw shape_error(s.id, "inconsistent dimension at frame " + std::to_string(t), line);
      for (const json& v : point) {
        if (!v.is_number()) throw DataError(DataError::Kind::Parse, "non-numeric coordinate", line);
        s.positions.push_back(v.get<double>());
      }
    }
  }

  if (rec.contains("confidence") && !rec["confidence"].is_null()) {
    const json& conf = rec["confidence"];
    if (!conf.is_array() || conf.size() != s.frames)
      throw shape_error(s.id, "confidence shape does not match (T, N)", line);
    std::vector<double> values;
    values.reserve(s.frames * s.keypoints);
    for (const json& frame : conf) {
      if (!frame.is_array() || frame.size() != s.keypoints)
        throw shape_error(s.id, "confidence shape does not match (T, N)", line);
      for (const json& v : frame) {
        if (!v.is_number()) throw DataError(DataError::Kind::Parse, "non-numeric confidence", line);
        values.push_back(v.get<double>());
      }
    }
    s.confidence = std::move(values);
  }
  if (rec.contains("label") && !rec["label"].is_null()) {
    if (!rec["label"].is_string()) throw DataError(DataError::Kind::Parse, "label is not a string", line);
    s.label = rec["label"].get<std::string>();
  }

  try {
    s.validate();
  } catch (const DataError& e) {
    throw DataError(e.kind(), e.what(), line);
  }
  return s;
}

json record_json(const Sample& s) {
  json kp = json::array();
  for (std::size_t t = 0; t < s.frames; ++t) {
    json frame = json::array();
    for (std::size_t n = 0; n < s.keypoints; ++n) {
      json point = json::array();
      for (std::size_t d = 0; d < s.dims; ++d) point.push_back(s.at(t, n, d));
      frame.push_back(std::move(point));
    }
    kp.push_back(std::move(frame));
  }
  json rec = {{"id", s.id}, {"keypoints", std::move(kp)}};
  if (s.confidence) {
    json conf = json::array();
    for (std::size_t t = 0; t < s.frames; ++t) {
      json frame = json::array();
      for (std::size_t n = 0; n < s.keypoints; ++n) frame.push_back((*s.confidence)[t * s.keypoints + n]);
      conf.push_back(std::move(frame));
    }
    rec["confidence"] = std::move(conf);
  }
  if (s.label) rec["label"] = *s.label;
  return rec;
}

using Vec3 = Eigen::Vector3d;

Vec3 point3(const Sample& s, std::size_t t, std::size_t n) {
  return {s.at(t, n, 0), s.at(t, n, 1), s.at(t, n, 2)};
}

}  // namespace

void Sample::validate() const {
  if (frames < 2) throw shape_error(id, "needs at least 2 frames");
  if (keypoints < 1) throw shape_error(id, "needs at least 1 keypoint");
  if (dims != 2 && dims != 3) throw shape_error(id, "dimension must be 2 or 3");
  if (positions.size() != frames * keypoints * dims) throw shape_error(id, "position count mismatch");
  for (double v : positions)
    if (!std::isfinite(v)) throw DataError(DataError::Kind::Invalid, "sample '" + id + "': non-finite keypoint");
  if (confidence) {
    if (confidence->size() != frames * keypoints)
      throw shape_error(id, "confidence shape does not match (T, N)");
    for (double c : *confidence)
      if (!(c >= 0.0 && c <= 1.0))
        throw DataError(DataError::Kind::Invalid, "sample '" + id + "': confidence outside [0, 1]");
  }
}

std::optional<std::size_t> Dataset::class_index(const std::string& label) const {
  auto it = std::find(class_names.begin(), class_names.end(), label);
  if (it == class_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - class_names.begin());
}

std::vector<int> Dataset::label_indices() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    if (!s.label) {
      out.push_back(-1);
      continue;
    }
    auto idx = class_index(*s.label);
    out.push_back(idx ? static_cast<int>(*idx) : -1);
  }
  return out;
}

std::optional<std::size_t> Dataset::find(const std::string& id) const {
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].id == id) return i;
  return std::nullopt;
}

void Dataset::refresh_classes() {
  std::set<std::string> labels;
  for (const Sample& s : samples)
    if (s.label) labels.insert(*s.label);
  class_names.assign(labels.begin(), labels.end());
}

void Dataset::validate() const {
  std::set<std::string> ids;
  for (const Sample& s : samples) {
    s.validate();
    if (!ids.insert(s.id).second) throw DataError(DataError::Kind::DuplicateId, "duplicate sample id '" + s.id + "'");
    if (s.label && !class_index(*s.label))
      throw DataError(DataError::Kind::Invalid, "sample '" + s.id + "': label not in class list");
  }
  std::set<std::size_t> seen;
  for (const auto& [name, indices] : splits) {
    for (std::size_t i : indices) {
      if (i >= samples.size()) throw DataError(DataError::Kind::Invalid, "split '" + name + "' index out of range");
      if (!seen.insert(i).second) throw DataError(DataError::Kind::Invalid, "splits overlap at index " + std::to_string(i));
    }
  }
}

std::vector<std::size_t> Dataset::split_or_all(const std::string& name) const {
  auto it = splits.find(name);
  if (it != splits.end()) return it->second;
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

void SkeletonSpec::validate() const {
  const std::size_t n = keypoint_names.size();
  if (root >= n || hip_left >= n || hip_right >= n || spine >= n)
    throw DataError(DataError::Kind::Invalid, "skeleton spec references a keypoint out of range");
  if (hip_left == hip_right) throw DataError(DataError::Kind::Invalid, "hip keypoints must differ");
  if (spine == root) throw DataError(DataError::Kind::Invalid, "spine and root must differ");
  // The two alignment axes must not be the same keypoint pair.
  if (std::minmax(hip_left, hip_right) == std::minmax(spine, root))
    throw DataError(DataError::Kind::Invalid, "hip axis and spine axis use the same keypoint pair");
}

Dataset parse_dataset(std::istream& in) {
  Dataset ds;
  std::map<std::string, std::vector<std::size_t>> splits;
  std::set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError(DataError::Kind::Parse, "line " + std::to_string(line) + ": " + e.what(), line);
    }
    Sample s = parse_record(rec, line);
    if (!ids.insert(s.id).second)
      throw DataError(DataError::Kind::DuplicateId, "line " + std::to_string(line) + ": duplicate sample id '" + s.id + "'", line);
    if (rec.contains("split") && rec["split"].is_string())
      splits[rec["split"].get<std::string>()].push_back(ds.samples.size());
    ds.samples.push_back(std::move(s));
  }
  ds.splits = std::move(splits);
  ds.refresh_classes();
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::NotFound, "cannot open dataset '" + path.string() + "'");
  return parse_dataset(in);
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  std::vector<std::string> split_of(dataset.size());
  for (const auto& [name, indices] : dataset.splits)
    for (std::size_t i : indices) split_of[i] = name;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    json rec = record_json(dataset.samples[i]);
    if (!split_of[i].empty()) rec["split"] = split_of[i];
    out << rec.dump() << '\n';
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::NotFound, "cannot write dataset '" + path.string() + "'");
  write_dataset(dataset, out);
}

SkeletonSpec load_skeleton_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::NotFound, "cannot open skeleton spec '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(DataError::Kind::Parse, std::string("skeleton spec: ") + e.what());
  }
  SkeletonSpec spec;
  try {
    spec.keypoint_names = j.at("keypoint_names").get<std::vector<std::string>>();
    auto lookup = [&](const char* field) {
      const std::string name = j.at(field).get<std::string>();
      auto it = std::find(spec.keypoint_names.begin(), spec.keypoint_names.end(), name);
      if (it == spec.keypoint_names.end())
        throw DataError(DataError::Kind::Invalid, std::string("skeleton spec: unknown keypoint '") + name + "' for " + field);
      return static_cast<std::size_t>(it - spec.keypoint_names.begin());
    };
    spec.root = lookup("root");
    spec.hip_left = lookup("hip_left");
    spec.hip_right = lookup("hip_right");
    spec.spine = lookup("spine");
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::Parse, std::string("skeleton spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

Sample view_invariant_transform(const Sample& sample, const SkeletonSpec& spec) {
  if (sample.dims != 3) throw DataError(DataError::Kind::Invalid, "sample '" + sample.id + "': view-invariant transform needs 3-D keypoints");
  spec.validate();
  if (spec.keypoint_names.size() != sample.keypoints)
    throw DataError(DataError::Kind::Invalid, "sample '" + sample.id + "': skeleton spec keypoint count mismatch");

  Sample out = sample;
  for (std::size_t t = 0; t < sample.frames; ++t) {
    const Vec3 root = point3(sample, t, spec.root);
    const Vec3 hip = point3(sample, t, spec.hip_right) - point3(sample, t, spec.hip_left);
    const Vec3 up = point3(sample, t, spec.spine) - root;
    const double hip_len = hip.norm();
    if (hip_len < kDegenerateEpsilon || up.norm() < kDegenerateEpsilon)
      throw DataError(DataError::Kind::Degenerate,
                      "sample '" + sample.id + "' frame " + std::to_string(t) + ": zero-length alignment axis");
    const Vec3 x_axis = hip / hip_len;
    const Vec3 ortho = up - up.dot(x_axis) * x_axis;
    if (ortho.norm() < kDegenerateEpsilon)
      throw DataError(DataError::Kind::Degenerate,
                      "sample '" + sample.id + "' frame " + std::to_string(t) + ": hip and spine axes are collinear");
    const Vec3 y_axis = ortho.normalized();
    const Vec3 z_axis = x_axis.cross(y_axis);

    Eigen::Matrix3d rot;
    rot.row(0) = x_axis.transpose();
    rot.row(1) = y_axis.transpose();
    rot.row(2) = z_axis.transpose();
    for (std::size_t n = 0; n < sample.keypoints; ++n) {
      const Vec3 p = rot * (point3(sample, t, n) - root);
      for (std::size_t d = 0; d < 3; ++d) out.at(t, n, d) = p[static_cast<Eigen::Index>(d)];
    }
  }
  return out;
}

Dataset confidence_filter(const Dataset& dataset, double threshold, ConfidenceAggregate aggregate) {
  Dataset out;
  out.class_names = dataset.class_names;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Sample& s = dataset.samples[i];
    bool pass = true;
    if (s.confidence && !s.confidence->empty()) {
      const auto& c = *s.confidence;
      const double score = aggregate == ConfidenceAggregate::Min
                               ? *std::min_element(c.begin(), c.end())
                               : std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
      pass = score >= threshold;
    }
    if (pass) {
      kept.push_back(i);
      out.samples.push_back(s);
    }
  }
  // Re-index any splits onto the retained samples.
  for (const auto& [name, indices] : dataset.splits) {
    std::vector<std::size_t> remapped;
    for (std::size_t old : indices) {
      auto it = std::lower_bound(kept.begin(), kept.end(), old);
      if (it != kept.end() && *it == old) remapped.push_back(static_cast<std::size_t>(it - kept.begin()));
    }
    out.splits[name] = std::move(remapped);
  }
  return out;
}

Sample resample_length(const Sample& sample, std::size_t target_frames) {
  if (target_frames < 2) throw DataError(DataError::Kind::Invalid, "resample target must be at least 2 frames");
  if (target_frames == sample.frames) return sample;

  Sample out = sample;
  out.frames = target_frames;
  const std::size_t width = sample.keypoints * sample.dims;
  out.positions.assign(target_frames * width, 0.0);
  std::vector<double> conf;
  if (sample.confidence) conf.assign(target_frames * sample.keypoints, 0.0);

  const double scale = static_cast<double>(sample.frames - 1) / static_cast<double>(target_frames - 1);
  for (std::size_t k = 0; k < target_frames; ++k) {
    std::size_t lo;
    double frac;
    if (k + 1 == target_frames) {
      lo = sample.frames - 1;
      frac = 0.0;
    } else {
      const double pos = static_cast<double>(k) * scale;
      lo = std::min(static_cast<std::size_t>(pos), sample.frames - 1);
      frac = pos - static_cast<double>(lo);
    }
    const std::size_t hi = std::min(lo + 1, sample.frames - 1);
    for (std::size_t j = 0; j < width; ++j) {
      const double a = sample.positions[lo * width + j];
      const double b = sample.positions[hi * width + j];
      out.positions[k * width + j] = frac == 0.0 ? a : a + frac * (b - a);
    }
    if (sample.confidence) {
      for (std::size_t n = 0; n < sample.keypoints; ++n) {
        const double a = (*sample.confidence)[lo * sample.keypoints + n];
        const double b = (*sample.confidence)[hi * sample.keypoints + n];
        conf[k * sample.keypoints + n] = frac == 0.0 ? a : a + frac * (b - a);
      }
    }
  }
  if (sample.confidence) out.confidence = std::move(conf);
  return out;
}

Sample normalize_sample(const Sample& sample, std::size_t root) {
  if (root >= sample.keypoints) throw DataError(DataError::Kind::Invalid, "normalize: root index out of range");
  Sample out = sample;
  std::vector<double> center(sample.dims, 0.0), lo(sample.dims, INFINITY), hi(sample.dims, -INFINITY);
  for (std::size_t t = 0; t < sample.frames; ++t)
    for (std::size_t d = 0; d < sample.dims; ++d) center[d] += sample.at(t, root, d);
  for (double& c : center) c /= static_cast<double>(sample.frames);
  for (std::size_t t = 0; t < sample.frames; ++t)
    for (std::size_t n = 0; n < sample.keypoints; ++n)
      for (std::size_t d = 0; d < sample.dims; ++d) {
        lo[d] = std::min(lo[d], sample.at(t, n, d));
        hi[d] = std::max(hi[d], sample.at(t, n, d));
      }
  double extent = 0.0;
  for (std::size_t d = 0; d < sample.dims; ++d) extent = std::max(extent, hi[d] - lo[d]);
  const double scale = extent > kDegenerateEpsilon ? 1.0 / extent : 1.0;
  for (std::size_t t = 0; t < sample.frames; ++t)
    for (std::size_t n = 0; n < sample.keypoints; ++n)
      for (std::size_t d = 0; d < sample.dims; ++d) out.at(t, n, d) = (sample.at(t, n, d) - center[d]) * scale;
  return out;
}

Dataset split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
    throw DataError(DataError::Kind::Invalid, "train fraction must lie in [0, 1]");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  // Small slack so that e.g. 0.7 * 10 floors to 7.
  auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(dataset.size()) + 1e-9));
  n_train = std::min(n_train, dataset.size());
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  Dataset out = dataset;
  out.splits.clear();
  out.splits["train"] = std::move(train);
  out.splits["test"] = std::move(test);
  return out;
}

Dataset preprocess(const Dataset& dataset, const std::optional<SkeletonSpec>& spec, const PrepOptions& options) {
  Dataset out = confidence_filter(dataset, options.threshold, options.aggregate);
  for (Sample& s : out.samples) {
    std::size_t root = 0;
    if (spec) {
      root = spec->root;
      if (s.dims == 3) s = view_invariant_transform(s, *spec);
    }
    if (options.normalize) s = normalize_sample(s, root);
    s = resample_length(s, options.target_len);
  }
  out.validate();
  return out;
}

Eigen::MatrixXd to_sequence(const Sample& sample) {
  const auto rows = static_cast<Eigen::Index>(sample.frames);
  const auto cols = static_cast<Eigen::Index>(sample.feature_dim());
  Eigen::MatrixXd seq(rows, cols);
  for (Eigen::Index t = 0; t < rows; ++t)
    for (Eigen::Index j = 0; j < cols; ++j) seq(t, j) = sample.positions[static_cast<std::size_t>(t * cols + j)];
  return seq;
}

}  // namespace ic

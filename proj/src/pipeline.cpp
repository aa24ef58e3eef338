#include "csar/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "csar/image_io.hpp"
#include "csar/imgproc.hpp"

namespace csar {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- frames

namespace {

bool is_image_path(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".png";
}

}  // namespace

FrameSequence::FrameSequence(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw InputError("input '" + dir.string() + "' is not a directory");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_path(entry.path())) paths_.push_back(entry.path());
  }
  std::sort(paths_.begin(), paths_.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  if (paths_.size() < 2) {
    throw InputError("input '" + dir.string() + "' needs at least two frames, found " + std::to_string(paths_.size()));
  }
  size_ = read_image_size(paths_.front());
  for (const auto& p : paths_) {
    const auto s = read_image_size(p);
    if (s.width != size_.width || s.height != size_.height) {
      throw InputError("frame '" + p.string() + "' is " + std::to_string(s.width) + "x" + std::to_string(s.height) +
                       ", expected " + std::to_string(size_.width) + "x" + std::to_string(size_.height));
    }
  }
}

Frame FrameSequence::load(std::size_t i) const { return read_image(paths_.at(i)); }

std::vector<Frame> load_frames(const fs::path& dir) {
  const FrameSequence seq(dir);
  std::vector<Frame> frames;
  frames.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) frames.push_back(seq.load(i));
  return frames;
}

// ---------------------------------------------------------------- pipeline

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) { config_.validate(); }

Frame Pipeline::prepare_flow_frame(const Frame& enhanced, std::vector<std::string>& warnings) const {
  if (!config_.enhancement.binarize_for_flow) return enhanced;
  try {
    const int t = otsu_threshold(enhanced);
    return binarize(enhanced, t).cast<double>() * 255.0;
  } catch (const DegenerateInputError&) {
    warnings.push_back("frame " + std::to_string(next_index_) + ": single-level frame, binarization skipped");
    return enhanced;
  }
}

std::optional<FrameResult> Pipeline::push(const Frame& frame) {
  const int index = next_index_;
  try {
    require_valid_frame(frame);
    if (prev_enhanced_ && (prev_enhanced_->rows() != frame.rows() || prev_enhanced_->cols() != frame.cols())) {
      throw ParameterError("frame size changed mid-sequence");
    }
    Frame enhanced = unsharp_mask(frame, config_.enhancement.sigma, config_.enhancement.contrast_gain);
    if (!prev_enhanced_) {
      prev_enhanced_ = std::move(enhanced);
      ++next_index_;
      return std::nullopt;
    }

    FrameResult result;
    result.frame_index = index;

    Frame flow_cur = enhanced;
    if (config_.registration.enabled) {
      const RegistrationParams rp{config_.registration.max_features, config_.registration.keep_fraction,
                                  config_.registration.fast_threshold};
      const RigidTransform t = register_frames(*prev_enhanced_, enhanced, rp);
      result.registration = t;
      flow_cur = warp_frame(enhanced, t);
    }

    const Frame flow_prev = prepare_flow_frame(*prev_enhanced_, result.warnings);
    flow_cur = prepare_flow_frame(flow_cur, result.warnings);
    auto flow = process_frame_flow(std::move(state_), flow_prev, flow_cur, config_.flow);
    state_ = std::move(flow.state);
    result.tracked = std::move(flow.tracked);

    const double blob_sigma = config_.blob.smoothing_sigma;
    result.blobs = detect_blobs(blob_sigma > 0.0 ? gaussian_blur(frame, blob_sigma) : frame, config_.blob_filter());
    result.detections = fuse(index, result.tracked, result.blobs);
    std::stable_sort(result.detections.begin(), result.detections.end(), [](const Detection& a, const Detection& b) {
      return std::pair(a.position.x(), a.position.y()) < std::pair(b.position.x(), b.position.y());
    });

    prev_enhanced_ = std::move(enhanced);
    ++next_index_;
    return result;
  } catch (const ParameterError& e) {
    throw ParameterError("frame " + std::to_string(index) + ": " + e.what());
  } catch (const DegenerateInputError& e) {
    throw ProcessingError("frame " + std::to_string(index) + ": " + e.what());
  }
}

std::vector<std::vector<Detection>> run_pipeline(std::span<const Frame> frames, const PipelineConfig& config) {
  if (frames.size() < 2) throw InputError("the pipeline needs at least two frames");
  Pipeline pipeline(config);
  std::vector<std::vector<Detection>> out(frames.size());
  for (const auto& f : frames) {
    if (auto r = pipeline.push(f)) out[r->frame_index] = std::move(r->detections);
  }
  return out;
}

// ---------------------------------------------------------------- records

nlohmann::json detection_record(const Detection& d) {
  nlohmann::json rec;
  rec["frame"] = d.frame_index;
  rec["x"] = d.position.x();
  rec["y"] = d.position.y();
  rec["blob_area"] = d.blob.area;
  rec["circularity"] = d.blob.circularity;
  rec["motion_mag"] = d.motion_magnitude;
  rec["motion_angle_deg"] = d.motion_angle * 180.0 / std::numbers::pi;
  return rec;
}

Detection detection_from_record(const nlohmann::json& rec) {
  try {
    Detection d;
    d.frame_index = rec.at("frame").get<int>();
    d.position = Point(rec.at("x").get<double>(), rec.at("y").get<double>());
    if (rec.contains("blob_area")) d.blob.area = rec.at("blob_area").get<int>();
    if (rec.contains("circularity")) d.blob.circularity = rec.at("circularity").get<double>();
    if (rec.contains("motion_mag")) d.motion_magnitude = rec.at("motion_mag").get<double>();
    if (rec.contains("motion_angle_deg")) d.motion_angle = rec.at("motion_angle_deg").get<double>() * std::numbers::pi / 180.0;
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed detection record: ") + e.what());
  }
}

namespace {

template <typename F>
void for_each_json_line(const fs::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(path.string() + ":" + std::to_string(n) + ": invalid JSON: " + e.what());
    }
    f(rec);
  }
}

}  // namespace

std::vector<Detection> read_detections(const fs::path& path) {
  std::vector<Detection> out;
  for_each_json_line(path, [&](const nlohmann::json& rec) { out.push_back(detection_from_record(rec)); });
  return out;
}

std::vector<TruthFrame> read_ground_truth(const fs::path& path) {
  std::vector<TruthFrame> out;
  for_each_json_line(path, [&](const nlohmann::json& rec) {
    try {
      TruthFrame f;
      f.frame_index = rec.at("frame").get<int>();
      for (const auto& t : rec.at("targets")) {
        f.targets.push_back({t.at("id").get<int>(), Point(t.at("x").get<double>(), t.at("y").get<double>())});
      }
      out.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("malformed ground-truth record in '" + path.string() + "': " + e.what());
    }
  });
  return out;
}

// ---------------------------------------------------------------- evaluation

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["true_positives"] = true_positives;
  j["false_positives"] = false_positives;
  j["false_negatives"] = false_negatives;
  j["zero_detections"] = zero_detections;
  j["match_radius"] = match_radius;
  j["per_frame"] = nlohmann::json::array();
  for (const auto& f : per_frame) {
    j["per_frame"].push_back({{"frame", f.frame_index},
                              {"tp", f.true_positives},
                              {"fp", f.false_positives},
                              {"fn", f.false_negatives}});
  }
  return j;
}

EvalReport evaluate(std::span<const Detection> detections, std::span<const TruthFrame> truth, double match_radius,
                    int min_frame) {
  if (!(match_radius > 0.0)) throw ParameterError("match radius must be positive");
  std::map<int, const TruthFrame*> truth_by_frame;
  for (const auto& t : truth) truth_by_frame[t.frame_index] = &t;
  std::map<int, std::vector<Point>> dets_by_frame;
  for (const auto& d : detections) {
    if (!truth_by_frame.count(d.frame_index)) {
      throw InputError("detection in frame " + std::to_string(d.frame_index) + " has no ground-truth record");
    }
    if (d.frame_index >= min_frame) dets_by_frame[d.frame_index].push_back(d.position);
  }

  EvalReport report;
  report.match_radius = match_radius;
  for (const auto& [frame, tf] : truth_by_frame) {
    if (frame < min_frame) continue;
    auto& dets = dets_by_frame[frame];
    // Order-independent candidate list: distance, then coordinates, then id.
    struct Candidate {
      double dist;
      Point det;
      int truth_id;
      std::size_t det_index;
      std::size_t truth_index;
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      for (std::size_t j = 0; j < tf->targets.size(); ++j) {
        const double dist = (dets[i] - tf->targets[j].center).norm();
        if (dist <= match_radius) candidates.push_back({dist, dets[i], tf->targets[j].id, i, j});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      return std::tuple(a.dist, a.det.x(), a.det.y(), a.truth_id) < std::tuple(b.dist, b.det.x(), b.det.y(), b.truth_id);
    });
    std::vector<bool> det_used(dets.size(), false);
    std::vector<bool> truth_used(tf->targets.size(), false);
    FrameEval fe{frame, 0, 0, 0};
    for (const auto& c : candidates) {
      if (det_used[c.det_index] || truth_used[c.truth_index]) continue;
      det_used[c.det_index] = true;
      truth_used[c.truth_index] = true;
      ++fe.true_positives;
    }
    fe.false_positives = int(dets.size()) - fe.true_positives;
    fe.false_negatives = int(tf->targets.size()) - fe.true_positives;
    report.true_positives += fe.true_positives;
    report.false_positives += fe.false_positives;
    report.false_negatives += fe.false_negatives;
    report.per_frame.push_back(fe);
  }

  const int detected = report.true_positives + report.false_positives;
  const int actual = report.true_positives + report.false_negatives;
  report.zero_detections = detected == 0;
  report.precision = detected > 0 ? double(report.true_positives) / detected : 1.0;
  report.recall = actual > 0 ? double(report.true_positives) / actual : 1.0;
  const double pr = report.precision + report.recall;
  report.f1 = pr > 0.0 ? 2.0 * report.precision * report.recall / pr : 0.0;
  return report;
}

// ---------------------------------------------------------------- annotation

namespace {

void put(Frame& f, long x, long y, double v) {
  if (x >= 0 && y >= 0 && x < f.cols() && y < f.rows()) f(y, x) = v;
}

}  // namespace

Frame annotate(const Frame& frame, std::span<const Detection> detections, std::span<const Blob> blobs,
               std::span<const TrackedPoint> tracked) {
  Frame out = frame;
  for (const auto& b : blobs) {
    const long x0 = std::lround(b.centroid.x() - b.radius);
    const long x1 = std::lround(b.centroid.x() + b.radius);
    const long y0 = std::lround(b.centroid.y() - b.radius);
    const long y1 = std::lround(b.centroid.y() + b.radius);
    for (long x = x0; x <= x1; ++x) {
      put(out, x, y0, 200.0);
      put(out, x, y1, 200.0);
    }
    for (long y = y0; y <= y1; ++y) {
      put(out, x0, y, 200.0);
      put(out, x1, y, 200.0);
    }
  }
  for (const auto& p : tracked) {
    const long x = std::lround(p.position.x());
    const long y = std::lround(p.position.y());
    for (long k = -1; k <= 1; ++k) {
      put(out, x + k, y, 255.0);
      put(out, x, y + k, 255.0);
    }
  }
  for (const auto& d : detections) {
    const long x = std::lround(d.position.x());
    const long y = std::lround(d.position.y());
    for (long dy = -3; dy <= 3; ++dy) {
      for (long dx = -3; dx <= 3; ++dx) put(out, x + dx, y + dy, 255.0);
    }
  }
  return out;
}

}  // namespace csar

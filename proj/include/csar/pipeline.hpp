#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csar/config.hpp"
#include "csar/fusion.hpp"
#include "csar/image_io.hpp"
#include "csar/registration.hpp"
#include "csar/synth.hpp"

namespace csar {

/// Image files of a directory (.pgm / .png) in lexicographic order, with
/// dimensions checked against the first file from headers alone.
class FrameSequence {
public:
  explicit FrameSequence(const std::filesystem::path& dir);

  std::size_t size() const { return paths_.size(); }
  const std::filesystem::path& path(std::size_t i) const { return paths_[i]; }
  Frame load(std::size_t i) const;
  ImageSize frame_size() const { return size_; }

private:
  std::vector<std::filesystem::path> paths_;
  ImageSize size_;
};

/// Loads every frame of a directory; requires at least two.
std::vector<Frame> load_frames(const std::filesystem::path& dir);

struct FrameResult {
  int frame_index = 0;
  std::vector<Detection> detections;  // sorted by (x, y)
  std::vector<Blob> blobs;
  std::vector<TrackedPoint> tracked;
  std::optional<RigidTransform> registration;  // cur -> prev, when enabled
  std::vector<std::string> warnings;
};

/// Streaming change detector. Holds the previous flow frame and the flow
/// state; everything else is per call.
class Pipeline {
public:
  explicit Pipeline(PipelineConfig config);

  /// Feeds the next frame; nullopt for the first frame of the sequence.
  std::optional<FrameResult> push(const Frame& frame);

  const PipelineConfig& config() const { return config_; }
  const FlowState& flow_state() const { return state_; }

private:
  Frame prepare_flow_frame(const Frame& enhanced, std::vector<std::string>& warnings) const;

  PipelineConfig config_;
  int next_index_ = 0;
  std::optional<Frame> prev_enhanced_;
  FlowState state_;
};

/// Detections per frame index; entry 0 is always empty.
std::vector<std::vector<Detection>> run_pipeline(std::span<const Frame> frames, const PipelineConfig& config);

nlohmann::json detection_record(const Detection& d);
Detection detection_from_record(const nlohmann::json& rec);
std::vector<Detection> read_detections(const std::filesystem::path& path);

struct TruthFrame {
  int frame_index = 0;
  std::vector<TargetTruth> targets;
};
std::vector<TruthFrame> read_ground_truth(const std::filesystem::path& path);

struct FrameEval {
  int frame_index = 0;
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
};

struct EvalReport {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 0.0;
  bool zero_detections = false;
  double match_radius = 0.0;
  std::vector<FrameEval> per_frame;

  nlohmann::json to_json() const;
};

/// Greedy nearest-first one-to-one matching within `match_radius`, per
/// frame, over truth frames with index >= min_frame. Detections in frames
/// absent from the truth are an InputError.
EvalReport evaluate(std::span<const Detection> detections, std::span<const TruthFrame> truth,
                    double match_radius, int min_frame = 1);

/// Overlays: tracked points as 3x3 crosses (255), blob squares as outlines
/// (200), detections as filled 7x7 squares (255). Clipped at the borders.
Frame annotate(const Frame& frame, std::span<const Detection> detections, std::span<const Blob> blobs,
               std::span<const TrackedPoint> tracked);

/// 2 for input and parameter errors, 3 for anything raised while processing.
int exit_status_for(const std::exception& e);

/// Command-line entry point; returns the process exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace csar

#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "csar/image.hpp"

namespace csar {

/// Fixed sample points spaced `spacing` apart, at least `margin` pixels
/// inside every border, in row-major order.
struct PointGrid {
  int spacing = 0;
  int margin = 0;
  int frame_width = 0;
  int frame_height = 0;
  int columns = 0;
  int rows = 0;
  std::vector<Eigen::Vector2i> points;
};

PointGrid build_point_grid(int width, int height, int spacing, int margin);

struct FlowSample {
  Point origin = Point::Zero();
  Point target = Point::Zero();
  double magnitude = 0.0;
  double angle = 0.0;  // (-pi, pi]
  bool valid = false;
};

struct LkParams {
  int window_radius = 7;
  int max_iterations = 10;
  int pyramid_levels = 1;
  double min_eigen_factor = 1e-4;  // times window area
  double convergence = 0.01;       // px
};

/// Iterative Lucas-Kanade between one pair of frames. Gradients and pyramid
/// levels are computed once so that many points can be tracked cheaply.
class LucasKanade {
public:
  LucasKanade(const Frame& prev, const Frame& next, const LkParams& params);

  FlowSample track(const Point& origin) const;

  /// Smallest distance a point must keep from every border.
  int required_margin() const { return params_.window_radius + 1; }
  const LkParams& params() const { return params_; }

private:
  struct Level {
    Frame prev;
    Frame next;
    Frame grad_x;
    Frame grad_y;
  };

  Eigen::Vector2d refine(const Level& level, const Point& origin, Eigen::Vector2d guess,
                         bool* ok) const;

  LkParams params_;
  std::vector<Level> levels_;
};

std::vector<FlowSample> lk_flow(const Frame& prev, const Frame& next, std::span<const Point> points,
                                int window_radius, int max_iterations);

/// Euclidean length of the displacement p1 -> p2.
double apparent_movement(const Point& p1, const Point& p2);

/// Full-quadrant direction of p1 -> p2 in (-pi, pi]. Throws
/// DegenerateInputError when the points coincide.
double motion_angle(const Point& p1, const Point& p2);

/// Signed difference a - b wrapped into (-pi, pi].
double circular_difference(double a, double b);

/// Builds a sample from an origin and a tracked target, filling in magnitude and angle.
FlowSample make_flow_sample(const Point& origin, const Point& target, bool valid);

struct NeighborhoodStats {
  double mean_motion = 0.0;
  double mean_angle = 0.0;
  int sample_count = 0;  // valid samples
  int moving_count = 0;  // valid samples with non-zero motion
};

/// Mean magnitude over valid samples and circular mean angle over valid
/// moving ones. nullopt when no sample is valid.
std::optional<NeighborhoodStats> summarize_neighborhood(std::span<const FlowSample> samples);

/// Dense flow over the window_n x window_n block centred on `center`.
/// `flow_at(x, y)` returns the FlowSample of that pixel.
template <typename Accessor>
std::optional<NeighborhoodStats> neighborhood_stats(const Eigen::Vector2i& center, int window_n,
                                                    Accessor&& flow_at) {
  if (window_n < 3 || window_n % 2 == 0) throw ParameterError("neighbourhood size must be odd and >= 3");
  const int half = window_n / 2;
  std::vector<FlowSample> block;
  block.reserve(std::size_t(window_n) * window_n);
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) block.push_back(flow_at(center.x() + dx, center.y() + dy));
  }
  return summarize_neighborhood(block);
}

/// Two-threshold test: the relative magnitude deviation from the
/// neighbourhood exceeds k1 and the normalized circular angle deviation
/// exceeds k2. `epsilon_v` floors the magnitude denominator.
bool select_interesting(const FlowSample& sample, const NeighborhoodStats& stats, double k1,
                        double k2, double epsilon_v = 0.05);

/// Mean of the neighbourhood mean motions; nullopt for an empty list.
std::optional<double> frame_mean_motion(std::span<const NeighborhoodStats> stats);

struct TrackedPoint {
  Point position = Point::Zero();
  int counter = 0;
  double last_motion = 0.0;
  double last_angle = 0.0;
};

struct FlowState {
  std::vector<TrackedPoint> tracked;
  double running_mean = 0.0;  // mean of all per-frame means so far
  int frames_seen = 0;
  double frame_mean = 0.0;  // most recent per-frame mean
  std::optional<PointGrid> grid;
};

/// Incremental mean: ((T - 1) * mean + value) / T.
FlowState update_running_mean(FlowState state, double frame_mean);

/// Counter bookkeeping for points already tracked.
///
/// `current[i]` is this frame's flow at `state.tracked[i]`. A point whose
/// magnitude deviates from the running mean by more than k1 (relative) has
/// its counter reset, any other point counts up. `fresh` points join with
/// counter 0; a fresh point at exactly the position of a tracked one resets
/// that point instead. Points whose counter exceeds k3 are dropped.
FlowState revalidate_tracked(FlowState state, std::span<const FlowSample> current,
                             std::span<const TrackedPoint> fresh, double k1, int k3,
                             double epsilon_v = 0.05);

struct FlowConfig {
  int spacing = 6;        // grid step d
  int neighborhood = 3;   // block size n
  int window_radius = 7;
  int max_iterations = 10;
  int pyramid_levels = 1;
  double k1 = 0.3;
  double k2 = 0.1;
  int k3 = 8;
  double epsilon_v = 0.05;

  void validate() const;
  /// Border distance that keeps every neighbourhood window inside the frame.
  int grid_margin() const;
};

struct FlowFrameResult {
  FlowState state;
  std::vector<TrackedPoint> tracked;
  std::vector<TrackedPoint> interesting;  // selected this frame
  std::vector<FlowSample> grid_samples;   // centre sample per grid point
};

/// One frame of the interesting-point procedure: grid, neighbourhood flow,
/// two-threshold selection, per-frame and running means, revalidation.
FlowFrameResult process_frame_flow(FlowState state, const Frame& prev, const Frame& cur,
                                   const FlowConfig& config);

}  // namespace csar

#include "csar/optical_flow.hpp"

#include <algorithm>
#include <numbers>

#include <Eigen/Dense>

#include "csar/imgproc.hpp"

namespace csar {

PointGrid build_point_grid(int width, int height, int spacing, int margin) {
  if (spacing < 4) throw ParameterError("grid spacing d must be >= 4");
  if (margin < 1) throw ParameterError("grid margin must be >= 1");
  PointGrid grid{spacing, margin, width, height, 0, 0, {}};
  for (int y = margin; y <= height - 1 - margin; y += spacing) ++grid.rows;
  for (int x = margin; x <= width - 1 - margin; x += spacing) ++grid.columns;
  if (grid.rows == 0 || grid.columns == 0) throw ParameterError("point grid is empty after margins");
  grid.points.reserve(std::size_t(grid.rows) * grid.columns);
  for (int j = 0; j < grid.rows; ++j) {
    for (int i = 0; i < grid.columns; ++i) grid.points.emplace_back(margin + i * spacing, margin + j * spacing);
  }
  return grid;
}

namespace {

Frame gradient(const Frame& f, bool along_x) {
  const auto h = f.rows();
  const auto w = f.cols();
  Frame g(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      if (along_x) {
        const auto x0 = std::max<Eigen::Index>(x - 1, 0);
        const auto x1 = std::min<Eigen::Index>(x + 1, w - 1);
        g(y, x) = (f(y, x1) - f(y, x0)) / double(x1 - x0);
      } else {
        const auto y0 = std::max<Eigen::Index>(y - 1, 0);
        const auto y1 = std::min<Eigen::Index>(y + 1, h - 1);
        g(y, x) = (f(y1, x) - f(y0, x)) / double(y1 - y0);
      }
    }
  }
  return g;
}

Frame downsample(const Frame& f) {
  const Frame blurred = gaussian_blur(f, 1.0);
  const auto h = (f.rows() + 1) / 2;
  const auto w = (f.cols() + 1) / 2;
  Frame out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) out(y, x) = blurred(2 * y, 2 * x);
  }
  return out;
}

// Fills `out` with the (2r+1)^2 window of `img` centred at (x0 + fx, y0 + fy),
// bilinearly interpolated with edge clamping.
void extract_patch(const Frame& img, Eigen::Index x0, Eigen::Index y0, double fx, double fy, int r,
                   std::vector<double>& out) {
  const auto w = img.cols();
  const auto h = img.rows();
  const int side = 2 * r + 1;
  out.resize(std::size_t(side) * side);
  const bool inside = x0 - r >= 0 && y0 - r >= 0 && x0 + r + 1 < w && y0 + r + 1 < h;
  const double w00 = (1 - fx) * (1 - fy);
  const double w01 = fx * (1 - fy);
  const double w10 = (1 - fx) * fy;
  const double w11 = fx * fy;
  std::size_t k = 0;
  if (inside) {
    for (int dy = -r; dy <= r; ++dy) {
      const double* row0 = &img(y0 + dy, x0 - r);
      const double* row1 = row0 + w;
      if (fx == 0.0 && fy == 0.0) {
        for (int i = 0; i < side; ++i) out[k++] = row0[i];
      } else {
        for (int i = 0; i < side; ++i) {
          out[k++] = w00 * row0[i] + w01 * row0[i + 1] + w10 * row1[i] + w11 * row1[i + 1];
        }
      }
    }
    return;
  }
  auto at = [&](Eigen::Index y, Eigen::Index x) {
    return img(std::clamp<Eigen::Index>(y, 0, h - 1), std::clamp<Eigen::Index>(x, 0, w - 1));
  };
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const auto y = y0 + dy;
      const auto x = x0 + dx;
      out[k++] = w00 * at(y, x) + w01 * at(y, x + 1) + w10 * at(y + 1, x) + w11 * at(y + 1, x + 1);
    }
  }
}

void split(double v, Eigen::Index& whole, double& frac) {
  const double f = std::floor(v);
  whole = static_cast<Eigen::Index>(f);
  frac = v - f;
}

}  // namespace

LucasKanade::LucasKanade(const Frame& prev, const Frame& next, const LkParams& params) : params_(params) {
  if (prev.rows() != next.rows() || prev.cols() != next.cols()) {
    throw ParameterError("optical flow frames differ in size");
  }
  if (params.window_radius < 1) throw ParameterError("LK window radius must be >= 1");
  if (params.max_iterations < 1) throw ParameterError("LK iteration count must be >= 1");
  if (params.pyramid_levels < 1 || params.pyramid_levels > 4) {
    throw ParameterError("pyramid levels must lie in [1, 4]");
  }
  Frame p = prev;
  Frame n = next;
  for (int l = 0; l < params.pyramid_levels; ++l) {
    if (l > 0) {
      p = downsample(p);
      n = downsample(n);
    }
    levels_.push_back({p, n, gradient(p, true), gradient(p, false)});
  }
}

Eigen::Vector2d LucasKanade::refine(const Level& level, const Point& origin, Eigen::Vector2d guess,
                                    bool* ok) const {
  const int r = params_.window_radius;
  Eigen::Index x0, y0;
  double fx, fy;
  split(origin.x(), x0, fx);
  split(origin.y(), y0, fy);

  thread_local std::vector<double> tmpl, gx, gy, warped;
  extract_patch(level.prev, x0, y0, fx, fy, r, tmpl);
  extract_patch(level.grad_x, x0, y0, fx, fy, r, gx);
  extract_patch(level.grad_y, x0, y0, fx, fy, r, gy);

  double gxx = 0, gxy = 0, gyy = 0;
  for (std::size_t k = 0; k < tmpl.size(); ++k) {
    gxx += gx[k] * gx[k];
    gxy += gx[k] * gy[k];
    gyy += gy[k] * gy[k];
  }
  // Smallest eigenvalue of the symmetric 2x2 structure tensor.
  const double tr = 0.5 * (gxx + gyy);
  const double min_eig = tr - std::sqrt(0.25 * (gxx - gyy) * (gxx - gyy) + gxy * gxy);
  const double area = double(tmpl.size());
  if (!(min_eig >= params_.min_eigen_factor * area)) {
    *ok = false;
    return guess;
  }
  const double det = gxx * gyy - gxy * gxy;

  Eigen::Vector2d v = guess;
  for (int it = 0; it < params_.max_iterations; ++it) {
    Eigen::Index wx, wy;
    double wfx, wfy;
    split(origin.x() + v.x(), wx, wfx);
    split(origin.y() + v.y(), wy, wfy);
    extract_patch(level.next, wx, wy, wfx, wfy, r, warped);
    double bx = 0, by = 0;
    for (std::size_t k = 0; k < tmpl.size(); ++k) {
      const double diff = tmpl[k] - warped[k];
      bx += gx[k] * diff;
      by += gy[k] * diff;
    }
    const Eigen::Vector2d delta((gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det);
    v += delta;
    if (!v.allFinite()) {
      *ok = false;
      return guess;
    }
    if (delta.norm() < params_.convergence) break;
  }
  *ok = true;
  return v;
}

FlowSample LucasKanade::track(const Point& origin) const {
  const auto& base = levels_.front();
  const double w = double(base.prev.cols());
  const double h = double(base.prev.rows());
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  bool ok = false;
  for (int l = int(levels_.size()) - 1; l >= 0; --l) {
    const double scale = std::ldexp(1.0, -l);
    v = refine(levels_[l], origin * scale, v, &ok);
    if (l > 0) v *= 2.0;
  }
  const Point target = origin + v;
  const bool inside = target.x() >= 0.0 && target.y() >= 0.0 && target.x() <= w - 1 && target.y() <= h - 1;
  return make_flow_sample(origin, target, ok && inside);
}

std::vector<FlowSample> lk_flow(const Frame& prev, const Frame& next, std::span<const Point> points,
                                int window_radius, int max_iterations) {
  LkParams params;
  params.window_radius = window_radius;
  params.max_iterations = max_iterations;
  const LucasKanade lk(prev, next, params);
  const double margin = lk.required_margin();
  std::vector<FlowSample> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (p.x() < margin || p.y() < margin || p.x() > double(prev.cols() - 1) - margin ||
        p.y() > double(prev.rows() - 1) - margin) {
      throw ParameterError("flow point closer to the border than the LK window allows");
    }
    out.push_back(lk.track(p));
  }
  return out;
}

double apparent_movement(const Point& p1, const Point& p2) { return (p1 - p2).norm(); }

double motion_angle(const Point& p1, const Point& p2) {
  if (p1 == p2) throw DegenerateInputError("motion angle undefined for coincident points");
  const double a = std::atan2(p2.y() - p1.y(), p2.x() - p1.x());
  return a == -std::numbers::pi ? std::numbers::pi : a;
}

double circular_difference(double a, double b) {
  double d = std::remainder(a - b, 2.0 * std::numbers::pi);
  if (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

FlowSample make_flow_sample(const Point& origin, const Point& target, bool valid) {
  FlowSample s;
  s.origin = origin;
  s.target = target;
  s.valid = valid;
  s.magnitude = apparent_movement(origin, target);
  s.angle = s.magnitude > 0.0 ? motion_angle(origin, target) : 0.0;
  return s;
}

std::optional<NeighborhoodStats> summarize_neighborhood(std::span<const FlowSample> samples) {
  NeighborhoodStats stats;
  double sum = 0.0;
  double sin_sum = 0.0;
  double cos_sum = 0.0;
  for (const auto& s : samples) {
    if (!s.valid) continue;
    ++stats.sample_count;
    sum += s.magnitude;
    if (s.magnitude > 0.0) {
      ++stats.moving_count;
      sin_sum += std::sin(s.angle);
      cos_sum += std::cos(s.angle);
    }
  }
  if (stats.sample_count == 0) return std::nullopt;
  stats.mean_motion = sum / stats.sample_count;
  if (stats.moving_count > 0) {
    const double a = std::atan2(sin_sum, cos_sum);
    stats.mean_angle = a == -std::numbers::pi ? std::numbers::pi : a;
  }
  return stats;
}

bool select_interesting(const FlowSample& sample, const NeighborhoodStats& stats, double k1,
                        double k2, double epsilon_v) {
  if (!sample.valid || stats.sample_count == 0) return false;
  const double motion_dev =
      std::abs((stats.mean_motion - sample.magnitude) / std::max(stats.mean_motion, epsilon_v));
  if (!(motion_dev > k1)) return false;
  // A motionless sample, or a motionless neighbourhood, has no direction to
  // deviate from.
  if (sample.magnitude == 0.0 || stats.moving_count == 0) return false;
  const double angle_dev = std::abs(circular_difference(stats.mean_angle, sample.angle)) / std::numbers::pi;
  return angle_dev > k2;
}

std::optional<double> frame_mean_motion(std::span<const NeighborhoodStats> stats) {
  if (stats.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& s : stats) sum += s.mean_motion;
  return sum / double(stats.size());
}

FlowState update_running_mean(FlowState state, double frame_mean) {
  if (!(frame_mean >= 0.0)) throw ParameterError("frame mean motion must be non-negative");
  ++state.frames_seen;
  const double t = double(state.frames_seen);
  state.running_mean = ((t - 1.0) * state.running_mean + frame_mean) / t;
  state.frame_mean = frame_mean;
  return state;
}

FlowState revalidate_tracked(FlowState state, std::span<const FlowSample> current,
                             std::span<const TrackedPoint> fresh, double k1, int k3, double epsilon_v) {
  if (current.size() != state.tracked.size()) {
    throw ParameterError("revalidation needs one flow sample per tracked point");
  }
  if (k3 < 0) throw ParameterError("counter threshold k3 must be non-negative");
  const double denom = std::max(state.running_mean, epsilon_v);
  for (std::size_t i = 0; i < state.tracked.size(); ++i) {
    auto& p = state.tracked[i];
    const auto& s = current[i];
    if (s.valid) {
      p.last_motion = s.magnitude;
      p.last_angle = s.angle;
    }
    const bool still_interesting = s.valid && std::abs((state.running_mean - s.magnitude) / denom) > k1;
    p.counter = still_interesting ? 0 : p.counter + 1;
  }
  for (const auto& f : fresh) {
    auto it = std::find_if(state.tracked.begin(), state.tracked.end(),
                           [&](const TrackedPoint& p) { return p.position == f.position; });
    if (it != state.tracked.end()) {
      it->counter = 0;
      it->last_motion = f.last_motion;
      it->last_angle = f.last_angle;
    } else {
      TrackedPoint added = f;
      added.counter = 0;
      state.tracked.push_back(added);
    }
  }
  std::erase_if(state.tracked, [k3](const TrackedPoint& p) { return p.counter > k3; });
  return state;
}

void FlowConfig::validate() const {
  if (spacing < 4) throw ParameterError("flow.d must be >= 4");
  if (neighborhood < 3 || neighborhood % 2 == 0) throw ParameterError("flow.n must be odd and >= 3");
  if (window_radius < 1) throw ParameterError("flow.window_radius must be >= 1");
  if (max_iterations < 1) throw ParameterError("flow.max_iterations must be >= 1");
  if (pyramid_levels < 1 || pyramid_levels > 4) throw ParameterError("flow.pyramid_levels must lie in [1, 4]");
  if (!(k1 > 0.0)) throw ParameterError("flow.k1 must be positive");
  if (!(k2 >= 0.0 && k2 <= 1.0)) throw ParameterError("flow.k2 must lie in [0, 1]");
  if (k3 < 0) throw ParameterError("flow.k3 must be non-negative");
  if (!(epsilon_v > 0.0)) throw ParameterError("flow.epsilon_v must be positive");
}

int FlowConfig::grid_margin() const { return window_radius + 1 + neighborhood / 2; }

FlowFrameResult process_frame_flow(FlowState state, const Frame& prev, const Frame& cur,
                                   const FlowConfig& config) {
  config.validate();
  if (prev.rows() != cur.rows() || prev.cols() != cur.cols()) {
    throw ParameterError("flow frames differ in size");
  }
  const int w = int(cur.cols());
  const int h = int(cur.rows());
  if (!state.grid || state.grid->frame_width != w || state.grid->frame_height != h ||
      state.grid->spacing != config.spacing) {
    state.grid = build_point_grid(w, h, config.spacing, config.grid_margin());
  }
  const PointGrid& grid = *state.grid;

  LkParams lk_params;
  lk_params.window_radius = config.window_radius;
  lk_params.max_iterations = config.max_iterations;
  lk_params.pyramid_levels = config.pyramid_levels;
  const LucasKanade lk(prev, cur, lk_params);
  auto flow_at = [&](int x, int y) { return lk.track(Point(x, y)); };

  FlowFrameResult result;
  std::vector<NeighborhoodStats> stats_list;
  const int center_index = (config.neighborhood * config.neighborhood) / 2;
  std::vector<FlowSample> block;
  for (const auto& g : grid.points) {
    block.clear();
    const int half = config.neighborhood / 2;
    for (int dy = -half; dy <= half; ++dy) {
      for (int dx = -half; dx <= half; ++dx) block.push_back(flow_at(g.x() + dx, g.y() + dy));
    }
    const FlowSample& center = block[center_index];
    result.grid_samples.push_back(center);
    const auto stats = summarize_neighborhood(block);
    if (!stats) continue;
    stats_list.push_back(*stats);
    if (select_interesting(center, *stats, config.k1, config.k2, config.epsilon_v)) {
      result.interesting.push_back({Point(g.x(), g.y()), 0, center.magnitude, center.angle});
    }
  }

  if (const auto vbar = frame_mean_motion(stats_list)) state = update_running_mean(std::move(state), *vbar);

  if (state.frames_seen >= 1) {
    // Tracked points sit on grid points; anything else gets its own solve.
    std::vector<FlowSample> current;
    current.reserve(state.tracked.size());
    const double margin = grid.margin;
    for (const auto& p : state.tracked) {
      const int i = int(std::lround((p.position.x() - grid.margin) / grid.spacing));
      const int j = int(std::lround((p.position.y() - grid.margin) / grid.spacing));
      const bool on_grid = i >= 0 && j >= 0 && i < grid.columns && j < grid.rows &&
                           p.position == Point(grid.points[j * grid.columns + i].cast<double>());
      if (on_grid) {
        current.push_back(result.grid_samples[std::size_t(j) * grid.columns + i]);
      } else if (p.position.x() >= margin && p.position.y() >= margin && p.position.x() <= w - 1 - margin &&
                 p.position.y() <= h - 1 - margin) {
        current.push_back(lk.track(p.position));
      } else {
        current.push_back(FlowSample{p.position, p.position, 0.0, 0.0, false});
      }
    }
    state = revalidate_tracked(std::move(state), current, result.interesting, config.k1, config.k3,
                               config.epsilon_v);
  }
  result.tracked = state.tracked;
  result.state = std::move(state);
  return result;
}

}  // namespace csar

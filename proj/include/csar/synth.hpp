#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "csar/image.hpp"
#include "json.hpp"

namespace csar {

enum class ShapeKind { Rect, Disk };

/// Axis-aligned rectangle or disk (width == height == diameter), in scene
/// coordinates before rotation.
struct Shape {
  ShapeKind kind = ShapeKind::Rect;
  double width = 1.0;
  double height = 1.0;

  /// Radius of the smallest centred circle covering the shape.
  double extent() const;
};

struct StaticObject {
  Shape shape;
  Point position = Point::Zero();  // centre
  double intensity = 0.0;
};

struct MovingTarget {
  int id = 0;
  Shape shape;
  double intensity = 0.0;
  Point start = Point::Zero();
  Point velocity = Point::Zero();  // px / frame

  Point center_at(int t) const { return start + double(t) * velocity; }
};

/// Seeded value-noise texture: mean +- amplitude.
struct BackgroundSpec {
  std::uint64_t texture_seed = 1;
  double mean = 128.0;
  double amplitude = 40.0;
  double cell_size = 12.0;  // px between lattice nodes of the coarse octave
};

struct SceneSpec {
  int width = 256;
  int height = 256;
  int frame_count = 16;
  double rotation_rate = 0.0;  // degrees / frame about the frame centre
  BackgroundSpec background;
  std::vector<StaticObject> static_objects;
  std::vector<MovingTarget> targets;
  std::optional<double> speckle_looks;  // nullopt: no speckle
  std::uint64_t rng_seed = 0;

  Point center() const { return Point((width - 1) / 2.0, (height - 1) / 2.0); }
  double rotation_at(int t) const;  // radians

  /// Throws ParameterError on violated invariants; returns warnings (targets
  /// faster than half the default grid spacing).
  std::vector<std::string> validate() const;
};

SceneSpec scene_from_json(const nlohmann::json& doc);
nlohmann::json scene_to_json(const SceneSpec& spec);
SceneSpec load_scene(const std::filesystem::path& path);

struct TargetTruth {
  int id = 0;
  Point center = Point::Zero();
};

struct RenderedFrame {
  Frame frame;
  std::vector<TargetTruth> targets;
};

/// Scene composed in scene coordinates, rotated about the frame centre by
/// t * rotation_rate. Ground-truth centres go through the same rotation.
RenderedFrame render_clean_frame(const SceneSpec& spec, int t);

/// Deterministic per-frame random stream: a 64-bit Mersenne twister seeded
/// from splitmix64(seed, stream), with in-house uniform, normal (polar
/// method) and gamma (Marsaglia-Tsang) transforms so that draws do not depend
/// on the standard library's distribution implementations.
class RandomStream {
public:
  RandomStream(std::uint64_t seed, std::uint64_t stream);

  double uniform();  // [0, 1)
  double normal();
  double gamma(double shape);  // shape >= 1, unit scale

private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Multiplicative speckle: v * s, s ~ Gamma(L, 1/L), clamped to [0, 255].
Frame apply_speckle(const Frame& frame, double looks, RandomStream& rng);

/// Clean frame plus speckle from the (rng_seed, t) stream when enabled.
RenderedFrame render_frame(const SceneSpec& spec, int t);

nlohmann::json truth_record(int frame_index, const std::vector<TargetTruth>& targets);

/// frame_000000.pgm ... plus ground_truth.jsonl in `out_dir`.
void generate_sequence(const SceneSpec& spec, const std::filesystem::path& out_dir);

}  // namespace csar

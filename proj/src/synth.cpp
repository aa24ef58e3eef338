#include "csar/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <Eigen/Geometry>

#include "csar/image_io.hpp"
#include "csar/optical_flow.hpp"
#include "json_util.hpp"

namespace csar {

namespace fs = std::filesystem;

double Shape::extent() const { return kind == ShapeKind::Disk ? 0.5 * width : 0.5 * std::hypot(width, height); }

double SceneSpec::rotation_at(int t) const { return double(t) * rotation_rate * std::numbers::pi / 180.0; }

namespace {

Point rotate_about(const Point& p, const Point& c, double angle) {
  return Eigen::Rotation2Dd(angle) * (p - c) + c;
}

void check_inside(const SceneSpec& s, const Point& scene_center, double extent, int t,
                  const std::string& what) {
  const Point p = rotate_about(scene_center, s.center(), s.rotation_at(t));
  if (p.x() - extent < 0.0 || p.y() - extent < 0.0 || p.x() + extent > s.width - 1 ||
      p.y() + extent > s.height - 1) {
    throw ParameterError(what + " leaves the frame at t=" + std::to_string(t));
  }
}

void check_shape(const Shape& s, const std::string& what) {
  if (!(s.width > 0.0 && s.height > 0.0)) throw ParameterError(what + ": size must be positive");
  if (s.kind == ShapeKind::Disk && s.width != s.height) {
    throw ParameterError(what + ": disk size must be [d, d]");
  }
}

}  // namespace

std::vector<std::string> SceneSpec::validate() const {
  if (width < kMinFrameSide || height < kMinFrameSide) throw ParameterError("scene must be at least 16x16");
  if (frame_count < 1) throw ParameterError("frame_count must be >= 1");
  if (!std::isfinite(rotation_rate)) throw ParameterError("rotation_rate must be finite");
  if (!(background.cell_size >= 1.0)) throw ParameterError("background.cell_size must be >= 1");
  if (!(background.amplitude >= 0.0)) throw ParameterError("background.amplitude must be >= 0");
  if (speckle_looks && !(*speckle_looks >= 1.0)) throw ParameterError("speckle_looks must be >= 1");

  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < static_objects.size(); ++i) {
    const auto& o = static_objects[i];
    const std::string what = "static_objects[" + std::to_string(i) + "]";
    check_shape(o.shape, what);
    for (int t = 0; t < frame_count; ++t) check_inside(*this, o.position, o.shape.extent(), t, what);
  }
  for (const auto& tg : targets) {
    const std::string what = "target " + std::to_string(tg.id);
    check_shape(tg.shape, what);
    for (int t = 0; t < frame_count; ++t) check_inside(*this, tg.center_at(t), tg.shape.extent(), t, what);
    const double limit = FlowConfig{}.spacing / 2.0;
    if (tg.velocity.norm() > limit) {
      char msg[96];
      std::snprintf(msg, sizeof msg, " moves faster than %g px/frame (half the default grid spacing)", limit);
      warnings.push_back(what + msg);
    }
  }
  return warnings;
}

// ---------------------------------------------------------------- JSON

namespace {

Shape shape_from_json(const nlohmann::json& j, const std::string& where) {
  Shape s;
  std::string kind = "rect";
  detail::read_field(j, "shape", kind, where);
  if (kind == "rect") s.kind = ShapeKind::Rect;
  else if (kind == "disk") s.kind = ShapeKind::Disk;
  else throw InputError(where + ".shape: expected \"rect\" or \"disk\"");
  std::array<double, 2> size{6.0, 6.0};
  detail::read_field(j, "size", size, where);
  s.width = size[0];
  s.height = size[1];
  return s;
}

Point point_from_json(const nlohmann::json& j, const char* key, const std::string& where) {
  std::array<double, 2> p{0.0, 0.0};
  detail::read_field(j, key, p, where);
  return {p[0], p[1]};
}

nlohmann::json shape_fields(const Shape& s) {
  return {{"shape", s.kind == ShapeKind::Rect ? "rect" : "disk"}, {"size", {s.width, s.height}}};
}

}  // namespace

SceneSpec scene_from_json(const nlohmann::json& doc) {
  detail::reject_unknown_keys(doc, "scene", {"width", "height", "frame_count", "rotation_rate", "background",
                                             "static_objects", "targets", "speckle_looks", "rng_seed"});
  SceneSpec s;
  detail::read_field(doc, "width", s.width, "scene");
  detail::read_field(doc, "height", s.height, "scene");
  detail::read_field(doc, "frame_count", s.frame_count, "scene");
  detail::read_field(doc, "rotation_rate", s.rotation_rate, "scene");
  detail::read_field(doc, "rng_seed", s.rng_seed, "scene");

  if (doc.contains("background")) {
    const auto& b = doc.at("background");
    detail::reject_unknown_keys(b, "scene.background", {"texture_seed", "mean", "amplitude", "cell_size"});
    detail::read_field(b, "texture_seed", s.background.texture_seed, "scene.background");
    detail::read_field(b, "mean", s.background.mean, "scene.background");
    detail::read_field(b, "amplitude", s.background.amplitude, "scene.background");
    detail::read_field(b, "cell_size", s.background.cell_size, "scene.background");
  }

  if (doc.contains("speckle_looks")) {
    const auto& l = doc.at("speckle_looks");
    if (l.is_null() || (l.is_string() && l.get<std::string>() == "none")) {
      s.speckle_looks.reset();
    } else if (l.is_number()) {
      s.speckle_looks = l.get<double>();
    } else {
      throw InputError("scene.speckle_looks: expected a number or \"none\"");
    }
  }

  if (doc.contains("static_objects")) {
    const auto& arr = doc.at("static_objects");
    if (!arr.is_array()) throw InputError("scene.static_objects: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "scene.static_objects[" + std::to_string(i) + "]";
      detail::reject_unknown_keys(arr[i], where, {"shape", "position", "size", "intensity"});
      StaticObject o;
      o.shape = shape_from_json(arr[i], where);
      o.position = point_from_json(arr[i], "position", where);
      detail::read_field(arr[i], "intensity", o.intensity, where);
      s.static_objects.push_back(o);
    }
  }

  if (doc.contains("targets")) {
    const auto& arr = doc.at("targets");
    if (!arr.is_array()) throw InputError("scene.targets: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "scene.targets[" + std::to_string(i) + "]";
      detail::reject_unknown_keys(arr[i], where, {"id", "shape", "size", "intensity", "start", "velocity"});
      MovingTarget t;
      t.id = int(i);
      detail::read_field(arr[i], "id", t.id, where);
      t.shape = shape_from_json(arr[i], where);
      detail::read_field(arr[i], "intensity", t.intensity, where);
      t.start = point_from_json(arr[i], "start", where);
      t.velocity = point_from_json(arr[i], "velocity", where);
      s.targets.push_back(t);
    }
  }
  return s;
}

nlohmann::json scene_to_json(const SceneSpec& s) {
  nlohmann::json doc;
  doc["width"] = s.width;
  doc["height"] = s.height;
  doc["frame_count"] = s.frame_count;
  doc["rotation_rate"] = s.rotation_rate;
  doc["background"] = {{"texture_seed", s.background.texture_seed},
                       {"mean", s.background.mean},
                       {"amplitude", s.background.amplitude},
                       {"cell_size", s.background.cell_size}};
  doc["static_objects"] = nlohmann::json::array();
  for (const auto& o : s.static_objects) {
    auto j = shape_fields(o.shape);
    j["position"] = {o.position.x(), o.position.y()};
    j["intensity"] = o.intensity;
    doc["static_objects"].push_back(j);
  }
  doc["targets"] = nlohmann::json::array();
  for (const auto& t : s.targets) {
    auto j = shape_fields(t.shape);
    j["id"] = t.id;
    j["intensity"] = t.intensity;
    j["start"] = {t.start.x(), t.start.y()};
    j["velocity"] = {t.velocity.x(), t.velocity.y()};
    doc["targets"].push_back(j);
  }
  if (s.speckle_looks) doc["speckle_looks"] = *s.speckle_looks;
  else doc["speckle_looks"] = "none";
  doc["rng_seed"] = s.rng_seed;
  return doc;
}

SceneSpec load_scene(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scene spec '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("scene spec '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return scene_from_json(doc);
}

// ---------------------------------------------------------------- rendering

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

// Lattice value in [0, 1) from an integer hash of (seed, octave, i, j).
double lattice_value(std::uint64_t seed, int octave, std::int64_t i, std::int64_t j) {
  std::uint64_t s = seed ^ (std::uint64_t(octave) * 0xD1B54A32D192ED03ULL);
  s ^= std::uint64_t(i) * 0x9E3779B97F4A7C15ULL;
  s = splitmix64(s);
  s ^= std::uint64_t(j) * 0xC2B2AE3D27D4EB4FULL;
  return double(splitmix64(s) >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, int octave, double x, double y, double cell) {
  const double gx = x / cell;
  const double gy = y / cell;
  const double fx = std::floor(gx);
  const double fy = std::floor(gy);
  const auto i = static_cast<std::int64_t>(fx);
  const auto j = static_cast<std::int64_t>(fy);
  const double tx = smoothstep(gx - fx);
  const double ty = smoothstep(gy - fy);
  const double v00 = lattice_value(seed, octave, i, j);
  const double v10 = lattice_value(seed, octave, i + 1, j);
  const double v01 = lattice_value(seed, octave, i, j + 1);
  const double v11 = lattice_value(seed, octave, i + 1, j + 1);
  return (1 - ty) * ((1 - tx) * v00 + tx * v10) + ty * ((1 - tx) * v01 + tx * v11);
}

// Fraction of the unit pixel centred at (px, py) covered by the shape.
double coverage(const Shape& s, const Point& c, double px, double py) {
  if (s.kind == ShapeKind::Rect) {
    const double ox = std::max(0.0, std::min(px + 0.5, c.x() + s.width / 2) - std::max(px - 0.5, c.x() - s.width / 2));
    const double oy = std::max(0.0, std::min(py + 0.5, c.y() + s.height / 2) - std::max(py - 0.5, c.y() - s.height / 2));
    return ox * oy;
  }
  const double r = s.width / 2;
  const double reach = r + 0.75;
  if (std::abs(px - c.x()) > reach || std::abs(py - c.y()) > reach) return 0.0;
  int inside = 0;
  for (int sy = 0; sy < 4; ++sy) {
    for (int sx = 0; sx < 4; ++sx) {
      const double dx = px - 0.375 + 0.25 * sx - c.x();
      const double dy = py - 0.375 + 0.25 * sy - c.y();
      inside += dx * dx + dy * dy <= r * r;
    }
  }
  return inside / 16.0;
}

void paint(Frame& canvas, double pad, const Shape& s, const Point& center, double intensity) {
  const double reach = s.extent() + 1.0;
  const auto x0 = std::max<Eigen::Index>(0, Eigen::Index(std::floor(center.x() + pad - reach)));
  const auto x1 = std::min<Eigen::Index>(canvas.cols() - 1, Eigen::Index(std::ceil(center.x() + pad + reach)));
  const auto y0 = std::max<Eigen::Index>(0, Eigen::Index(std::floor(center.y() + pad - reach)));
  const auto y1 = std::min<Eigen::Index>(canvas.rows() - 1, Eigen::Index(std::ceil(center.y() + pad + reach)));
  for (auto y = y0; y <= y1; ++y) {
    for (auto x = x0; x <= x1; ++x) {
      const double a = coverage(s, center, double(x) - pad, double(y) - pad);
      if (a > 0.0) canvas(y, x) = (1.0 - a) * canvas(y, x) + a * intensity;
    }
  }
}

}  // namespace

RenderedFrame render_clean_frame(const SceneSpec& spec, int t) {
  if (t < 0 || t >= spec.frame_count) throw ParameterError("frame index out of range");

  // The canvas extends past the frame far enough to cover every rotated pixel.
  const double diag = std::hypot(double(spec.width), double(spec.height));
  const double pad = std::ceil((diag - std::min(spec.width, spec.height)) / 2.0) + 2.0;
  const auto cw = Eigen::Index(spec.width + 2 * pad);
  const auto ch = Eigen::Index(spec.height + 2 * pad);

  const auto& bg = spec.background;
  Frame canvas(ch, cw);
  for (Eigen::Index y = 0; y < ch; ++y) {
    for (Eigen::Index x = 0; x < cw; ++x) {
      const double sx = double(x) - pad;
      const double sy = double(y) - pad;
      const double n = 0.65 * value_noise(bg.texture_seed, 0, sx, sy, bg.cell_size) +
                       0.35 * value_noise(bg.texture_seed, 1, sx, sy, bg.cell_size / 2.5);
      canvas(y, x) = std::clamp(bg.mean + bg.amplitude * (2.0 * n - 1.0), 0.0, 255.0);
    }
  }
  for (const auto& o : spec.static_objects) paint(canvas, pad, o.shape, o.position, o.intensity);
  for (const auto& tg : spec.targets) paint(canvas, pad, tg.shape, tg.center_at(t), tg.intensity);

  const double angle = spec.rotation_at(t);
  const Point c = spec.center();
  const Eigen::Rotation2Dd to_scene(-angle);
  RenderedFrame out;
  out.frame.resize(spec.height, spec.width);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Point s = to_scene * (Point(x, y) - c) + c;
      out.frame(y, x) = sample_bilinear_clamped(canvas, s.x() + pad, s.y() + pad);
    }
  }
  out.frame = clamp_intensity(out.frame);
  for (const auto& tg : spec.targets) out.targets.push_back({tg.id, rotate_about(tg.center_at(t), c, angle)});
  return out;
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  const std::uint64_t a = splitmix64(s);
  s ^= stream * 0xA0761D6478BD642FULL + 0xE7037ED1A0B428DBULL;
  engine_.seed(a ^ splitmix64(s));
}

double RandomStream::uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

double RandomStream::normal() {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * f;
  return u * f;
}

double RandomStream::gamma(double shape) {
  if (!(shape >= 1.0)) throw ParameterError("gamma shape must be >= 1");
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

Frame apply_speckle(const Frame& frame, double looks, RandomStream& rng) {
  if (!(looks >= 1.0)) throw ParameterError("speckle looks must be >= 1");
  Frame out(frame.rows(), frame.cols());
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    out.data()[i] = std::clamp(frame.data()[i] * rng.gamma(looks) / looks, 0.0, 255.0);
  }
  return out;
}

RenderedFrame render_frame(const SceneSpec& spec, int t) {
  RenderedFrame r = render_clean_frame(spec, t);
  if (spec.speckle_looks) {
    RandomStream rng(spec.rng_seed, std::uint64_t(t));
    r.frame = apply_speckle(r.frame, *spec.speckle_looks, rng);
  }
  return r;
}

nlohmann::json truth_record(int frame_index, const std::vector<TargetTruth>& targets) {
  nlohmann::json rec;
  rec["frame"] = frame_index;
  rec["targets"] = nlohmann::json::array();
  for (const auto& t : targets) rec["targets"].push_back({{"id", t.id}, {"x", t.center.x()}, {"y", t.center.y()}});
  return rec;
}

void generate_sequence(const SceneSpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw InputError("cannot create '" + out_dir.string() + "': " + ec.message());

  const fs::path truth_path = out_dir / "ground_truth.jsonl";
  std::ofstream truth(truth_path, std::ios::binary);
  if (!truth) throw InputError("cannot write '" + truth_path.string() + "'");
  for (int t = 0; t < spec.frame_count; ++t) {
    const RenderedFrame r = render_frame(spec, t);
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06d.pgm", t);
    write_pgm(out_dir / name, r.frame);
    truth << truth_record(t, r.targets).dump() << '\n';
  }
  if (!truth) throw InputError("failed writing '" + truth_path.string() + "'");
}

}  // namespace csar

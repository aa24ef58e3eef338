#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unistd.h>

#include "csar/error.hpp"
#include "csar/pipeline.hpp"
#include "doctest.h"

using namespace csar;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("csar_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int status;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "csar");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int status = run_cli(int(argv.size()), argv.data(), out, err);
  return {status, out.str(), err.str()};
}

Detection det(int frame, double x, double y) {
  Detection d;
  d.frame_index = frame;
  d.position = Point(x, y);
  d.blob.centroid = Point(x, y);
  return d;
}

TruthFrame truth(int frame, std::initializer_list<Point> centres) {
  TruthFrame t{frame, {}};
  int id = 1;
  for (const auto& c : centres) t.targets.push_back({id++, c});
  return t;
}

// 4x3 8-bit grayscale PNG with values 20 (y * 4 + x).
constexpr unsigned char kTinyPng[] = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52,
    0x00, 0x00, 0x00, 0x04, 0x00, 0x00, 0x00, 0x03, 0x08, 0x00, 0x00, 0x00, 0x00, 0x91, 0x9f, 0xf1,
    0x1a, 0x00, 0x00, 0x00, 0x17, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x60, 0x10, 0xd1, 0xb0,
    0x61, 0x08, 0x48, 0xa9, 0xe8, 0x61, 0x58, 0xb0, 0xe5, 0xc4, 0x1d, 0x00, 0x19, 0x0f, 0x05, 0x29,
    0x75, 0x8d, 0x53, 0x1c, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

SceneSpec tiny_scene(int frames) {
  SceneSpec s;
  s.width = 96;
  s.height = 96;
  s.frame_count = frames;
  s.background = {4, 160.0, 30.0, 12.0};
  s.targets.push_back({1, {ShapeKind::Rect, 6, 6}, 5.0, Point(20, 48), Point(2, 0)});
  s.speckle_looks = 4.0;
  s.rng_seed = 5;
  return s;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config defaults and round trip") {
    const PipelineConfig d;
    CHECK_NOTHROW(d.validate());
    const json doc = config_to_json(d);
    CHECK(config_to_json(config_from_json(doc)) == doc);
    CHECK(config_to_json(config_from_json(json::object())) == doc);
    CHECK(doc.at("flow").at("d") == 6);
    CHECK(doc.at("blob").at("smoothing_sigma") == 1.0);

    json partial = {{"flow", {{"k3", 5}}}};
    const PipelineConfig p = config_from_json(partial);
    CHECK(p.flow.k3 == 5);
    CHECK(p.flow.k1 == d.flow.k1);
  }

  TEST_CASE("config strictness") {
    CHECK_THROWS_AS(config_from_json({{"flw", json::object()}}), InputError);
    CHECK_THROWS_AS(config_from_json({{"flow", {{"kk", 1}}}}), InputError);
    CHECK_THROWS_AS(config_from_json({{"flow", {{"k1", "high"}}}}), InputError);
    CHECK_THROWS_AS(config_from_json({{"flow", {{"n", 4}}}}), ParameterError);
    CHECK_THROWS_AS(config_from_json({{"blob", {{"smoothing_sigma", -1.0}}}}), ParameterError);
    CHECK_THROWS_AS(config_from_json({{"registration", {{"keep_fraction", 0.0}}}}), ParameterError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), InputError);
  }

  TEST_CASE("max_area follows the grid when left open") {
    const PipelineConfig c = config_from_json({{"flow", {{"d", 10}}}, {"blob", {{"max_area", nullptr}}}});
    CHECK(c.blob_filter().max_area == doctest::Approx(std::numbers::pi * 25.0).epsilon(1e-15));
    CHECK(PipelineConfig{}.blob_filter().max_area == doctest::Approx(std::numbers::pi * 64.0).epsilon(1e-15));
  }

  TEST_CASE("PGM round trip and malformed files") {
    TempDir dir("pgm");
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> v(0, 255);
    Frame f(21, 17);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = v(rng);
    write_pgm(dir.path / "a.pgm", f);
    CHECK((read_image(dir.path / "a.pgm") == f).all());
    const ImageSize s = read_image_size(dir.path / "a.pgm");
    CHECK(s.width == 17);
    CHECK(s.height == 21);

    write_text(dir.path / "comment.pgm", std::string("P5\n# made by hand\n2 1\n255\n") + char(7) + char(250));
    const Frame c = read_image(dir.path / "comment.pgm");
    CHECK(c(0, 0) == 7.0);
    CHECK(c(0, 1) == 250.0);

    write_text(dir.path / "short.pgm", "P5\n4 4\n255\nabc");
    CHECK_THROWS_AS(read_image(dir.path / "short.pgm"), InputError);
    write_text(dir.path / "ascii.pgm", "P2\n1 1\n255\n9\n");
    CHECK_THROWS_AS(read_image(dir.path / "ascii.pgm"), InputError);
    write_text(dir.path / "deep.pgm", "P5\n1 1\n65535\nab");
    CHECK_THROWS_AS(read_image(dir.path / "deep.pgm"), InputError);
    CHECK_THROWS_AS(read_image(dir.path / "missing.pgm"), InputError);
  }

  TEST_CASE("PNG decoding") {
    TempDir dir("png");
    std::ofstream(dir.path / "tiny.png", std::ios::binary)
        .write(reinterpret_cast<const char*>(kTinyPng), sizeof kTinyPng);
    const Frame f = read_image(dir.path / "tiny.png");
    REQUIRE(f.rows() == 3);
    REQUIRE(f.cols() == 4);
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 4; ++x) CHECK(f(y, x) == 20.0 * (y * 4 + x));
    }
    CHECK(read_image_size(dir.path / "tiny.png").width == 4);
    write_text(dir.path / "broken.png", std::string(reinterpret_cast<const char*>(kTinyPng), 40));
    CHECK_THROWS_AS(read_image(dir.path / "broken.png"), InputError);
  }

  TEST_CASE("frame directories") {
    TempDir dir("seq");
    const Frame f = Frame::Constant(20, 24, 9.0);
    write_pgm(dir.path / "frame_000002.pgm", f);
    write_pgm(dir.path / "frame_000010.pgm", f);
    write_text(dir.path / "notes.txt", "ignored");
    CHECK_THROWS_AS(FrameSequence(dir.path / "nothing"), InputError);
    {
      const FrameSequence seq(dir.path);
      REQUIRE(seq.size() == 2);
      CHECK(seq.path(0).filename() == "frame_000002.pgm");
      CHECK(seq.frame_size().width == 24);
    }
    write_pgm(dir.path / "frame_000011.pgm", Frame::Constant(20, 25, 9.0));
    CHECK_THROWS_AS(FrameSequence(dir.path), InputError);
    fs::remove(dir.path / "frame_000011.pgm");
    fs::remove(dir.path / "frame_000010.pgm");
    CHECK_THROWS_AS(FrameSequence(dir.path), InputError);
  }

  TEST_CASE("detection records") {
    Detection d = det(4, 10.25, 20.5);
    d.blob.area = 30;
    d.blob.circularity = 1.2;
    d.motion_magnitude = 2.5;
    d.motion_angle = std::numbers::pi / 2;
    const json r = detection_record(d);
    CHECK(r.at("frame") == 4);
    CHECK(r.at("blob_area") == 30);
    CHECK(r.at("motion_angle_deg").get<double>() == doctest::Approx(90.0));
    const Detection back = detection_from_record(r);
    CHECK(back.frame_index == 4);
    CHECK(back.position == d.position);
    CHECK(back.motion_angle == doctest::Approx(d.motion_angle));
    CHECK_THROWS_AS(detection_from_record({{"frame", 1}}), InputError);
  }

  TEST_CASE("evaluation conventions") {
    const std::vector<TruthFrame> gt{truth(0, {Point(5, 5)}), truth(1, {Point(10, 10), Point(50, 50)}),
                                     truth(2, {Point(30, 30)})};
    SUBCASE("perfect") {
      const std::vector<Detection> d{det(1, 10, 10), det(1, 50, 50), det(2, 30, 30)};
      const auto r = evaluate(d, gt, 5.0);
      CHECK(r.precision == 1.0);
      CHECK(r.recall == 1.0);
      CHECK(r.f1 == 1.0);
      CHECK(r.true_positives == 3);
    }
    SUBCASE("nothing detected") {
      const auto r = evaluate({}, gt, 5.0);
      CHECK(r.recall == 0.0);
      CHECK(r.precision == 1.0);
      CHECK(r.zero_detections);
      CHECK(r.false_negatives == 3);
    }
    SUBCASE("two detections for one truth") {
      const std::vector<Detection> d{det(2, 31, 30), det(2, 28, 30)};
      const auto r = evaluate(d, gt, 5.0);
      CHECK(r.true_positives == 1);
      CHECK(r.false_positives == 1);
    }
    SUBCASE("frame 0 is not scored by default") {
      const std::vector<Detection> d{det(0, 5, 5)};
      CHECK(evaluate(d, gt, 5.0).true_positives == 0);
      CHECK(evaluate(d, gt, 5.0, 0).true_positives == 1);
    }
    SUBCASE("radius is inclusive") {
      const std::vector<Detection> d{det(2, 33, 34)};
      CHECK(evaluate(d, gt, 5.0).true_positives == 1);
      CHECK(evaluate(d, gt, 4.999).true_positives == 0);
    }
    SUBCASE("frames missing from the truth") {
      const std::vector<Detection> d{det(9, 1, 1)};
      CHECK_THROWS_AS(evaluate(d, gt, 5.0), InputError);
    }
  }

  TEST_CASE("evaluation ignores detection order") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> pos(0.0, 60.0);
    std::vector<TruthFrame> gt;
    std::vector<Detection> d;
    for (int f = 1; f <= 10; ++f) {
      gt.push_back(truth(f, {Point(pos(rng), pos(rng)), Point(pos(rng), pos(rng))}));
      for (int i = 0; i < 4; ++i) d.push_back(det(f, pos(rng), pos(rng)));
    }
    const json want = evaluate(d, gt, 12.0).to_json();
    for (int i = 0; i < 20; ++i) {
      std::shuffle(d.begin(), d.end(), rng);
      CHECK(evaluate(d, gt, 12.0).to_json() == want);
    }
    for (const char* key : {"precision", "recall", "f1", "true_positives", "false_positives", "false_negatives",
                            "zero_detections", "match_radius", "per_frame"}) {
      CHECK(want.contains(key));
    }
  }

  TEST_CASE("annotation markers") {
    const Frame f = Frame::Constant(40, 40, 50.0);
    Blob b;
    b.centroid = Point(10, 10);
    b.radius = 3.0;
    const std::vector<Blob> blobs{b};
    const std::vector<TrackedPoint> pts{{Point(30, 30), 0, 0, 0}};
    const std::vector<Detection> dets{det(1, 0, 39)};
    const Frame out = annotate(f, dets, blobs, pts);
    CHECK(out(7, 7) == 200.0);    // square corner
    CHECK(out(10, 13) == 200.0);  // right edge
    CHECK(out(10, 10) == 50.0);   // outline only
    CHECK(out(30, 30) == 255.0);
    CHECK(out(29, 30) == 255.0);
    CHECK(out(29, 29) == 50.0);  // cross, not a box
    CHECK(out(39, 3) == 255.0);  // 7x7 clipped at the corner
    CHECK(out(36, 0) == 255.0);
    CHECK(out(35, 0) == 50.0);
    CHECK(out(39, 4) == 50.0);
    CHECK(f(30, 30) == 50.0);
  }

  TEST_CASE("pipeline streaming contract") {
    const SceneSpec s = tiny_scene(6);
    std::vector<Frame> frames;
    for (int t = 0; t < s.frame_count; ++t) frames.push_back(render_frame(s, t).frame);
    const auto all = run_pipeline(frames, PipelineConfig{});
    REQUIRE(all.size() == frames.size());
    CHECK(all[0].empty());
    for (std::size_t t = 1; t < all.size(); ++t) {
      CHECK(std::is_sorted(all[t].begin(), all[t].end(), [](const Detection& a, const Detection& b) {
        return std::pair(a.position.x(), a.position.y()) < std::pair(b.position.x(), b.position.y());
      }));
      for (const auto& d : all[t]) CHECK(d.frame_index == int(t));
    }
    Pipeline p(PipelineConfig{});
    CHECK_FALSE(p.push(frames[0]).has_value());
    CHECK(p.push(frames[1]).has_value());
    CHECK_THROWS_AS(p.push(Frame::Constant(50, 50, 1.0)), ParameterError);
    const std::vector<Frame> one{frames[0]};
    CHECK_THROWS_AS(run_pipeline(one, PipelineConfig{}), InputError);
  }

  TEST_CASE("binarized flow on a flat frame warns instead of failing") {
    PipelineConfig c;
    c.enhancement.binarize_for_flow = true;
    Pipeline p(c);
    const Frame flat = Frame::Constant(64, 64, 120.0);
    p.push(flat);
    const auto r = p.push(flat);
    REQUIRE(r.has_value());
    CHECK_FALSE(r->warnings.empty());
  }
}

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 1 with help on stderr") {
    auto r = cli({});
    CHECK(r.status == 1);
    CHECK(r.out.empty());
    CHECK(r.err.find("detect") != std::string::npos);

    r = cli({"detect", "--output", "/tmp/x"});
    CHECK(r.status == 1);
    CHECK(r.err.find("--input") != std::string::npos);
    CHECK(r.out.empty());

    CHECK(cli({"eval", "--detections", "a"}).status == 1);
    CHECK(cli({"frobnicate"}).status == 1);
    CHECK(cli({"synth", "--spec", "a", "--output", "b", "--bogus"}).status == 1);
  }

  TEST_CASE("help and default config go to stdout") {
    auto r = cli({"--help"});
    CHECK(r.status == 0);
    CHECK(r.out.find("synth") != std::string::npos);
    r = cli({"detect", "--print-default-config"});
    CHECK(r.status == 0);
    CHECK(json::parse(r.out) == config_to_json(PipelineConfig{}));
    CHECK(r.err.empty());
  }

  TEST_CASE("input and parameter errors exit 2") {
    TempDir dir("cli2");
    auto r = cli({"detect", "--input", (dir.path / "none").string(), "--output", (dir.path / "o").string()});
    CHECK(r.status == 2);
    CHECK(r.err.rfind("error: ", 0) == 0);
    CHECK(r.out.empty());

    write_text(dir.path / "bad.json", R"({"flow": {"n": 4}})");
    for (int i = 0; i < 2; ++i) write_pgm(dir.path / ("frame_00000" + std::to_string(i) + ".pgm"), Frame::Constant(32, 32, 1));
    r = cli({"detect", "--input", dir.path.string(), "--config", (dir.path / "bad.json").string(), "--output",
             (dir.path / "o").string()});
    CHECK(r.status == 2);

    write_text(dir.path / "scene.json", R"({"width": 8})");
    CHECK(cli({"synth", "--spec", (dir.path / "scene.json").string(), "--output", (dir.path / "s").string()}).status ==
          2);
    CHECK(cli({"eval", "--detections", "/nonexistent", "--truth", "/nonexistent", "--radius", "3"}).status == 2);
  }

  TEST_CASE("exit status mapping") {
    CHECK(exit_status_for(InputError("x")) == 2);
    CHECK(exit_status_for(ParameterError("x")) == 2);
    CHECK(exit_status_for(ProcessingError("x")) == 3);
    CHECK(exit_status_for(DegenerateInputError("x")) == 3);
    CHECK(exit_status_for(std::runtime_error("x")) == 3);
  }

  TEST_CASE("synth, detect, eval and annotate end to end") {
    TempDir dir("cli_e2e");
    write_text(dir.path / "scene.json", scene_to_json(tiny_scene(8)).dump());
    const auto frames = (dir.path / "frames").string();
    const auto outdir = (dir.path / "out").string();
    auto r = cli({"synth", "--spec", (dir.path / "scene.json").string(), "--output", frames});
    REQUIRE(r.status == 0);
    CHECK(r.out.empty());

    r = cli({"detect", "--input", frames, "--output", outdir, "--annotate"});
    REQUIRE(r.status == 0);
    CHECK(r.out.empty());
    const fs::path jsonl = fs::path(outdir) / "detections.jsonl";
    REQUIRE(fs::exists(jsonl));
    int annotated = 0;
    for (const auto& e : fs::directory_iterator(fs::path(outdir) / "annotated")) annotated += e.is_regular_file();
    CHECK(annotated == 8);

    std::ifstream in(jsonl);
    std::string line;
    std::tuple<int, double, double> last{-1, 0, 0};
    while (std::getline(in, line)) {
      const json rec = json::parse(line);
      for (const char* key : {"frame", "x", "y", "blob_area", "circularity", "motion_mag", "motion_angle_deg"}) {
        CHECK(rec.contains(key));
      }
      const std::tuple<int, double, double> cur{rec["frame"], rec["x"], rec["y"]};
      CHECK(last <= cur);
      last = cur;
    }

    r = cli({"eval", "--detections", jsonl.string(), "--truth", frames + "/ground_truth.jsonl", "--radius", "10"});
    REQUIRE(r.status == 0);
    const json report = json::parse(r.out);
    CHECK(report.at("match_radius") == 10.0);

    const auto ann = (dir.path / "ann").string();
    r = cli({"annotate", "--input", frames, "--detections", jsonl.string(), "--output", ann});
    CHECK(r.status == 0);
    CHECK(fs::exists(fs::path(ann) / "frame_000000.pgm"));

    // Same inputs, same bytes.
    const auto again = (dir.path / "again").string();
    REQUIRE(cli({"detect", "--input", frames, "--output", again}).status == 0);
    CHECK(slurp(jsonl) == slurp(fs::path(again) / "detections.jsonl"));
  }
}

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>

#include "CLI11.hpp"
#include "csar/image_io.hpp"
#include "csar/pipeline.hpp"

namespace csar {

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitProcessing = 3;

fs::path frame_name(int index) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%06d.pgm", index);
  return name;
}

void make_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create '" + dir.string() + "': " + ec.message());
}

int cmd_detect(const fs::path& input, const std::optional<fs::path>& config_path, const fs::path& output,
               bool annotate_flag, std::ostream& err) {
  PipelineConfig config = config_path ? load_config(*config_path) : PipelineConfig{};
  const bool emit_annotated = annotate_flag || config.output.emit_annotated;
  const FrameSequence frames(input);
  make_output_dir(output);
  const fs::path annotated_dir = output / "annotated";
  if (emit_annotated) make_output_dir(annotated_dir);

  const fs::path det_path = output / "detections.jsonl";
  std::ofstream det(det_path, std::ios::binary);
  if (!det) throw InputError("cannot write '" + det_path.string() + "'");

  Pipeline pipeline(config);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame frame = frames.load(i);
    const auto result = pipeline.push(frame);
    if (!result) {
      if (emit_annotated) write_pgm(annotated_dir / frame_name(int(i)), frame);
      continue;
    }
    for (const auto& w : result->warnings) err << "warning: " << w << '\n';
    for (const auto& d : result->detections) det << detection_record(d).dump() << '\n';
    if (emit_annotated) {
      write_pgm(annotated_dir / frame_name(result->frame_index),
                annotate(frame, result->detections, result->blobs, result->tracked));
    }
  }
  if (!det) throw InputError("failed writing '" + det_path.string() + "'");
  return 0;
}

int cmd_synth(const fs::path& spec_path, const fs::path& output, std::ostream& err) {
  const SceneSpec spec = load_scene(spec_path);
  for (const auto& w : spec.validate()) err << "warning: " << w << '\n';
  generate_sequence(spec, output);
  return 0;
}

int cmd_eval(const fs::path& det_path, const fs::path& truth_path, double radius, std::ostream& out) {
  const auto detections = read_detections(det_path);
  const auto truth = read_ground_truth(truth_path);
  out << std::setw(2) << evaluate(detections, truth, radius).to_json() << '\n';
  return 0;
}

int cmd_annotate(const fs::path& input, const fs::path& det_path, const fs::path& output) {
  const FrameSequence frames(input);
  std::map<int, std::vector<Detection>> by_frame;
  for (auto& d : read_detections(det_path)) {
    if (d.frame_index < 0 || std::size_t(d.frame_index) >= frames.size()) {
      throw InputError("detection references frame " + std::to_string(d.frame_index) + " outside the input");
    }
    by_frame[d.frame_index].push_back(d);
  }
  make_output_dir(output);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto it = by_frame.find(int(i));
    const std::span<const Detection> dets = it == by_frame.end() ? std::span<const Detection>{} : it->second;
    write_pgm(output / frame_name(int(i)), annotate(frames.load(i), dets, {}, {}));
  }
  return 0;
}

}  // namespace

int exit_status_for(const std::exception& e) {
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const ParameterError*>(&e)) return kExitInput;
  return kExitProcessing;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Change detection for rotating-platform image sequences", "csar"};
  app.require_subcommand(1);

  fs::path input, output, spec_path, det_path, truth_path;
  std::optional<fs::path> config_path;
  bool annotate_flag = false;
  bool print_config = false;
  double radius = 0.0;

  auto* detect = app.add_subcommand("detect", "Run the detector over a frame directory");
  detect->add_option("--input", input, "Directory of frames");
  detect->add_option("--config", config_path, "Pipeline config JSON");
  detect->add_option("--output", output, "Output directory");
  detect->add_flag("--annotate", annotate_flag, "Write annotated frames");
  detect->add_flag("--print-default-config", print_config, "Print the default config and exit");

  auto* synth = app.add_subcommand("synth", "Render a synthetic scene");
  synth->add_option("--spec", spec_path, "Scene spec JSON")->required();
  synth->add_option("--output", output, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Score detections against ground truth");
  eval->add_option("--detections", det_path, "detections.jsonl")->required();
  eval->add_option("--truth", truth_path, "ground_truth.jsonl")->required();
  eval->add_option("--radius", radius, "Match radius in pixels")->required();

  auto* annot = app.add_subcommand("annotate", "Draw detections onto frames");
  annot->add_option("--input", input, "Directory of frames")->required();
  annot->add_option("--detections", det_path, "detections.jsonl")->required();
  annot->add_option("--output", output, "Output directory")->required();

  try {
    app.parse(argc, argv);
    if (detect->parsed() && !print_config && (input.empty() || output.empty())) {
      throw CLI::RequiredError("detect needs --input and --output");
    }
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (detect->parsed()) {
      if (print_config) {
        out << std::setw(2) << config_to_json(PipelineConfig{}) << '\n';
        return 0;
      }
      return cmd_detect(input, config_path, output, annotate_flag, err);
    }
    if (synth->parsed()) return cmd_synth(spec_path, output, err);
    if (eval->parsed()) return cmd_eval(det_path, truth_path, radius, out);
    return cmd_annotate(input, det_path, output);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_status_for(e);
  }
}

}  // namespace csar

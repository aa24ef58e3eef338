#include "csar/config.hpp"

#include <cmath>
#include <fstream>

#include "json_util.hpp"

namespace csar {

BlobFilterConfig PipelineConfig::blob_filter() const {
  BlobFilterConfig c;
  c.min_area = blob.min_area;
  c.max_area = blob.max_area.value_or(BlobFilterConfig::max_area_for_spacing(flow.spacing));
  c.intensity_lo = blob.intensity_lo;
  c.intensity_hi = blob.intensity_hi;
  c.max_circularity = blob.max_circularity;
  c.connectivity = blob.connectivity;
  return c;
}

void PipelineConfig::validate() const {
  if (!(enhancement.sigma > 0.0 && std::isfinite(enhancement.sigma))) {
    throw ParameterError("enhancement.sigma must be positive");
  }
  if (!(enhancement.contrast_gain >= 1.0)) throw ParameterError("enhancement.contrast_gain must be >= 1");
  if (registration.max_features < 1) throw ParameterError("registration.max_features must be >= 1");
  if (!(registration.keep_fraction > 0.0 && registration.keep_fraction <= 1.0)) {
    throw ParameterError("registration.keep_fraction must lie in (0, 1]");
  }
  if (!(registration.fast_threshold > 0.0)) throw ParameterError("registration.fast_threshold must be positive");
  if (!(blob.smoothing_sigma >= 0.0 && std::isfinite(blob.smoothing_sigma))) {
    throw ParameterError("blob.smoothing_sigma must be >= 0");
  }
  flow.validate();
  blob_filter().validate();
}

PipelineConfig config_from_json(const nlohmann::json& doc) {
  using detail::read_field;
  using detail::reject_unknown_keys;
  reject_unknown_keys(doc, "config", {"enhancement", "registration", "flow", "blob", "output"});
  PipelineConfig c;

  if (doc.contains("enhancement")) {
    const auto& j = doc.at("enhancement");
    reject_unknown_keys(j, "enhancement", {"sigma", "contrast_gain", "binarize_for_flow"});
    read_field(j, "sigma", c.enhancement.sigma, "enhancement");
    read_field(j, "contrast_gain", c.enhancement.contrast_gain, "enhancement");
    read_field(j, "binarize_for_flow", c.enhancement.binarize_for_flow, "enhancement");
  }
  if (doc.contains("registration")) {
    const auto& j = doc.at("registration");
    reject_unknown_keys(j, "registration", {"enabled", "max_features", "keep_fraction", "fast_threshold"});
    read_field(j, "enabled", c.registration.enabled, "registration");
    read_field(j, "max_features", c.registration.max_features, "registration");
    read_field(j, "keep_fraction", c.registration.keep_fraction, "registration");
    read_field(j, "fast_threshold", c.registration.fast_threshold, "registration");
  }
  if (doc.contains("flow")) {
    const auto& j = doc.at("flow");
    reject_unknown_keys(j, "flow", {"d", "n", "window_radius", "max_iterations", "pyramid_levels", "k1", "k2",
                                    "k3", "epsilon_v"});
    read_field(j, "d", c.flow.spacing, "flow");
    read_field(j, "n", c.flow.neighborhood, "flow");
    read_field(j, "window_radius", c.flow.window_radius, "flow");
    read_field(j, "max_iterations", c.flow.max_iterations, "flow");
    read_field(j, "pyramid_levels", c.flow.pyramid_levels, "flow");
    read_field(j, "k1", c.flow.k1, "flow");
    read_field(j, "k2", c.flow.k2, "flow");
    read_field(j, "k3", c.flow.k3, "flow");
    read_field(j, "epsilon_v", c.flow.epsilon_v, "flow");
  }
  if (doc.contains("blob")) {
    const auto& j = doc.at("blob");
    reject_unknown_keys(j, "blob", {"min_area", "max_area", "intensity_lo", "intensity_hi", "max_circularity",
                                    "connectivity", "smoothing_sigma"});
    read_field(j, "min_area", c.blob.min_area, "blob");
    if (j.contains("max_area")) {
      if (j.at("max_area").is_null()) {
        c.blob.max_area.reset();
      } else {
        double v = 0.0;
        read_field(j, "max_area", v, "blob");
        c.blob.max_area = v;
      }
    }
    read_field(j, "intensity_lo", c.blob.intensity_lo, "blob");
    read_field(j, "intensity_hi", c.blob.intensity_hi, "blob");
    read_field(j, "max_circularity", c.blob.max_circularity, "blob");
    read_field(j, "connectivity", c.blob.connectivity, "blob");
    read_field(j, "smoothing_sigma", c.blob.smoothing_sigma, "blob");
  }
  if (doc.contains("output")) {
    const auto& j = doc.at("output");
    reject_unknown_keys(j, "output", {"emit_annotated"});
    read_field(j, "emit_annotated", c.output.emit_annotated, "output");
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json doc;
  doc["enhancement"] = {{"sigma", c.enhancement.sigma},
                        {"contrast_gain", c.enhancement.contrast_gain},
                        {"binarize_for_flow", c.enhancement.binarize_for_flow}};
  doc["registration"] = {{"enabled", c.registration.enabled},
                         {"max_features", c.registration.max_features},
                         {"keep_fraction", c.registration.keep_fraction},
                         {"fast_threshold", c.registration.fast_threshold}};
  doc["flow"] = {{"d", c.flow.spacing},
                 {"n", c.flow.neighborhood},
                 {"window_radius", c.flow.window_radius},
                 {"max_iterations", c.flow.max_iterations},
                 {"pyramid_levels", c.flow.pyramid_levels},
                 {"k1", c.flow.k1},
                 {"k2", c.flow.k2},
                 {"k3", c.flow.k3},
                 {"epsilon_v", c.flow.epsilon_v}};
  doc["blob"] = {{"min_area", c.blob.min_area},
                 {"max_area", c.blob.max_area ? nlohmann::json(*c.blob.max_area) : nlohmann::json(nullptr)},
                 {"intensity_lo", c.blob.intensity_lo},
                 {"intensity_hi", c.blob.intensity_hi},
                 {"max_circularity", c.blob.max_circularity},
                 {"connectivity", c.blob.connectivity},
                 {"smoothing_sigma", c.blob.smoothing_sigma}};
  doc["output"] = {{"emit_annotated", c.output.emit_annotated}};
  return doc;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace csar

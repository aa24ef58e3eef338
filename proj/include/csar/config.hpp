#pragma once

#include <filesystem>
#include <optional>

#include "csar/blob.hpp"
#include "csar/optical_flow.hpp"
#include "json.hpp"

namespace csar {

struct EnhancementConfig {
  double sigma = 2.0;
  double contrast_gain = 2.0;
  bool binarize_for_flow = false;
};

struct RegistrationConfig {
  bool enabled = false;
  int max_features = 500;
  double keep_fraction = 0.25;
  double fast_threshold = 20.0;
};

struct BlobConfig {
  int min_area = 9;
  // nullopt: pi (d/2)^2 from flow.d. The default is that value at d = 16,
  // kept fixed because the tuned grid is much finer than the targets.
  std::optional<double> max_area = BlobFilterConfig::max_area_for_spacing(16);
  double intensity_lo = 0.0;
  double intensity_hi = 125.0;
  double max_circularity = 1.5;
  int connectivity = 8;
  // Gaussian pre-smoothing of the blob-stage input; 0 disables.
  double smoothing_sigma = 1.0;
};

struct OutputConfig {
  bool emit_annotated = false;
};

struct PipelineConfig {
  EnhancementConfig enhancement;
  RegistrationConfig registration;
  FlowConfig flow;
  BlobConfig blob;
  OutputConfig output;

  /// Blob filter with max_area resolved against flow.d.
  BlobFilterConfig blob_filter() const;
  void validate() const;
};

/// Strict reader: unknown keys and wrong types are InputErrors, missing keys
/// keep their defaults, out-of-range values are ParameterErrors.
PipelineConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace csar

#pragma once

#include "mvc/experiments.hpp"
#include "mvc/model.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>

namespace mvc {

/// Replaces bundle fields named in `overrides`: L1, L2, L3, M, Lambda,
/// sigma_trace_sup, sigma_at_zero_norm, A, kappa_max, dissipativity
/// {lambda, L4, R}, kappa_tail {R0, K}. A null dissipativity/kappa_tail removes it.
void apply_assumption_overrides(AssumptionBundle& bundle, const nlohmann::json& overrides);

/// {"name": ..., "params": {key: number, "sigma": number | [numbers]}}
ModelParams model_params_from_json(const nlohmann::json& params);

/// Root layout: {"model": {...}, "assumptions": {...}, "pipeline": 1|2, "experiment": {...}}.
ExperimentConfig experiment_config_from_json(const nlohmann::json& root);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Built-in model plus overrides from a root config.
BuiltinModel model_from_json(const nlohmann::json& root);

nlohmann::json load_json_file(const std::string& path);

/// Reads a CSV point cloud; a non-numeric first line is taken as a header.
PointCloud read_point_cloud_csv(std::istream& in);

} // namespace mvc

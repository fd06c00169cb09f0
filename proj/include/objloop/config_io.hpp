#pragma once

// JSON (de)serialization of scenario and pipeline configuration. Missing keys
// keep their defaults; unknown keys are rejected.

#include <iosfwd>
#include <string>

#include "objloop/pipeline.hpp"
#include "objloop/simulation.hpp"

namespace objloop {

struct RunConfig {
  ScenarioConfig scenario;
  PipelineConfig pipeline;
};

// Nominal-noise rectangle scenario and default pipeline.
RunConfig DefaultRunConfig();

// Document shape: {"scenario": {...}, "pipeline": {...}}. Throws
// Error(kParseError) for malformed JSON and Error(kSchemaError) for unknown or
// mistyped keys.
RunConfig ParseRunConfig(const std::string& text,
                         const RunConfig& base = DefaultRunConfig());
RunConfig LoadRunConfig(const std::string& path,
                        const RunConfig& base = DefaultRunConfig());

std::string RunConfigToJson(const RunConfig& cfg);

}  // namespace objloop

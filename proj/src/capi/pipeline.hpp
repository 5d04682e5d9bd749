// SPDX-License-Identifier: Apache-2.0
//
// Pipeline stages behind lf_run: each reads its inputs from the paths in a
// JSON options object and returns a JSON summary plus CSV tables in memory.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace laborflow::capi {

struct StageResult {
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::pair<std::string, std::string>> tables;  // file name, contents
};

const std::vector<std::string>& stage_names();

/// Rejects unknown stages and option keys, missing required options and
/// input files that do not exist.
void check_stage(const std::string& stage, const nlohmann::json& options);

StageResult run_stage(const std::string& stage, const nlohmann::json& options);

}  // namespace laborflow::capi

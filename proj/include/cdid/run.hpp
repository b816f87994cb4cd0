#pragma once

#include <string>
#include <vector>

#include "cdid/io.hpp"
#include "cdid/types.hpp"

namespace cdid {

struct RequestOutcome {
  std::string label;  // e.g. "request.1 conditional diesel_share"
  bool ok = false;
  std::string error;
  std::vector<std::string> files;
};

struct ResultBundle {
  std::vector<RequestOutcome> requests;
  std::vector<std::string> files;  // everything written, relative to output dir
  std::string manifest_path;
  bool all_ok = true;
};

// Runs every configured request: estimates with bootstrap inference, balance
// tables before/after matching, propensity-score support histograms, optional
// Kaplan-Meier curves, plus a manifest recording config hash, seed and version
// for exact reproducibility. A failing request is recorded and the remaining
// requests still run.
ResultBundle run_experiment(const RunConfig& config);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cdid

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cdid/effects.hpp"
#include "cdid/market_sim.hpp"
#include "cdid/types.hpp"

namespace cdid {

// Flat key = value configuration with dotted section names. Lines starting
// with '#' and blank lines are ignored; later duplicate keys are rejected.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig parse_file(const std::string& path);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Keys sharing a prefix, in file order.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  // Keys never touched by any getter; surfaced as configuration warnings.
  std::vector<std::string> untouched_keys() const;

  // Canonical "key = value" lines sorted by key; input for the config hash.
  std::string canonical_text() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
  mutable std::map<std::string, bool> touched_;
};

struct RequestSpec {
  Outcome outcome = Outcome::DieselShare;
  std::vector<int> months = {1, 2, 3, 4, 5, 6, 7};
  ControlDefinition control = ControlDefinition::AllOtherMakes;
  bool conditional = false;
  bool unconditional = true;
  std::optional<std::string> subgroup_tag;
};

struct RunConfig {
  std::optional<std::string> input_path;
  bool simulate = false;
  bool tolerate_invalid = false;

  MarketSimConfig sim;
  CovariateSpec covariates;
  std::vector<RequestSpec> requests;

  ProbitOptions probit;
  MatchOptions match;
  BootstrapOptions bootstrap;
  std::vector<std::string> german_makes = {"mercedes", "bmw", "opel", "ford"};

  bool km_enabled = false;
  int km_horizon = 24;
  int support_bins = 20;

  std::string output_dir = "out";
  bool match_audit = false;

  std::uint64_t config_hash = 0;
  std::vector<std::string> warnings;

  void validate() const;  // exactly one data source, months in 1..7, ...
};

RunConfig parse_run_config(const std::string& text);
RunConfig parse_run_config_file(const std::string& path);

struct LoadOptions {
  bool tolerate_invalid = false;
};

struct LoadReport {
  long rows = 0;
  long invalid = 0;
  std::vector<std::string> issues;  // "row N: ..." messages
};

// Reads the delimited observation file (comma separated, header row, dot
// decimal). The header must carry the core columns and one column per spec
// covariate; `period` may be replaced by `days_since_disclosure`, which is
// bucketed into 30-day windows. Every row is validated; any invalid row
// rejects the file unless tolerate_invalid is set, in which case bad rows are
// skipped and logged.
std::vector<ObservationRecord> load_observations(const std::string& path,
                                                 const CovariateSpec& spec,
                                                 const LoadOptions& options = {},
                                                 LoadReport* report = nullptr);

// Inverse of load_observations; doubles are written with enough digits to
// round-trip exactly.
void write_observations(const std::string& path, const std::vector<ObservationRecord>& records,
                        const CovariateSpec& spec);

// FNV-1a over the canonical config text.
std::uint64_t fnv1a64(const std::string& text);

}  // namespace cdid

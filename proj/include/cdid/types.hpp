#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cdid {

// Error taxonomy. Everything the library throws derives from Error so the
// runner can attach a failure to the request that produced it and keep going.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};
class ValidationError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class EstimandError : public Error {
 public:
  using Error::Error;
};
// Probit: labels contain a single class.
class DegenerateOutcomeError : public Error {
 public:
  using Error::Error;
};
// Probit: coefficient norm diverged past the configured bound.
class SeparationError : public Error {
 public:
  using Error::Error;
};
class SupportError : public Error {
 public:
  using Error::Error;
};
class MatchingError : public Error {
 public:
  using Error::Error;
};
class InferenceError : public Error {
 public:
  using Error::Error;
};
class SurvivalError : public Error {
 public:
  using Error::Error;
};
class DegenerateVarianceError : public Error {
 public:
  using Error::Error;
};

// One car listing. `covariates` is positionally aligned with the active
// CovariateSpec; raw values stay in natural units (transforms happen in the
// design-matrix step).
struct ObservationRecord {
  std::string id;
  int group = 0;   // 1 = treated make, 0 = control makes
  int period = 0;  // 0 = pre-disclosure month, 1..7 = post months
  int fuel = 0;    // 1 = diesel, 0 = gasoline
  double price = 0.0;
  std::vector<double> covariates;
  std::string emission_standard;
  std::string vehicle_class;
  std::string seller_type;
  std::string make;  // optional; needed only for the non-German control group
  int duration_days = 0;
  bool censored = false;
};

constexpr int kNumPeriods = 8;  // periods 0..7

enum class CovariateKind { Binary, Continuous };

struct CovariateEntry {
  std::string name;
  CovariateKind kind = CovariateKind::Continuous;
  // Continuous variables expand to columns x, x^2, ..., x^degree. Degree 1 is
  // the identity transform. Ignored for binary entries.
  int poly_degree = 1;
};

struct CovariateSpec {
  std::vector<CovariateEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  // Throws ConfigError on duplicate names or degree < 1.
  void validate() const;

  // Total number of design-matrix columns after polynomial expansion.
  std::size_t expanded_size() const;

  int index_of(const std::string& name) const;  // -1 if absent
};

enum class Outcome { DieselShare, AskingPrice };
enum class ControlDefinition { AllOtherMakes, NonGermanMakes };

// Tag predicate: (tag name, category), e.g. ("emission_standard", "euro5").
using SubgroupFilter = std::pair<std::string, std::string>;

struct EstimandRequest {
  Outcome outcome = Outcome::DieselShare;
  int post_period = 1;  // s in 1..7
  ControlDefinition control = ControlDefinition::AllOtherMakes;
  std::optional<SubgroupFilter> subgroup_filter;
  bool conditional = false;

  void validate() const;
};

struct EffectEstimate {
  double point = 0.0;
  double se = 0.0;
  double t_stat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  long n_reference = 0;
  long n_comparison = 0;
  int replications = 0;  // configured bootstrap count
  int discarded = 0;     // replications dropped due to estimator failure
};

// Validates the record-level invariants (period range, binary flags, finite
// nonnegative price, covariate length). Throws ValidationError.
void validate_record(const ObservationRecord& rec, const CovariateSpec& spec);

// Maps a listing's first-online offset (days since disclosure, negative =
// before) onto the period index: 30-day windows, period 0 covers the 30 days
// before disclosure. Returns nullopt outside the sample window.
std::optional<int> period_from_offset(int days_since_disclosure);

}  // namespace cdid

#include "cdid/types.hpp"

#include <set>

namespace cdid {

void CovariateSpec::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (e.name.empty()) throw ConfigError("covariate spec: empty name");
    if (!seen.insert(e.name).second)
      throw ConfigError("covariate spec: duplicate name '" + e.name + "'");
    if (e.kind == CovariateKind::Continuous && e.poly_degree < 1)
      throw ConfigError("covariate spec: polynomial degree < 1 for '" + e.name + "'");
  }
}

std::size_t CovariateSpec::expanded_size() const {
  std::size_t n = 0;
  for (const auto& e : entries)
    n += (e.kind == CovariateKind::Continuous) ? static_cast<std::size_t>(e.poly_degree) : 1u;
  return n;
}

int CovariateSpec::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return static_cast<int>(i);
  return -1;
}

void EstimandRequest::validate() const {
  if (post_period < 1 || post_period > 7)
    throw ConfigError("estimand request: post period must lie in 1..7");
}

void validate_record(const ObservationRecord& rec, const CovariateSpec& spec) {
  if (rec.group != 0 && rec.group != 1)
    throw ValidationError("record '" + rec.id + "': group must be 0 or 1");
  if (rec.fuel != 0 && rec.fuel != 1)
    throw ValidationError("record '" + rec.id + "': fuel must be 0 or 1");
  if (rec.period < 0 || rec.period >= kNumPeriods)
    throw ValidationError("record '" + rec.id + "': period outside 0..7");
  if (!std::isfinite(rec.price) || rec.price < 0.0)
    throw ValidationError("record '" + rec.id + "': price must be finite and >= 0");
  if (rec.duration_days < 0)
    throw ValidationError("record '" + rec.id + "': duration_days must be >= 0");
  if (rec.covariates.size() != spec.size())
    throw ValidationError("record '" + rec.id + "': covariate vector length " +
                          std::to_string(rec.covariates.size()) + " does not match spec length " +
                          std::to_string(spec.size()));
  for (std::size_t i = 0; i < rec.covariates.size(); ++i) {
    const double v = rec.covariates[i];
    if (!std::isfinite(v))
      throw ValidationError("record '" + rec.id + "': non-finite value for field '" +
                            spec.entries[i].name + "'");
    if (spec.entries[i].kind == CovariateKind::Binary && v != 0.0 && v != 1.0)
      throw ValidationError("record '" + rec.id + "': binary field '" + spec.entries[i].name +
                            "' must be 0 or 1");
  }
}

std::optional<int> period_from_offset(int days_since_disclosure) {
  if (days_since_disclosure < 0) {
    // The pre period covers the 30 days right before disclosure.
    return (days_since_disclosure >= -30) ? std::optional<int>(0) : std::nullopt;
  }
  const int p = 1 + days_since_disclosure / 30;
  if (p > 7) return std::nullopt;
  return p;
}

}  // namespace cdid

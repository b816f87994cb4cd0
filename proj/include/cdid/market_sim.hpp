#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdid/types.hpp"

namespace cdid {

// One component of the per-cell quality mixture. Intrinsic quality is a point
// mass at the fuel-specific center, optionally spread uniformly by
// +/- spread/2 around it.
struct QualityComponent {
  std::string name;
  double q_diesel = 0.5;
  double q_gasoline = 0.5;
  double spread = 0.0;
};

// How one observable covariate is generated from intrinsic quality.
//   Linear:    x = intercept + slope * q + Normal(0, noise_sd)
//   Threshold: x = 1[q < cutoff]            (binary, monotone step)
//   Noise:     x = Normal(0, noise_sd)      (carries no information)
struct CovariateLink {
  enum class Kind { Linear, Threshold, Noise };
  std::string name;
  Kind kind = Kind::Linear;
  double intercept = 0.0;
  double slope = 0.0;
  double noise_sd = 0.0;
  double cutoff = 0.5;
};

struct TagDistribution {
  std::vector<std::pair<std::string, double>> categories;  // (label, weight)
};

struct MarketSimConfig {
  // Sorting-model primitives; efficiency condition theta_high*q_new > p_new > q_new.
  double theta_high = 2.0;
  double q_new = 2.0;
  double p_new = 3.0;

  std::vector<QualityComponent> components = {{"base", 0.5, 0.5, 0.0}};
  // Mixture weight of each component per group and period,
  // component_weights[group][period][component]; rows are normalized.
  std::array<std::array<std::vector<double>, kNumPeriods>, 2> component_weights;

  // Quality loss of treated diesel cars in post periods, optionally confined
  // to listings carrying one tag category (e.g. emission_standard = euro5).
  double shock = 0.0;
  std::optional<SubgroupFilter> shock_scope;

  int n_agents = 1000;  // owners per (group, fuel, period) cell
  std::uint64_t seed = 1;

  double price_noise_sd = 0.0;
  std::vector<CovariateLink> links;

  TagDistribution emission_tags = {{{"below_euro5", 0.3}, {"euro5", 0.5}, {"euro6", 0.2}}};
  TagDistribution class_tags = {{{"small", 0.14},
                                 {"compact", 0.38},
                                 {"medium", 0.26},
                                 {"minivan", 0.13},
                                 {"suv", 0.09}}};
  TagDistribution seller_tags = {
      {{"private", 0.10}, {"dealer_warranty", 0.10}, {"dealer_no_warranty", 0.80}}};

  // Listing-duration process (days online) for the survival diagnostics.
  double duration_hazard = 0.15;
  int duration_censor_day = 24;

  // Make labels stamped on records; group 0 draws uniformly from control_makes.
  std::string treated_make = "vw";
  std::vector<std::string> control_makes = {"mercedes", "bmw",     "opel", "ford",
                                            "renault",  "peugeot", "fiat", "toyota"};

  MarketSimConfig() {
    for (auto& group : component_weights)
      for (auto& period : group) period = {1.0};
  }

  // Checks the efficiency condition, quality bounds (including under the
  // shock) and weight shapes. Throws ConfigError before any draw happens.
  void validate() const;

  CovariateSpec covariate_spec() const;  // spec matching the emitted columns
};

// u(q) = theta * (q_new - q) - (p_new - q). Throws Error outside the domain
// 1 <= theta <= theta_high, 0 < q < q_new.
double trade_utility(double theta, double q, const MarketSimConfig& cfg);

// theta* = (p_new - q) / (q_new - q); owners with taste above it trade.
double seller_threshold(double q, const MarketSimConfig& cfg);

// Share of owners of quality-q cars that list them: clamp(1 - H(theta*), 0, 1)
// with H(t) = (t - 1) / (theta_high - 1).
double supply_share(double q, const MarketSimConfig& cfg);

// Competitive used-car price: buyers have taste 1, so P(Q) = Q.
double used_price(double q);

// Draws the synthetic panel: per (group, fuel, period) cell, n_agents owners
// draw intrinsic quality and taste, the shock hits treated-diesel post cells,
// and a listing is emitted iff the utility of trade is positive. Covariates
// derive from intrinsic (pre-shock) quality, so they are valid controls.
// Deterministic given the seed; cells use independent derived streams.
std::vector<ObservationRecord> simulate_panel(const MarketSimConfig& cfg);

}  // namespace cdid

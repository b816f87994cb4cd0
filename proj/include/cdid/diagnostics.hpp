#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdid/types.hpp"

namespace cdid {

// 100 * |mean_A - mean_B| / sqrt((Var_A + Var_B) / 2). Sample variance (n-1)
// for continuous variables, p(1-p) for binary ones. Values above 20 are
// conventionally "large". Zero pooled variance with equal means returns 0;
// with unequal means it throws DegenerateVarianceError.
double standardized_difference(std::span<const double> sample_a, std::span<const double> sample_b,
                               CovariateKind kind = CovariateKind::Continuous);

double standardized_difference_from_moments(double mean_a, double var_a, double mean_b,
                                            double var_b);

struct BalanceRow {
  std::string name;
  double mean_ref = 0.0;
  double mean_comp = 0.0;
  double sd = 0.0;          // standardized difference
  bool large = false;       // SD > 20
  bool above_target = false;  // SD > 10, the post-matching target
  std::optional<std::string> error;
};

// Standardized difference per raw covariate between a reference and a
// comparison sample. Without weights both sides use raw moments; with weights
// (aligned to comp_rows, normalized internally) the comparison side uses
// weight-adjusted moments, which is how post-matching balance is measured.
std::vector<BalanceRow> balance_table(const std::vector<ObservationRecord>& records,
                                      std::span<const int> ref_rows,
                                      std::span<const int> comp_rows, const CovariateSpec& spec,
                                      std::span<const double> comp_weights = {});

struct SupportHistogram {
  int bins = 0;
  double threshold = 0.0;  // trimming threshold: max comparison score
  std::vector<long> ref_counts;
  std::vector<long> comp_counts;
};

// Equal-width bins on [0, 1]; scores of exactly 1 land in the last bin.
SupportHistogram support_histogram(std::span<const double> ref_scores,
                                   std::span<const double> comp_scores, int bins);

struct SurvivalCurve {
  std::vector<int> times;       // event days, ascending
  std::vector<double> survival; // S(t) right after the day's events
  std::vector<long> at_risk;
  std::vector<long> events;

  // Step-function evaluation; S = 1 before the first event day.
  double at(int day) const;
};

// Product-limit estimator over the first `horizon` days online. Durations
// beyond the horizon are censored at the horizon. Ties between events and
// censorings on the same day count the events first.
SurvivalCurve kaplan_meier(std::span<const int> durations, std::span<const char> censored,
                           int horizon = 24);

}  // namespace cdid

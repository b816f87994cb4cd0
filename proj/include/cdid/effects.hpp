#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdid/design.hpp"
#include "cdid/matching.hpp"
#include "cdid/probit.hpp"
#include "cdid/types.hpp"

namespace cdid {

struct CellMeans {
  double m11 = 0.0;  // G=1, T=s
  double m10 = 0.0;  // G=1, T=0
  double m01 = 0.0;  // G=0, T=s
  double m00 = 0.0;  // G=0, T=0
  bool adjusted = false;  // matched/bias-adjusted rather than raw
};

inline double did_point(const CellMeans& m) { return (m.m11 - m.m10) - (m.m01 - m.m00); }

enum class CiKind { Normal, Percentile };

struct BootstrapOptions {
  int replications = 499;
  std::uint64_t seed = 1;
  int workers = 1;
  CiKind ci = CiKind::Normal;
  double discard_threshold = 0.10;  // failure share above which inference aborts
};

struct EffectsOptions {
  ProbitOptions probit;
  MatchOptions match;
  bool standardize = true;
  std::vector<std::string> german_makes = {"mercedes", "bmw", "opel", "ford"};
};

// Diagnostics from one conditional estimation, one entry per matched
// comparison cell in the order (1,s), (0,s), (0,0).
struct ComparisonDiagnostics {
  std::string cell;
  double radius = 0.0;
  int dropped = 0;
  int fallback = 0;
  bool probit_converged = false;
  int probit_iterations = 0;
  bool adjusted = false;
  std::optional<MatchResult> match;            // filled on request (audit)
  std::vector<double> aggregate_comp_weights;  // for post-matching balance
  std::vector<int> comp_rows;
  std::vector<int> on_support_ref_rows;
  std::vector<double> ref_scores;   // fitted propensity scores (kept only
  std::vector<double> comp_scores;  // when keep_matches is set)
  std::vector<std::string> design_names;       // expanded design columns
  Eigen::VectorXd coefficients;                // probit, intercept first
  Eigen::VectorXd average_marginal_effects;    // one per design column
};

struct ConditionalDiagnostics {
  std::vector<ComparisonDiagnostics> comparisons;
  bool keep_matches = false;  // set before the call to retain MatchResults
};

// Raw-cell-mean difference-in-differences: (m11 - m10) - (m01 - m00).
CellMeans unconditional_means(const std::vector<ObservationRecord>& records,
                              std::span<const int> rows, const EstimandRequest& request,
                              const EffectsOptions& opts);
double unconditional_effect(const std::vector<ObservationRecord>& records,
                            std::span<const int> rows, const EstimandRequest& request,
                            const EffectsOptions& opts);

// Matched difference-in-differences: m10 is the raw reference-cell mean; each
// other cell mean is a bias-adjusted matched mean re-weighted toward the
// reference cell's covariate distribution via a probit score of
// reference-vs-comparison membership, support trimming and the radius rule.
CellMeans conditional_means(const std::vector<ObservationRecord>& records,
                            std::span<const int> rows, const EstimandRequest& request,
                            const CovariateSpec& spec, const EffectsOptions& opts,
                            ConditionalDiagnostics* diag = nullptr);
double conditional_effect(const std::vector<ObservationRecord>& records,
                          std::span<const int> rows, const EstimandRequest& request,
                          const CovariateSpec& spec, const EffectsOptions& opts,
                          ConditionalDiagnostics* diag = nullptr);

// A point estimator over (records, rows); what the bootstrap re-runs.
using PointEstimator =
    std::function<double(const std::vector<ObservationRecord>&, std::span<const int>)>;

// Nonparametric bootstrap stratified by the four (G,T) cells: each replication
// resamples observations with replacement within every cell, preserving cell
// sizes, and re-runs the full estimator (probit refit and radius included).
// Replication r draws from an RNG stream derived from (seed, r), so the result
// is bit-identical however replications are scheduled across workers. Failed
// replications are discarded and counted; above discard_threshold the whole
// inference fails with InferenceError.
EffectEstimate bootstrap_inference(const std::vector<ObservationRecord>& records,
                                   std::span<const int> rows, const EstimandRequest& request,
                                   const PointEstimator& estimator, const BootstrapOptions& boot,
                                   const EffectsOptions& opts);

struct SubgroupCell {
  std::optional<EffectEstimate> estimate;
  std::string warning;  // set when the cell was skipped
};

struct SubgroupRow {
  std::string category;
  std::vector<SubgroupCell> by_month;
};

struct SubgroupTable {
  std::string tag;
  std::vector<int> months;
  std::vector<SubgroupRow> rows;
};

// One estimate per category of the partition tag and per requested month,
// in the layout of the effects-by-month tables. Categories whose cells are
// empty are skipped with a warning entry instead of failing the table.
SubgroupTable subgroup_effects(const std::vector<ObservationRecord>& records,
                               std::span<const int> rows, const EstimandRequest& base_request,
                               std::span<const int> months, const std::string& partition_tag,
                               const CovariateSpec& spec, const EffectsOptions& opts,
                               const BootstrapOptions& boot);

// Significance stars at the 1/5/10% levels from a two-sided normal test.
const char* significance_stars(double t_stat);

}  // namespace cdid

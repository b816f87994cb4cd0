#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "cdid/types.hpp"

namespace cdid {

enum class Kernel { Triangular, InverseDistance };

struct MatchOptions {
  Kernel kernel = Kernel::Triangular;
  double eta = 1e-9;           // keeps boundary weights strictly positive
  double radius_floor = 1e-12; // radius when every NN distance is zero
  double prune_tol = 1e-9;     // collinearity tolerance of the adjustment regression
};

struct MatchWeight {
  int comparison = 0;
  double weight = 0.0;
};

struct MatchResult {
  double radius = 0.0;
  // Per reference observation: weights over comparison indices, summing to 1.
  // Off-support references carry an empty list.
  std::vector<std::vector<MatchWeight>> weights;
  std::vector<char> on_support;
  int dropped_count = 0;
  int fallback_count = 0;  // references matched to a nearest neighbor outside the radius
};

// Common-support trimming: a reference observation is dropped exactly when its
// score strictly exceeds the highest comparison score (a score equal to the
// maximum is kept). Throws SupportError on an empty comparison set.
std::vector<char> trim_support(std::span<const double> ref_scores,
                               std::span<const double> comp_scores);

// |score - nearest comparison score| per on-support reference, the distances
// produced by standard one-nearest-neighbor matching.
std::vector<double> nn_distances(std::span<const double> ref_scores,
                                 std::span<const double> comp_scores,
                                 std::span<const char> on_support);

// 0.9 times the 0.9th quantile of the nearest-neighbor distances under the
// nearest-rank convention (ascending sort, 1-based index ceil(0.9 n)), floored
// at radius_floor so exact score ties still match. Throws MatchingError on
// empty input.
double compute_radius(std::span<const double> distances, double radius_floor = 1e-12);

// Matches each on-support reference to every comparison within the radius,
// weighting by (1 - d/r) + eta (triangular, default) or 1/(d/r + eta), then
// normalizing per reference. A reference with an empty radius neighborhood
// falls back to its nearest neighbor(s): ties split the weight equally.
MatchResult radius_match(std::span<const double> ref_scores, std::span<const double> comp_scores,
                         double radius, const MatchOptions& opts = {},
                         std::span<const char> on_support = {});

struct AdjustedMean {
  double value = 0.0;             // bias-adjusted matched mean
  double raw_matched_mean = 0.0;  // convex combination of comparison outcomes
  bool adjusted = false;          // false: regression failed, value == raw mean
};

// Weighted matched mean plus the regression correction for residual covariate
// imbalance: fits comparison outcomes on comparison covariates with the
// aggregated matching weights and shifts the mean by b' (x_ref - x_w,comp).
// A rank failure after pruning reports the raw mean with adjusted = false.
AdjustedMean bias_adjusted_mean(const MatchResult& match, std::span<const double> comp_outcomes,
                                const Eigen::MatrixXd& comp_covariates,
                                const Eigen::VectorXd& ref_covariate_means,
                                double prune_tol = 1e-9);

}  // namespace cdid

#include "cdid/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdid/probit.hpp"

namespace cdid {

std::vector<char> trim_support(std::span<const double> ref_scores,
                               std::span<const double> comp_scores) {
  if (comp_scores.empty()) throw SupportError("trim_support: empty comparison set");
  const double max_comp = *std::max_element(comp_scores.begin(), comp_scores.end());
  std::vector<char> flags(ref_scores.size());
  for (std::size_t i = 0; i < ref_scores.size(); ++i)
    flags[i] = ref_scores[i] > max_comp ? 0 : 1;
  return flags;
}

namespace {

// Comparison scores sorted with their original indices.
struct SortedScores {
  std::vector<double> values;
  std::vector<int> index;

  explicit SortedScores(std::span<const double> scores) {
    index.resize(scores.size());
    std::iota(index.begin(), index.end(), 0);
    std::stable_sort(index.begin(), index.end(),
                     [&](int a, int b) { return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)]; });
    values.reserve(scores.size());
    for (const int j : index) values.push_back(scores[static_cast<std::size_t>(j)]);
  }
};

double nearest_distance(const SortedScores& comp, double p) {
  const auto it = std::lower_bound(comp.values.begin(), comp.values.end(), p);
  double best = std::numeric_limits<double>::infinity();
  if (it != comp.values.end()) best = std::min(best, *it - p);
  if (it != comp.values.begin()) best = std::min(best, p - *(it - 1));
  return best;
}

}  // namespace

std::vector<double> nn_distances(std::span<const double> ref_scores,
                                 std::span<const double> comp_scores,
                                 std::span<const char> on_support) {
  if (comp_scores.empty()) throw MatchingError("nn_distances: empty comparison set");
  const SortedScores comp(comp_scores);
  std::vector<double> out;
  out.reserve(ref_scores.size());
  for (std::size_t i = 0; i < ref_scores.size(); ++i) {
    if (!on_support.empty() && !on_support[i]) continue;
    out.push_back(nearest_distance(comp, ref_scores[i]));
  }
  return out;
}

double compute_radius(std::span<const double> distances, double radius_floor) {
  if (distances.empty()) throw MatchingError("compute_radius: no nearest-neighbor distances");
  std::vector<double> sorted(distances.begin(), distances.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(0.9 * static_cast<double>(n)));  // 1-based nearest rank
  const double q = sorted[std::max<std::size_t>(rank, 1) - 1];
  return std::max(0.9 * q, radius_floor);
}

MatchResult radius_match(std::span<const double> ref_scores, std::span<const double> comp_scores,
                         double radius, const MatchOptions& opts,
                         std::span<const char> on_support) {
  if (comp_scores.empty()) throw MatchingError("radius_match: empty comparison pool");
  if (!(radius > 0.0)) throw MatchingError("radius_match: radius must be positive");
  const SortedScores comp(comp_scores);

  MatchResult result;
  result.radius = radius;
  result.weights.resize(ref_scores.size());
  result.on_support.assign(ref_scores.size(), 1);

  for (std::size_t i = 0; i < ref_scores.size(); ++i) {
    if (!on_support.empty() && !on_support[i]) {
      result.on_support[i] = 0;
      ++result.dropped_count;
      continue;
    }
    const double p = ref_scores[i];
    // Membership is |p - c| <= radius exactly; the binary-search window is
    // widened by one element each side because p - radius rounds.
    auto lo = std::lower_bound(comp.values.begin(), comp.values.end(), p - radius);
    auto hi = std::upper_bound(comp.values.begin(), comp.values.end(), p + radius);
    while (lo != comp.values.begin() && std::fabs(*(lo - 1) - p) <= radius) --lo;
    while (hi != comp.values.end() && std::fabs(*hi - p) <= radius) ++hi;

    auto& weights = result.weights[i];
    double sum = 0.0;
    for (auto it = lo; it != hi; ++it) {
      const double d = std::fabs(*it - p);
      if (d > radius) continue;
      const double w = (opts.kernel == Kernel::Triangular) ? (1.0 - d / radius) + opts.eta
                                                           : 1.0 / (d / radius + opts.eta);
      const auto pos = static_cast<std::size_t>(it - comp.values.begin());
      weights.push_back({comp.index[pos], w});
      sum += w;
    }
    if (!weights.empty()) {
      for (auto& mw : weights) mw.weight /= sum;
    } else {
      // Nearest-neighbor fallback; exact ties share the weight equally.
      ++result.fallback_count;
      const double best = nearest_distance(comp, p);
      auto l2 = std::lower_bound(comp.values.begin(), comp.values.end(), p - best);
      auto h2 = std::upper_bound(comp.values.begin(), comp.values.end(), p + best);
      while (l2 != comp.values.begin() && std::fabs(*(l2 - 1) - p) <= best) --l2;
      while (h2 != comp.values.end() && std::fabs(*h2 - p) <= best) ++h2;
      std::size_t ties = 0;
      for (auto it = l2; it != h2; ++it)
        if (std::fabs(*it - p) == best) ++ties;
      for (auto it = l2; it != h2; ++it) {
        if (std::fabs(*it - p) != best) continue;
        const auto pos = static_cast<std::size_t>(it - comp.values.begin());
        weights.push_back({comp.index[pos], 1.0 / static_cast<double>(ties)});
      }
    }
  }
  return result;
}

AdjustedMean bias_adjusted_mean(const MatchResult& match, std::span<const double> comp_outcomes,
                                const Eigen::MatrixXd& comp_covariates,
                                const Eigen::VectorXd& ref_covariate_means, double prune_tol) {
  const std::size_t n_comp = comp_outcomes.size();
  if (comp_covariates.rows() != static_cast<Eigen::Index>(n_comp))
    throw Error("bias_adjusted_mean: covariate rows do not match outcomes");
  if (comp_covariates.cols() != ref_covariate_means.size())
    throw Error("bias_adjusted_mean: covariate width does not match reference means");

  std::size_t n_on = 0;
  for (const char f : match.on_support) n_on += f ? 1 : 0;
  if (n_on == 0) throw MatchingError("bias_adjusted_mean: no on-support references");

  // Raw matched mean and aggregated comparison weights (summing to 1).
  std::vector<double> agg(n_comp, 0.0);
  double raw = 0.0;
  for (std::size_t i = 0; i < match.weights.size(); ++i) {
    if (!match.on_support[i]) continue;
    for (const auto& mw : match.weights[i]) {
      raw += mw.weight * comp_outcomes[static_cast<std::size_t>(mw.comparison)];
      agg[static_cast<std::size_t>(mw.comparison)] += mw.weight;
    }
  }
  raw /= static_cast<double>(n_on);
  for (double& w : agg) w /= static_cast<double>(n_on);

  // The matched mean is a convex combination of comparison outcomes.
  {
    const auto [lo, hi] = std::minmax_element(comp_outcomes.begin(), comp_outcomes.end());
    const double slack = 1e-9 * std::max(1.0, std::fabs(*hi - *lo));
    if (raw < *lo - slack || raw > *hi + slack)
      throw Error("bias_adjusted_mean: matched mean escaped the comparison outcome range");
  }

  AdjustedMean out;
  out.raw_matched_mean = raw;
  out.value = raw;
  out.adjusted = false;
  const Eigen::Index p = comp_covariates.cols();
  if (p == 0) {  // nothing to adjust for
    out.adjusted = true;
    return out;
  }

  // Weighted regression of comparison outcomes on [1, X]. Rows are scaled by
  // sqrt(w) so the pruning scan sees the weighted design.
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(agg.data(), static_cast<Eigen::Index>(n_comp));
  Eigen::VectorXd sw = w.array().sqrt();
  Eigen::MatrixXd cw(static_cast<Eigen::Index>(n_comp), p + 1);
  cw.col(0) = sw;
  for (Eigen::Index j = 0; j < p; ++j) cw.col(j + 1) = comp_covariates.col(j).cwiseProduct(sw);
  Eigen::VectorXd yw(static_cast<Eigen::Index>(n_comp));
  for (std::size_t i = 0; i < n_comp; ++i)
    yw[static_cast<Eigen::Index>(i)] = comp_outcomes[i] * sw[static_cast<Eigen::Index>(i)];

  const std::vector<int> kept = prune_collinear_columns(cw, prune_tol);
  if (kept.empty() || kept[0] != 0) return out;  // not even an intercept survives

  Eigen::MatrixXd ck(static_cast<Eigen::Index>(n_comp), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j)
    ck.col(static_cast<Eigen::Index>(j)) = cw.col(kept[j]);
  const Eigen::MatrixXd gram = ck.transpose() * ck;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) return out;
  const Eigen::VectorXd bk = llt.solve(ck.transpose() * yw);
  if (!bk.allFinite()) return out;

  // Slopes back in full coordinates; pruned columns keep slope zero.
  Eigen::VectorXd slopes = Eigen::VectorXd::Zero(p);
  for (std::size_t j = 1; j < kept.size(); ++j)
    slopes[kept[j] - 1] = bk[static_cast<Eigen::Index>(j)];

  const Eigen::VectorXd xbar_w = comp_covariates.transpose() * w;
  out.value = raw + slopes.dot(ref_covariate_means - xbar_w);
  out.adjusted = true;
  return out;
}

}  // namespace cdid

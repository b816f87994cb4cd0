#include "cdid/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cdid {

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments sample_moments(std::span<const double> xs, CovariateKind kind) {
  const std::size_t n = xs.size();
  double mean = 0.0;
  for (const double x : xs) mean += x;
  mean /= static_cast<double>(n);
  if (kind == CovariateKind::Binary) return {mean, mean * (1.0 - mean)};
  if (n < 2) return {mean, 0.0};
  double ss = 0.0;
  for (const double x : xs) ss += (x - mean) * (x - mean);
  return {mean, ss / static_cast<double>(n - 1)};
}

// Reliability-weighted moments with weights normalized to sum 1; reduces to
// the n-1 sample variance under uniform weights.
Moments weighted_moments(std::span<const double> xs, std::span<const double> ws,
                         CovariateKind kind) {
  double wsum = 0.0;
  for (const double w : ws) wsum += w;
  if (wsum <= 0.0) throw Error("weighted moments: weights sum to zero");
  double mean = 0.0, w2 = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double w = ws[i] / wsum;
    mean += w * xs[i];
    w2 += w * w;
  }
  if (kind == CovariateKind::Binary) return {mean, mean * (1.0 - mean)};
  double ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    ss += (ws[i] / wsum) * (xs[i] - mean) * (xs[i] - mean);
  const double denom = 1.0 - w2;
  return {mean, denom > 0.0 ? ss / denom : 0.0};
}

}  // namespace

double standardized_difference_from_moments(double mean_a, double var_a, double mean_b,
                                            double var_b) {
  const double pooled = 0.5 * (var_a + var_b);
  const double gap = std::fabs(mean_a - mean_b);
  if (pooled <= 0.0) {
    if (gap == 0.0) return 0.0;
    throw DegenerateVarianceError("standardized difference: zero pooled variance, unequal means");
  }
  return 100.0 * gap / std::sqrt(pooled);
}

double standardized_difference(std::span<const double> sample_a, std::span<const double> sample_b,
                               CovariateKind kind) {
  if (sample_a.empty() || sample_b.empty())
    throw Error("standardized difference: empty sample");
  const Moments a = sample_moments(sample_a, kind);
  const Moments b = sample_moments(sample_b, kind);
  return standardized_difference_from_moments(a.mean, a.var, b.mean, b.var);
}

std::vector<BalanceRow> balance_table(const std::vector<ObservationRecord>& records,
                                      std::span<const int> ref_rows,
                                      std::span<const int> comp_rows, const CovariateSpec& spec,
                                      std::span<const double> comp_weights) {
  spec.validate();
  if (!comp_weights.empty() && comp_weights.size() != comp_rows.size())
    throw Error("balance_table: weight length does not match comparison rows");

  std::vector<BalanceRow> rows;
  rows.reserve(spec.size());
  std::vector<double> ref_vals(ref_rows.size()), comp_vals(comp_rows.size());
  for (std::size_t f = 0; f < spec.entries.size(); ++f) {
    const auto& entry = spec.entries[f];
    BalanceRow row;
    row.name = entry.name;
    try {
      for (std::size_t i = 0; i < ref_rows.size(); ++i)
        ref_vals[i] = records[static_cast<std::size_t>(ref_rows[i])].covariates.at(f);
      for (std::size_t i = 0; i < comp_rows.size(); ++i)
        comp_vals[i] = records[static_cast<std::size_t>(comp_rows[i])].covariates.at(f);
      const Moments r = sample_moments(ref_vals, entry.kind);
      const Moments c = comp_weights.empty() ? sample_moments(comp_vals, entry.kind)
                                             : weighted_moments(comp_vals, comp_weights, entry.kind);
      row.mean_ref = r.mean;
      row.mean_comp = c.mean;
      row.sd = standardized_difference_from_moments(r.mean, r.var, c.mean, c.var);
      row.large = row.sd > 20.0;
      row.above_target = row.sd > 10.0;
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

SupportHistogram support_histogram(std::span<const double> ref_scores,
                                   std::span<const double> comp_scores, int bins) {
  if (bins < 1) throw ConfigError("support_histogram: bins must be >= 1");
  if (comp_scores.empty()) throw SupportError("support_histogram: empty comparison set");
  SupportHistogram h;
  h.bins = bins;
  h.threshold = *std::max_element(comp_scores.begin(), comp_scores.end());
  h.ref_counts.assign(static_cast<std::size_t>(bins), 0);
  h.comp_counts.assign(static_cast<std::size_t>(bins), 0);
  const auto bin_of = [bins](double score) {
    const int b = static_cast<int>(score * bins);
    return static_cast<std::size_t>(std::clamp(b, 0, bins - 1));
  };
  for (const double s : ref_scores) ++h.ref_counts[bin_of(s)];
  for (const double s : comp_scores) ++h.comp_counts[bin_of(s)];
  return h;
}

double SurvivalCurve::at(int day) const {
  double s = 1.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] > day) break;
    s = survival[i];
  }
  return s;
}

SurvivalCurve kaplan_meier(std::span<const int> durations, std::span<const char> censored,
                           int horizon) {
  if (durations.empty()) throw SurvivalError("kaplan_meier: empty input");
  if (durations.size() != censored.size())
    throw SurvivalError("kaplan_meier: censoring flags do not match durations");
  if (horizon < 1) throw SurvivalError("kaplan_meier: horizon must be >= 1");

  std::map<int, std::pair<long, long>> by_day;  // day -> (events, censorings)
  for (std::size_t i = 0; i < durations.size(); ++i) {
    int d = durations[i];
    if (d < 0) throw SurvivalError("kaplan_meier: negative duration");
    bool c = censored[i] != 0;
    if (d > horizon) {
      d = horizon;
      c = true;
    }
    auto& [ev, ce] = by_day[d];
    (c ? ce : ev) += 1;
  }

  SurvivalCurve curve;
  long at_risk = static_cast<long>(durations.size());
  double s = 1.0;
  for (const auto& [day, counts] : by_day) {
    const auto& [ev, ce] = counts;
    if (ev > 0) {
      s *= 1.0 - static_cast<double>(ev) / static_cast<double>(at_risk);
      curve.times.push_back(day);
      curve.survival.push_back(s);
      curve.at_risk.push_back(at_risk);
      curve.events.push_back(ev);
    }
    at_risk -= ev + ce;  // censorings leave after the day's events
  }
  return curve;
}

}  // namespace cdid

#include "cdid/effects.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

#include "cdid/rng.hpp"

namespace cdid {

namespace {

double outcome_value(const ObservationRecord& rec, Outcome outcome) {
  return outcome == Outcome::DieselShare ? static_cast<double>(rec.fuel) : rec.price;
}

double cell_mean(const std::vector<ObservationRecord>& records, const std::vector<int>& cell,
                 Outcome outcome) {
  double sum = 0.0;
  for (const int r : cell) sum += outcome_value(records[static_cast<std::size_t>(r)], outcome);
  return sum / static_cast<double>(cell.size());
}

}  // namespace

CellMeans unconditional_means(const std::vector<ObservationRecord>& records,
                              std::span<const int> rows, const EstimandRequest& request,
                              const EffectsOptions& opts) {
  const CellPartition part = partition_cells(records, rows, request, opts.german_makes);
  CellMeans m;
  m.m11 = cell_mean(records, part.treated_post, request.outcome);
  m.m10 = cell_mean(records, part.treated_pre, request.outcome);
  m.m01 = cell_mean(records, part.control_post, request.outcome);
  m.m00 = cell_mean(records, part.control_pre, request.outcome);
  m.adjusted = false;
  return m;
}

double unconditional_effect(const std::vector<ObservationRecord>& records,
                            std::span<const int> rows, const EstimandRequest& request,
                            const EffectsOptions& opts) {
  return did_point(unconditional_means(records, rows, request, opts));
}

namespace {

// Matched counterfactual mean of one comparison cell for the reference
// population: probit of reference-vs-comparison membership, support trimming,
// radius from the NN-distance rule, distance-weighted matching, regression
// bias adjustment.
double matched_cell_mean(const std::vector<ObservationRecord>& records,
                         const std::vector<int>& ref_cell, const std::vector<int>& comp_cell,
                         const CovariateSpec& spec, const EstimandRequest& request,
                         const EffectsOptions& opts, const char* cell_name,
                         ConditionalDiagnostics* diag) {
  const std::size_t n_ref = ref_cell.size();
  const std::size_t n_comp = comp_cell.size();

  std::vector<int> pooled;
  pooled.reserve(n_ref + n_comp);
  pooled.insert(pooled.end(), ref_cell.begin(), ref_cell.end());
  pooled.insert(pooled.end(), comp_cell.begin(), comp_cell.end());

  const DesignMatrix dm = apply_covariate_spec(records, pooled, spec, opts.standardize);
  std::vector<int> labels(pooled.size(), 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_ref), 1);

  const PropensityModel model = fit_probit(dm.values, labels, opts.probit);
  const Eigen::VectorXd scores = predict_scores(model, dm.values);

  std::vector<double> ref_scores(n_ref), comp_scores(n_comp);
  for (std::size_t i = 0; i < n_ref; ++i) ref_scores[i] = scores[static_cast<Eigen::Index>(i)];
  for (std::size_t j = 0; j < n_comp; ++j)
    comp_scores[j] = scores[static_cast<Eigen::Index>(n_ref + j)];

  const std::vector<char> on_support = trim_support(ref_scores, comp_scores);
  const std::vector<double> dists = nn_distances(ref_scores, comp_scores, on_support);
  if (dists.empty())
    throw MatchingError(std::string("conditional effect: every reference observation is off "
                                    "support against cell ") +
                        cell_name);
  const double radius = compute_radius(dists, opts.match.radius_floor);
  const MatchResult match = radius_match(ref_scores, comp_scores, radius, opts.match, on_support);

  // Comparison outcomes/covariates and the on-support reference covariate mean.
  std::vector<double> comp_outcomes(n_comp);
  for (std::size_t j = 0; j < n_comp; ++j)
    comp_outcomes[j] =
        outcome_value(records[static_cast<std::size_t>(comp_cell[j])], request.outcome);
  const Eigen::MatrixXd comp_cov =
      dm.values.bottomRows(static_cast<Eigen::Index>(n_comp));
  Eigen::VectorXd ref_mean = Eigen::VectorXd::Zero(dm.cols());
  std::size_t n_on = 0;
  for (std::size_t i = 0; i < n_ref; ++i) {
    if (!on_support[i]) continue;
    ref_mean += dm.values.row(static_cast<Eigen::Index>(i));
    ++n_on;
  }
  if (n_on > 0) ref_mean /= static_cast<double>(n_on);

  const AdjustedMean am =
      bias_adjusted_mean(match, comp_outcomes, comp_cov, ref_mean, opts.match.prune_tol);

  if (diag) {
    ComparisonDiagnostics cd;
    cd.cell = cell_name;
    cd.radius = radius;
    cd.dropped = match.dropped_count;
    cd.fallback = match.fallback_count;
    cd.probit_converged = model.converged;
    cd.probit_iterations = model.iterations;
    cd.adjusted = am.adjusted;
    cd.comp_rows = comp_cell;
    for (std::size_t i = 0; i < n_ref; ++i)
      if (on_support[i]) cd.on_support_ref_rows.push_back(ref_cell[i]);
    cd.aggregate_comp_weights.assign(n_comp, 0.0);
    for (std::size_t i = 0; i < match.weights.size(); ++i)
      for (const auto& mw : match.weights[i])
        cd.aggregate_comp_weights[static_cast<std::size_t>(mw.comparison)] += mw.weight;
    if (diag->keep_matches) {
      cd.match = match;
      cd.ref_scores = ref_scores;
      cd.comp_scores = comp_scores;
      cd.design_names = dm.names;
      cd.coefficients = model.coefficients;
      cd.average_marginal_effects = marginal_effects(model, dm.values, dm.kinds);
    }
    diag->comparisons.push_back(std::move(cd));
  }
  return am.value;
}

}  // namespace

CellMeans conditional_means(const std::vector<ObservationRecord>& records,
                            std::span<const int> rows, const EstimandRequest& request,
                            const CovariateSpec& spec, const EffectsOptions& opts,
                            ConditionalDiagnostics* diag) {
  const CellPartition part = partition_cells(records, rows, request, opts.german_makes);
  CellMeans m;
  m.adjusted = true;
  m.m10 = cell_mean(records, part.treated_pre, request.outcome);
  m.m11 = matched_cell_mean(records, part.treated_pre, part.treated_post, spec, request, opts,
                            "G=1,T=s", diag);
  m.m01 = matched_cell_mean(records, part.treated_pre, part.control_post, spec, request, opts,
                            "G=0,T=s", diag);
  m.m00 = matched_cell_mean(records, part.treated_pre, part.control_pre, spec, request, opts,
                            "G=0,T=0", diag);
  return m;
}

double conditional_effect(const std::vector<ObservationRecord>& records, std::span<const int> rows,
                          const EstimandRequest& request, const CovariateSpec& spec,
                          const EffectsOptions& opts, ConditionalDiagnostics* diag) {
  return did_point(conditional_means(records, rows, request, spec, opts, diag));
}

namespace {

std::vector<int> resample_within_cells(const CellPartition& part, Rng& rng) {
  std::vector<int> rows;
  rows.reserve(part.total());
  for (const auto* cell :
       {&part.treated_post, &part.treated_pre, &part.control_post, &part.control_pre}) {
    const std::size_t m = cell->size();
    for (std::size_t i = 0; i < m; ++i)
      rows.push_back((*cell)[static_cast<std::size_t>(rng.bounded(m))]);
  }
  return rows;
}

double percentile_nearest_rank(std::vector<double> sorted, double p) {
  const std::size_t n = sorted.size();
  const std::size_t rank =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(p * static_cast<double>(n))));
  return sorted[std::min(rank, n) - 1];
}

}  // namespace

EffectEstimate bootstrap_inference(const std::vector<ObservationRecord>& records,
                                   std::span<const int> rows, const EstimandRequest& request,
                                   const PointEstimator& estimator, const BootstrapOptions& boot,
                                   const EffectsOptions& opts) {
  if (boot.replications < 2)
    throw ConfigError("bootstrap_inference: replications must be >= 2");
  const CellPartition part = partition_cells(records, rows, request, opts.german_makes);
  std::vector<int> base_rows;
  base_rows.reserve(part.total());
  for (const auto* cell :
       {&part.treated_post, &part.treated_pre, &part.control_post, &part.control_pre})
    base_rows.insert(base_rows.end(), cell->begin(), cell->end());

  const double point = estimator(records, base_rows);

  const int reps = boot.replications;
  std::vector<double> results(static_cast<std::size_t>(reps),
                              std::numeric_limits<double>::quiet_NaN());

  const auto run_replication = [&](int r) {
    Rng rng(stream_seed(boot.seed, static_cast<std::uint64_t>(r)));
    const std::vector<int> resampled = resample_within_cells(part, rng);
    try {
      results[static_cast<std::size_t>(r)] = estimator(records, resampled);
    } catch (const Error&) {
      // discarded; counted below
    }
  };

  const int workers = std::max(1, boot.workers);
  if (workers == 1) {
    for (int r = 0; r < reps; ++r) run_replication(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int n_threads = std::min(workers, reps);
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (;;) {
          const int r = next.fetch_add(1);
          if (r >= reps) return;
          run_replication(r);
        }
      });
    for (auto& th : pool) th.join();
  }

  // Reduction in replication order: independent of worker scheduling.
  std::vector<double> points;
  points.reserve(static_cast<std::size_t>(reps));
  for (const double v : results)
    if (!std::isnan(v)) points.push_back(v);
  const int discarded = reps - static_cast<int>(points.size());
  if (static_cast<double>(discarded) > boot.discard_threshold * static_cast<double>(reps))
    throw InferenceError("bootstrap_inference: " + std::to_string(discarded) + " of " +
                         std::to_string(reps) + " replications failed");
  if (points.size() < 2)
    throw InferenceError("bootstrap_inference: fewer than two usable replications");

  double mean = 0.0;
  for (const double v : points) mean += v;
  mean /= static_cast<double>(points.size());
  double ss = 0.0;
  for (const double v : points) ss += (v - mean) * (v - mean);
  const double se = std::sqrt(ss / static_cast<double>(points.size() - 1));

  EffectEstimate est;
  est.point = point;
  est.se = se;
  if (se > 0.0)
    est.t_stat = point / se;
  else
    est.t_stat = (point == 0.0) ? 0.0
                                : std::copysign(std::numeric_limits<double>::infinity(), point);
  if (boot.ci == CiKind::Normal) {
    est.ci_low = point - 1.96 * se;
    est.ci_high = point + 1.96 * se;
  } else {
    std::vector<double> sorted = points;
    std::sort(sorted.begin(), sorted.end());
    est.ci_low = percentile_nearest_rank(sorted, 0.025);
    est.ci_high = percentile_nearest_rank(std::move(sorted), 0.975);
  }
  est.n_reference = static_cast<long>(part.treated_pre.size());
  est.n_comparison = static_cast<long>(part.treated_post.size() + part.control_post.size() +
                                       part.control_pre.size());
  est.replications = reps;
  est.discarded = discarded;
  return est;
}

SubgroupTable subgroup_effects(const std::vector<ObservationRecord>& records,
                               std::span<const int> rows, const EstimandRequest& base_request,
                               std::span<const int> months, const std::string& partition_tag,
                               const CovariateSpec& spec, const EffectsOptions& opts,
                               const BootstrapOptions& boot) {
  std::set<std::string> categories;
  for (const int r : rows) {
    const auto& rec = records[static_cast<std::size_t>(r)];
    if (partition_tag == "emission_standard")
      categories.insert(rec.emission_standard);
    else if (partition_tag == "vehicle_class")
      categories.insert(rec.vehicle_class);
    else if (partition_tag == "seller_type")
      categories.insert(rec.seller_type);
    else
      throw ConfigError("subgroup_effects: unknown partition tag '" + partition_tag + "'");
  }

  SubgroupTable table;
  table.tag = partition_tag;
  table.months.assign(months.begin(), months.end());

  for (const auto& category : categories) {
    SubgroupRow row;
    row.category = category;
    for (const int month : months) {
      EstimandRequest req = base_request;
      req.post_period = month;
      req.subgroup_filter = SubgroupFilter{partition_tag, category};
      SubgroupCell cell;
      try {
        const PointEstimator estimator =
            [&req, &spec, &opts](const std::vector<ObservationRecord>& recs,
                                 std::span<const int> rr) {
              return req.conditional ? conditional_effect(recs, rr, req, spec, opts)
                                     : unconditional_effect(recs, rr, req, opts);
            };
        cell.estimate = bootstrap_inference(records, rows, req, estimator, boot, opts);
      } catch (const Error& e) {
        cell.warning = e.what();
      }
      row.by_month.push_back(std::move(cell));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

const char* significance_stars(double t_stat) {
  const double abs_t = std::fabs(t_stat);
  if (abs_t > 2.5758293035489004) return "***";
  if (abs_t > 1.959963984540054) return "**";
  if (abs_t > 1.6448536269514722) return "*";
  return "";
}

}  // namespace cdid

#include "cdid/run.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdid/diagnostics.hpp"
#include "cdid/effects.hpp"
#include "cdid/market_sim.hpp"

namespace cdid {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

std::string outcome_name(Outcome o) {
  return o == Outcome::DieselShare ? "diesel_share" : "asking_price";
}

// Effects-by-month table: one row block per category with the bootstrap SE in
// parentheses underneath and significance stars at the 1/5/10% levels.
void write_effects_table(std::ostream& out, const SubgroupTable& table) {
  out << "# columns: month after disclosure\n";
  out << "category";
  for (const int m : table.months) out << '\t' << m;
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.category;
    for (const auto& cell : row.by_month) {
      out << '\t';
      if (cell.estimate)
        out << fmt(cell.estimate->point) << significance_stars(cell.estimate->t_stat);
      else
        out << "skipped";
    }
    out << '\n';
    for (const auto& cell : row.by_month) {
      out << '\t';
      if (cell.estimate)
        out << '(' << fmt(cell.estimate->se) << ')';
      else
        out << '-';
    }
    out << '\n';
    for (std::size_t i = 0; i < row.by_month.size(); ++i)
      if (!row.by_month[i].estimate)
        out << "# warning month " << table.months[i] << ": " << row.by_month[i].warning << '\n';
  }
}

void write_effects_points(std::ostream& out, const SubgroupTable& table) {
  out << "category,month,point,se,t,ci_low,ci_high,n_reference,n_comparison,replications,"
         "discarded\n";
  for (const auto& row : table.rows)
    for (std::size_t i = 0; i < row.by_month.size(); ++i) {
      const auto& cell = row.by_month[i];
      if (!cell.estimate) continue;
      const auto& e = *cell.estimate;
      out << row.category << ',' << table.months[i] << ',' << fmt(e.point, 12) << ','
          << fmt(e.se, 12) << ',' << fmt(e.t_stat, 12) << ',' << fmt(e.ci_low, 12) << ','
          << fmt(e.ci_high, 12) << ',' << e.n_reference << ',' << e.n_comparison << ','
          << e.replications << ',' << e.discarded << '\n';
    }
}

void write_balance_rows(std::ostream& out, const std::string& section,
                        const std::vector<BalanceRow>& rows) {
  for (const auto& row : rows) {
    out << section << ',' << row.name << ',';
    if (row.error)
      out << ",,error: " << *row.error;
    else
      out << fmt(row.mean_ref, 12) << ',' << fmt(row.mean_comp, 12) << ',' << fmt(row.sd, 12)
          << ',' << (row.large ? "large" : (row.above_target ? "above_target" : "ok"));
    out << '\n';
  }
}

struct RunState {
  const RunConfig& config;
  const std::vector<ObservationRecord>& records;
  std::vector<int> rows;
  EffectsOptions effects;
  fs::path dir;
  ResultBundle* bundle;
};

void add_file(RunState& state, RequestOutcome& outcome, const std::string& name) {
  outcome.files.push_back(name);
  state.bundle->files.push_back(name);
}

// Runs one estimator family (unconditional or conditional) of one request and
// writes its tables. Conditional families also emit balance tables
// before/after matching, support histograms and (optionally) the match audit.
void run_estimator_family(RunState& state, const RequestSpec& request, int index, bool conditional,
                          RequestOutcome& outcome) {
  const std::string stem = "request_" + std::to_string(index) + "_" +
                           (conditional ? "conditional" : "unconditional") + "_" +
                           outcome_name(request.outcome);
  const CovariateSpec& spec = state.config.covariates;
  const EffectsOptions& opts = state.effects;

  EstimandRequest base;
  base.outcome = request.outcome;
  base.control = request.control;
  base.conditional = conditional;

  if (request.subgroup_tag) {
    const SubgroupTable table =
        subgroup_effects(state.records, state.rows, base, request.months, *request.subgroup_tag,
                         spec, opts, state.config.bootstrap);
    const std::string table_name = stem + "_by_" + *request.subgroup_tag + ".txt";
    const std::string points_name = stem + "_by_" + *request.subgroup_tag + "_points.csv";
    auto out = open_output(state.dir / table_name);
    write_effects_table(out, table);
    auto points = open_output(state.dir / points_name);
    write_effects_points(points, table);
    add_file(state, outcome, table_name);
    add_file(state, outcome, points_name);
    return;
  }

  SubgroupTable table;  // single unpartitioned row, same layout
  table.tag = "all";
  table.months.assign(request.months.begin(), request.months.end());
  SubgroupRow row;
  row.category = "all";

  std::ostringstream balance_buf;
  std::ostringstream support_buf;
  std::ostringstream audit_buf;
  std::ostringstream propensity_buf;
  support_buf << "month,cell,bin,bin_low,bin_high,ref_count,comp_count,threshold\n";
  balance_buf << "section,covariate,mean_ref,mean_comp,standardized_difference,flag\n";
  audit_buf << "month,cell,ref_id,comp_id,weight\n";
  propensity_buf << "month,cell,variable,coefficient,average_marginal_effect\n";

  for (const int month : request.months) {
    EstimandRequest req = base;
    req.post_period = month;
    SubgroupCell cell;
    try {
      const PointEstimator estimator = [&req, &spec, &opts, conditional](
                                           const std::vector<ObservationRecord>& recs,
                                           std::span<const int> rr) {
        return conditional ? conditional_effect(recs, rr, req, spec, opts)
                           : unconditional_effect(recs, rr, req, opts);
      };
      cell.estimate = bootstrap_inference(state.records, state.rows, req, estimator,
                                          state.config.bootstrap, opts);

      if (conditional && !spec.empty()) {
        // Re-run the point estimate once with diagnostics to document balance
        // and support for this month.
        ConditionalDiagnostics diag;
        diag.keep_matches = true;
        (void)conditional_effect(state.records, state.rows, req, spec, opts, &diag);
        const CellPartition part =
            partition_cells(state.records, state.rows, req, opts.german_makes);
        for (const auto& cd : diag.comparisons) {
          const std::string section = "month" + std::to_string(month) + "_" + cd.cell;
          write_balance_rows(balance_buf, section + "_pre",
                             balance_table(state.records, part.treated_pre, cd.comp_rows, spec));
          write_balance_rows(
              balance_buf, section + "_post",
              balance_table(state.records, cd.on_support_ref_rows, cd.comp_rows, spec,
                            cd.aggregate_comp_weights));
          propensity_buf << month << ',' << cd.cell << ",intercept,"
                         << fmt(cd.coefficients[0], 12) << ",\n";
          for (std::size_t k = 0; k < cd.design_names.size(); ++k)
            propensity_buf << month << ',' << cd.cell << ',' << cd.design_names[k] << ','
                           << fmt(cd.coefficients[static_cast<Eigen::Index>(k) + 1], 12) << ','
                           << fmt(cd.average_marginal_effects[static_cast<Eigen::Index>(k)], 12)
                           << '\n';
          const SupportHistogram hist =
              support_histogram(cd.ref_scores, cd.comp_scores, state.config.support_bins);
          const double width = 1.0 / hist.bins;
          for (int b = 0; b < hist.bins; ++b)
            support_buf << month << ',' << cd.cell << ',' << b << ',' << fmt(b * width, 12) << ','
                        << fmt((b + 1) * width, 12) << ','
                        << hist.ref_counts[static_cast<std::size_t>(b)] << ','
                        << hist.comp_counts[static_cast<std::size_t>(b)] << ','
                        << fmt(hist.threshold, 12) << '\n';
          if (state.config.match_audit && cd.match) {
            std::size_t ref_pos = 0;
            for (std::size_t i = 0; i < cd.match->weights.size(); ++i) {
              if (!cd.match->on_support[i]) continue;
              const int ref_row = cd.on_support_ref_rows[ref_pos++];
              for (const auto& mw : cd.match->weights[i])
                audit_buf << month << ',' << cd.cell << ','
                          << state.records[static_cast<std::size_t>(ref_row)].id << ','
                          << state.records[static_cast<std::size_t>(
                                               cd.comp_rows[static_cast<std::size_t>(
                                                   mw.comparison)])].id
                          << ',' << fmt(mw.weight, 12) << '\n';
            }
          }
        }
      }
    } catch (const Error& e) {
      cell.warning = e.what();
    }
    row.by_month.push_back(std::move(cell));
  }
  table.rows.push_back(std::move(row));

  auto out = open_output(state.dir / (stem + ".txt"));
  write_effects_table(out, table);
  auto points = open_output(state.dir / (stem + "_points.csv"));
  write_effects_points(points, table);
  add_file(state, outcome, stem + ".txt");
  add_file(state, outcome, stem + "_points.csv");

  if (conditional && !spec.empty()) {
    auto balance = open_output(state.dir / (stem + "_balance.csv"));
    balance << balance_buf.str();
    auto support = open_output(state.dir / (stem + "_support.csv"));
    support << support_buf.str();
    auto propensity = open_output(state.dir / (stem + "_propensity.csv"));
    propensity << propensity_buf.str();
    add_file(state, outcome, stem + "_balance.csv");
    add_file(state, outcome, stem + "_support.csv");
    add_file(state, outcome, stem + "_propensity.csv");
    if (state.config.match_audit) {
      auto audit = open_output(state.dir / (stem + "_match_audit.csv"));
      audit << audit_buf.str();
      add_file(state, outcome, stem + "_match_audit.csv");
    }
  }

  // A family counts as failed when every requested month failed.
  bool any_ok = false;
  std::string first_error;
  for (const auto& c : table.rows[0].by_month) {
    if (c.estimate)
      any_ok = true;
    else if (first_error.empty())
      first_error = c.warning;
  }
  if (!any_ok) throw Error("all months failed; first: " + first_error);
}

void write_survival_curves(RunState& state) {
  for (int g = 0; g < 2; ++g) {
    for (int fuel = 0; fuel < 2; ++fuel) {
      std::vector<int> dur_pre, dur_post;
      std::vector<char> cen_pre, cen_post;
      for (const auto& rec : state.records) {
        if (rec.group != g || rec.fuel != fuel) continue;
        if (rec.period == 0) {
          dur_pre.push_back(rec.duration_days);
          cen_pre.push_back(rec.censored ? 1 : 0);
        } else {
          dur_post.push_back(rec.duration_days);
          cen_post.push_back(rec.censored ? 1 : 0);
        }
      }
      const std::string name = std::string("survival_") + (g == 1 ? "treated" : "control") + "_" +
                               (fuel == 1 ? "diesel" : "gasoline") + ".csv";
      auto out = open_output(state.dir / name);
      out << "day,survival_pre,survival_post\n";
      if (dur_pre.empty() || dur_post.empty()) {
        state.bundle->files.push_back(name);
        continue;  // nothing to plot for this cell
      }
      const SurvivalCurve pre = kaplan_meier(dur_pre, cen_pre, state.config.km_horizon);
      const SurvivalCurve post = kaplan_meier(dur_post, cen_post, state.config.km_horizon);
      for (int day = 0; day <= state.config.km_horizon; ++day)
        out << day << ',' << fmt(pre.at(day), 12) << ',' << fmt(post.at(day), 12) << '\n';
      state.bundle->files.push_back(name);
    }
  }
}

}  // namespace

ResultBundle run_experiment(const RunConfig& config) {
  config.validate();
  ResultBundle bundle;
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);

  std::vector<ObservationRecord> records;
  LoadReport load_report;
  if (config.simulate) {
    records = simulate_panel(config.sim);
    write_observations((dir / "panel.csv").string(), records, config.covariates);
    bundle.files.push_back("panel.csv");
  } else {
    LoadOptions lo;
    lo.tolerate_invalid = config.tolerate_invalid;
    records = load_observations(*config.input_path, config.covariates, lo, &load_report);
  }

  RunState state{config, records, all_rows(records), EffectsOptions{}, dir, &bundle};
  state.effects.probit = config.probit;
  state.effects.match = config.match;
  state.effects.german_makes = config.german_makes;

  int index = 0;
  for (const auto& request : config.requests) {
    ++index;
    for (const bool conditional : {false, true}) {
      if (conditional && !request.conditional) continue;
      if (!conditional && !request.unconditional) continue;
      RequestOutcome outcome;
      outcome.label = "request." + std::to_string(index) + " " +
                      (conditional ? "conditional " : "unconditional ") +
                      outcome_name(request.outcome);
      try {
        run_estimator_family(state, request, index, conditional, outcome);
        outcome.ok = true;
      } catch (const Error& e) {
        outcome.ok = false;
        outcome.error = e.what();
        bundle.all_ok = false;
      }
      bundle.requests.push_back(std::move(outcome));
    }
  }

  if (config.km_enabled) write_survival_curves(state);

  // Manifest: everything needed to regenerate the numbers, except the
  // timestamp, which is informational.
  json manifest;
  manifest["version"] = kVersion;
  manifest["config_hash"] = config.config_hash;
  manifest["bootstrap_seed"] = config.bootstrap.seed;
  manifest["replications"] = config.bootstrap.replications;
  if (config.simulate) {
    manifest["source"] = "simulated";
    manifest["sim_seed"] = config.sim.seed;
  } else {
    manifest["source"] = *config.input_path;
    manifest["rows_loaded"] = load_report.rows;
    manifest["rows_invalid"] = load_report.invalid;
  }
  manifest["records"] = records.size();
  manifest["files"] = bundle.files;
  json request_status = json::array();
  for (const auto& r : bundle.requests)
    request_status.push_back({{"label", r.label}, {"ok", r.ok}, {"error", r.error}});
  manifest["requests"] = request_status;
  manifest["warnings"] = config.warnings;
  manifest["timestamp"] =
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();

  const fs::path manifest_path = dir / "manifest.json";
  auto out = open_output(manifest_path);
  out << manifest.dump(2) << '\n';
  bundle.manifest_path = manifest_path.string();
  bundle.files.push_back("manifest.json");
  return bundle;
}

}  // namespace cdid

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "cdid/diagnostics.hpp"
#include "cdid/effects.hpp"
#include "cdid/io.hpp"
#include "cdid/market_sim.hpp"
#include "cdid/run.hpp"

namespace {

int log_level() {
  // 0 = quiet, 1 = info (default), 2 = debug
  const char* env = std::getenv("CDID_LOG");
  if (!env) return 1;
  const std::string v(env);
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

int worker_count() {
  const char* env = std::getenv("CDID_WORKERS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

cdid::RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                            const std::string& output_dir) {
  std::string text;
  {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw cdid::ConfigError("cannot open config file '" + path + "'");
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, n);
    std::fclose(f);
  }
  for (const auto& o : overrides) text += "\n" + o;
  cdid::RunConfig cfg = cdid::parse_run_config(text);
  cfg.bootstrap.workers = worker_count();
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  if (log_level() >= 1)
    for (const auto& w : cfg.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return cfg;
}

std::vector<cdid::ObservationRecord> obtain_records(const cdid::RunConfig& cfg,
                                                    cdid::LoadReport* report) {
  if (cfg.simulate) return cdid::simulate_panel(cfg.sim);
  cdid::LoadOptions lo;
  lo.tolerate_invalid = cfg.tolerate_invalid;
  return cdid::load_observations(*cfg.input_path, cfg.covariates, lo, report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional difference-in-differences estimation for used-car listings"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "run configuration file")->required();
  app.add_option("-o,--output-dir", output_dir, "override output directory");
  app.add_option("--set", overrides, "override a config key, e.g. --set bootstrap.seed=7");

  auto* validate_cmd =
      app.add_subcommand("validate", "schema-check the observation file and report row issues");
  auto* simulate_cmd =
      app.add_subcommand("simulate", "draw the synthetic panel and write it as a CSV");
  auto* estimate_cmd = app.add_subcommand("estimate", "run the estimation pipeline");
  auto* balance_cmd = app.add_subcommand("balance", "pre-matching balance diagnostics only");
  auto* survival_cmd = app.add_subcommand("survival", "Kaplan-Meier curves only");

  std::string simulate_out = "panel.csv";
  simulate_cmd->add_option("--out", simulate_out, "panel output path");
  int balance_month = 1;
  balance_cmd->add_option("--month", balance_month, "post month for the cell partition");

  CLI11_PARSE(app, argc, argv);

  try {
    cdid::RunConfig cfg = load_config(config_path, overrides, output_dir);

    if (validate_cmd->parsed()) {
      if (cfg.simulate) {
        std::fprintf(stderr, "validate: config uses a simulated source, nothing to check\n");
        return 2;
      }
      cdid::LoadOptions lo;
      lo.tolerate_invalid = true;  // report instead of failing fast
      cdid::LoadReport report;
      (void)cdid::load_observations(*cfg.input_path, cfg.covariates, lo, &report);
      std::printf("rows: %ld\ninvalid: %ld\n", report.rows, report.invalid);
      for (const auto& issue : report.issues) std::printf("%s\n", issue.c_str());
      return report.invalid == 0 ? 0 : 1;
    }

    if (simulate_cmd->parsed()) {
      const auto panel = cdid::simulate_panel(cfg.sim);
      cdid::write_observations(simulate_out, panel, cfg.covariates);
      if (log_level() >= 1)
        std::fprintf(stderr, "wrote %zu listings to %s\n", panel.size(), simulate_out.c_str());
      return 0;
    }

    if (estimate_cmd->parsed()) {
      const cdid::ResultBundle bundle = cdid::run_experiment(cfg);
      for (const auto& r : bundle.requests)
        std::printf("%s: %s%s%s\n", r.label.c_str(), r.ok ? "ok" : "failed",
                    r.ok ? "" : " - ", r.ok ? "" : r.error.c_str());
      if (log_level() >= 1)
        std::fprintf(stderr, "outputs in %s (%zu files)\n", cfg.output_dir.c_str(),
                     bundle.files.size());
      return bundle.all_ok ? 0 : 1;
    }

    if (balance_cmd->parsed()) {
      cdid::LoadReport report;
      const auto records = obtain_records(cfg, &report);
      const auto rows = cdid::all_rows(records);
      cdid::EstimandRequest req;
      req.outcome = cdid::Outcome::DieselShare;
      req.post_period = balance_month;
      const auto part = cdid::partition_cells(records, rows, req, cfg.german_makes);
      std::vector<int> comp;
      for (const auto* cell : {&part.treated_post, &part.control_post, &part.control_pre})
        comp.insert(comp.end(), cell->begin(), cell->end());
      const auto table = cdid::balance_table(records, part.treated_pre, comp, cfg.covariates);
      std::printf("covariate,mean_ref,mean_comp,standardized_difference,flag\n");
      for (const auto& row : table) {
        if (row.error)
          std::printf("%s,,,error: %s\n", row.name.c_str(), row.error->c_str());
        else
          std::printf("%s,%.6g,%.6g,%.6g,%s\n", row.name.c_str(), row.mean_ref, row.mean_comp,
                      row.sd, row.large ? "large" : (row.above_target ? "above_target" : "ok"));
      }
      return 0;
    }

    if (survival_cmd->parsed()) {
      cdid::LoadReport report;
      const auto records = obtain_records(cfg, &report);
      for (int g = 0; g < 2; ++g)
        for (int fuel = 0; fuel < 2; ++fuel) {
          std::vector<int> dur;
          std::vector<char> cen;
          for (const auto& rec : records) {
            if (rec.group != g || rec.fuel != fuel) continue;
            dur.push_back(rec.duration_days);
            cen.push_back(rec.censored ? 1 : 0);
          }
          if (dur.empty()) continue;
          const auto curve = cdid::kaplan_meier(dur, cen, cfg.km_horizon);
          std::printf("# group=%d fuel=%d\nday,survival\n", g, fuel);
          for (int day = 0; day <= cfg.km_horizon; ++day)
            std::printf("%d,%.6g\n", day, curve.at(day));
        }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

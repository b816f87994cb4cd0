#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cdid/io.hpp"
#include "cdid/market_sim.hpp"

using namespace cdid;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

CovariateSpec age_spec() {
  CovariateSpec spec;
  spec.entries.push_back({"age", CovariateKind::Continuous, 1});
  return spec;
}

const char* kHeader =
    "id,group,period,fuel,price,duration_days,censored,emission_standard,vehicle_class,"
    "seller_type,make,age\n";

}  // namespace

TEST_CASE("key-value config parsing") {
  const KeyValueConfig kv = KeyValueConfig::parse(
      "# comment\n"
      "a.b = 1\n"
      "\n"
      "a.c = hello world\n"
      "flag = true\n");
  CHECK(kv.get_int("a.b", 0) == 1);
  CHECK(kv.get_string("a.c", "") == "hello world");
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_double("missing", 2.5) == 2.5);
  CHECK(kv.keys_with_prefix("a.").size() == 2);

  CHECK_THROWS_AS(KeyValueConfig::parse("x = 1\nx = 2\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ConfigError);
}

TEST_CASE("config hash ignores key order and comments") {
  const KeyValueConfig a = KeyValueConfig::parse("x = 1\ny = 2\n");
  const KeyValueConfig b = KeyValueConfig::parse("# note\ny = 2\nx = 1\n");
  CHECK(fnv1a64(a.canonical_text()) == fnv1a64(b.canonical_text()));
}

TEST_CASE("run config parsing") {
  const std::string text =
      "data.simulate = true\n"
      "sim.n_agents = 500\n"
      "sim.seed = 9\n"
      "sim.shock = 0.1\n"
      "sim.component.old.q_diesel = 0.25\n"
      "sim.component.old.q_gasoline = 0.45\n"
      "sim.component.new.q = 0.6\n"
      "sim.weights.old.treated = 0.5\n"
      "sim.weights.old.control = 0.4,0.9,0.9,0.9,0.9,0.9,0.9,0.9\n"
      "sim.weights.new.treated = 0.5\n"
      "sim.weights.new.control = 0.6,0.1,0.1,0.1,0.1,0.1,0.1,0.1\n"
      "sim.covariate.old_vintage.kind = threshold\n"
      "sim.covariate.old_vintage.cutoff = 0.5\n"
      "sim.covariate.junk.kind = noise\n"
      "sim.covariate.junk.noise_sd = 1\n"
      "covariates.old_vintage = binary\n"
      "covariates.junk = continuous\n"
      "request.1.outcome = diesel_share\n"
      "request.1.months = 1-3\n"
      "request.1.mode = both\n"
      "request.2.outcome = asking_price\n"
      "request.2.months = 1,3\n"
      "request.2.control = non_german\n"
      "request.2.subgroup = emission_standard\n"
      "bootstrap.replications = 99\n"
      "bootstrap.seed = 4\n"
      "bootstrap.ci = percentile\n"
      "match.kernel = inverse_distance\n"
      "probit.tol = 1e-6\n"
      "km.enabled = true\n"
      "output.dir = /tmp/cdid_out\n";
  const RunConfig cfg = parse_run_config(text);
  CHECK(cfg.simulate);
  CHECK(cfg.sim.n_agents == 500);
  REQUIRE(cfg.sim.components.size() == 2);
  CHECK(cfg.sim.components[0].name == "old");
  CHECK(cfg.sim.components[0].q_gasoline == 0.45);
  CHECK(cfg.sim.components[1].q_diesel == 0.6);
  CHECK(cfg.sim.component_weights[0][0] == std::vector<double>{0.4, 0.6});
  CHECK(cfg.sim.component_weights[0][3] == std::vector<double>{0.9, 0.1});
  CHECK(cfg.sim.component_weights[1][5] == std::vector<double>{0.5, 0.5});
  REQUIRE(cfg.sim.links.size() == 2);
  CHECK(cfg.sim.links[0].kind == CovariateLink::Kind::Threshold);
  REQUIRE(cfg.covariates.size() == 2);
  CHECK(cfg.covariates.entries[0].kind == CovariateKind::Binary);
  REQUIRE(cfg.requests.size() == 2);
  CHECK(cfg.requests[0].months == std::vector<int>{1, 2, 3});
  CHECK(cfg.requests[0].conditional);
  CHECK(cfg.requests[0].unconditional);
  CHECK(cfg.requests[1].months == std::vector<int>{1, 3});
  CHECK(cfg.requests[1].control == ControlDefinition::NonGermanMakes);
  CHECK(cfg.requests[1].subgroup_tag == "emission_standard");
  CHECK(cfg.bootstrap.replications == 99);
  CHECK(cfg.bootstrap.ci == CiKind::Percentile);
  CHECK(cfg.match.kernel == Kernel::InverseDistance);
  CHECK(cfg.probit.tol == 1e-6);
  CHECK(cfg.km_enabled);
  CHECK(cfg.output_dir == "/tmp/cdid_out");
  CHECK(cfg.config_hash != 0);
}

TEST_CASE("run config validation failures") {
  // Both sources at once.
  CHECK_THROWS_AS(parse_run_config("data.simulate = true\n"
                                   "data.input = x.csv\n"
                                   "request.1.outcome = diesel_share\n"),
                  ConfigError);
  // No source.
  CHECK_THROWS_AS(parse_run_config("request.1.outcome = diesel_share\n"), ConfigError);
  // Month out of range.
  CHECK_THROWS_AS(parse_run_config("data.simulate = true\n"
                                   "request.1.months = 8\n"),
                  ConfigError);
  // Too few replications.
  CHECK_THROWS_AS(parse_run_config("data.simulate = true\n"
                                   "request.1.months = 1\n"
                                   "bootstrap.replications = 1\n"),
                  ConfigError);
  // Unknown keys are warnings, not errors.
  const RunConfig cfg = parse_run_config(
      "data.simulate = true\nrequest.1.months = 1\nnot.a.key = 3\n");
  REQUIRE(cfg.warnings.size() == 1);
  CHECK(cfg.warnings[0].find("not.a.key") != std::string::npos);
}

TEST_CASE("well-formed observation file loads") {
  const auto path = temp_file("cdid_ok.csv");
  write_file(path, std::string(kHeader) +
                       "a1,1,0,1,17000,5,0,euro5,compact,private,vw,3.5\n"
                       "a2,0,1,0,9000,3,1,euro4,small,dealer_warranty,ford,7\n"
                       "a3,0,0,1,12000.5,24,1,euro6,suv,private,toyota,1\n");
  const auto records = load_observations(path.string(), age_spec());
  REQUIRE(records.size() == 3);
  CHECK(records[0].id == "a1");
  CHECK(records[0].price == 17000.0);
  CHECK(records[1].censored);
  CHECK(records[1].make == "ford");
  CHECK(records[2].covariates[0] == 1.0);
}

TEST_CASE("invalid rows name the row number") {
  const auto path = temp_file("cdid_bad.csv");
  write_file(path, std::string(kHeader) +
                       "a1,1,0,1,17000,5,0,euro5,compact,private,vw,3.5\n"
                       "a2,0,9,0,9000,3,1,euro4,small,dealer_warranty,ford,7\n");
  try {
    load_observations(path.string(), age_spec());
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }

  // The tolerate-and-log flag keeps the good rows.
  LoadOptions opts;
  opts.tolerate_invalid = true;
  LoadReport report;
  const auto records = load_observations(path.string(), age_spec(), opts, &report);
  CHECK(records.size() == 1);
  CHECK(report.rows == 2);
  CHECK(report.invalid == 1);
  REQUIRE(report.issues.size() == 1);
  CHECK(report.issues[0].find("row 2") != std::string::npos);
}

TEST_CASE("missing column is a schema error naming the column") {
  const auto path = temp_file("cdid_nocol.csv");
  write_file(path,
             "id,group,period,fuel,price,duration_days,censored,emission_standard,"
             "vehicle_class,seller_type,make\n");  // no 'age'
  try {
    load_observations(path.string(), age_spec());
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("age") != std::string::npos);
  }
}

TEST_CASE("days_since_disclosure substitutes for period") {
  const auto path = temp_file("cdid_days.csv");
  write_file(path,
             "id,group,days_since_disclosure,fuel,price,duration_days,censored,"
             "emission_standard,vehicle_class,seller_type,make,age\n"
             "a1,1,-10,1,100,5,0,euro5,compact,private,vw,3\n"
             "a2,1,45,1,100,5,0,euro5,compact,private,vw,3\n");
  const auto records = load_observations(path.string(), age_spec());
  REQUIRE(records.size() == 2);
  CHECK(records[0].period == 0);
  CHECK(records[1].period == 2);
}

TEST_CASE("simulate -> write -> load round-trips exactly") {
  MarketSimConfig sim;
  sim.n_agents = 120;
  sim.shock = 0.1;
  sim.price_noise_sd = 0.015;
  sim.links.push_back({"age", CovariateLink::Kind::Linear, 4.0, -2.0, 0.1, 0.0});
  sim.links.push_back({"old_vintage", CovariateLink::Kind::Threshold, 0.0, 0.0, 0.0, 0.5});
  const auto panel = simulate_panel(sim);
  const CovariateSpec spec = sim.covariate_spec();

  const auto path = temp_file("cdid_roundtrip.csv");
  write_observations(path.string(), panel, spec);
  const auto loaded = load_observations(path.string(), spec);

  REQUIRE(loaded.size() == panel.size());
  for (std::size_t i = 0; i < panel.size(); ++i) {
    CHECK(loaded[i].id == panel[i].id);
    CHECK(loaded[i].group == panel[i].group);
    CHECK(loaded[i].period == panel[i].period);
    CHECK(loaded[i].fuel == panel[i].fuel);
    CHECK(loaded[i].price == panel[i].price);  // bit-exact via %.17g
    CHECK(loaded[i].duration_days == panel[i].duration_days);
    CHECK(loaded[i].censored == panel[i].censored);
    CHECK(loaded[i].emission_standard == panel[i].emission_standard);
    CHECK(loaded[i].vehicle_class == panel[i].vehicle_class);
    CHECK(loaded[i].seller_type == panel[i].seller_type);
    CHECK(loaded[i].make == panel[i].make);
    CHECK(loaded[i].covariates == panel[i].covariates);
  }
}

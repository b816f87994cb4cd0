#include "cdid/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cdid {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string current;
  for (const char c : s) {
    if (c == sep) {
      out.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  out.push_back(current);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ValidationError("unparsable number '" + s + "' for " + what);
  return v;
}

long parse_long(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ValidationError("unparsable integer '" + s + "' for " + what);
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (cfg.index_.count(key))
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    cfg.index_[key] = cfg.entries_.size();
    cfg.entries_.emplace_back(key, value);
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool KeyValueConfig::has(const std::string& key) const { return index_.count(key) > 0; }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  touched_[key] = true;
  const auto it = index_.find(key);
  return it == index_.end() ? fallback : entries_[it->second].second;
}

std::string KeyValueConfig::require_string(const std::string& key) const {
  touched_[key] = true;
  const auto it = index_.find(key);
  if (it == index_.end()) throw ConfigError("missing required config key '" + key + "'");
  return entries_[it->second].second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  touched_[key] = true;
  const auto it = index_.find(key);
  if (it == index_.end()) return fallback;
  try {
    return parse_double(entries_[it->second].second, key);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  touched_[key] = true;
  const auto it = index_.find(key);
  if (it == index_.end()) return fallback;
  try {
    return static_cast<int>(parse_long(entries_[it->second].second, key));
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

std::uint64_t KeyValueConfig::get_uint64(const std::string& key, std::uint64_t fallback) const {
  touched_[key] = true;
  const auto it = index_.find(key);
  if (it == index_.end()) return fallback;
  const std::string t = trim(entries_[it->second].second);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError("unparsable unsigned integer for '" + key + "'");
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  touched_[key] = true;
  const auto it = index_.find(key);
  if (it == index_.end()) return fallback;
  const std::string v = entries_[it->second].second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected boolean for '" + key + "', found '" + v + "'");
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [key, _] : entries_)
    if (key.rfind(prefix, 0) == 0) out.push_back(key);
  return out;
}

std::vector<std::string> KeyValueConfig::untouched_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, _] : entries_)
    if (!touched_.count(key)) out.push_back(key);
  return out;
}

std::string KeyValueConfig::canonical_text() const {
  std::vector<std::pair<std::string, std::string>> sorted = entries_;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (const auto& [k, v] : sorted) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

namespace {

std::vector<int> parse_months(const std::string& text) {
  std::vector<int> months;
  for (const std::string& part : split(text, ',')) {
    const std::string p = trim(part);
    const auto dash = p.find('-');
    if (dash != std::string::npos) {
      const int lo = static_cast<int>(parse_long(p.substr(0, dash), "months"));
      const int hi = static_cast<int>(parse_long(p.substr(dash + 1), "months"));
      for (int m = lo; m <= hi; ++m) months.push_back(m);
    } else if (!p.empty()) {
      months.push_back(static_cast<int>(parse_long(p, "months")));
    }
  }
  return months;
}

std::vector<std::string> parse_list(const std::string& text) {
  std::vector<std::string> out;
  for (const std::string& part : split(text, ',')) {
    const std::string p = trim(part);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

// "middle" name segment of e.g. sim.component.<name>.q_diesel
std::string segment_after(const std::string& key, const std::string& prefix) {
  const std::string rest = key.substr(prefix.size());
  const auto dot = rest.find('.');
  return dot == std::string::npos ? rest : rest.substr(0, dot);
}

std::vector<std::string> ordered_unique_segments(const KeyValueConfig& kv,
                                                 const std::string& prefix) {
  std::vector<std::string> names;
  for (const std::string& key : kv.keys_with_prefix(prefix)) {
    const std::string name = segment_after(key, prefix);
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  }
  return names;
}

std::array<double, kNumPeriods> parse_period_weights(const std::string& text) {
  const std::vector<std::string> parts = parse_list(text);
  std::array<double, kNumPeriods> w{};
  if (parts.size() == 1) {
    w.fill(parse_double(parts[0], "component weight"));
  } else if (parts.size() == kNumPeriods) {
    for (int t = 0; t < kNumPeriods; ++t)
      w[static_cast<std::size_t>(t)] = parse_double(parts[static_cast<std::size_t>(t)],
                                                    "component weight");
  } else {
    throw ConfigError("component weights need 1 or 8 values, found " +
                      std::to_string(parts.size()));
  }
  return w;
}

TagDistribution parse_tags(const std::string& text) {
  TagDistribution tags;
  for (const std::string& part : parse_list(text)) {
    const auto colon = part.find(':');
    if (colon == std::string::npos)
      throw ConfigError("tag distribution entries need label:weight, found '" + part + "'");
    tags.categories.emplace_back(trim(part.substr(0, colon)),
                                 parse_double(part.substr(colon + 1), "tag weight"));
  }
  return tags;
}

}  // namespace

void RunConfig::validate() const {
  if (simulate == input_path.has_value())
    throw ConfigError("run config: exactly one data source (data.input or data.simulate)");
  if (bootstrap.replications < 2) throw ConfigError("run config: bootstrap replications >= 2");
  if (requests.empty()) throw ConfigError("run config: no estimand requests");
  for (const auto& r : requests) {
    if (r.months.empty()) throw ConfigError("run config: request without months");
    for (const int m : r.months)
      if (m < 1 || m > 7) throw ConfigError("run config: months must lie in 1..7");
    if (!r.conditional && !r.unconditional)
      throw ConfigError("run config: request mode selects neither estimator");
  }
  covariates.validate();
  if (simulate) sim.validate();
  if (km_horizon < 1) throw ConfigError("run config: km horizon must be >= 1");
  if (support_bins < 1) throw ConfigError("run config: support bins must be >= 1");
}

RunConfig parse_run_config(const std::string& text) {
  const KeyValueConfig kv = KeyValueConfig::parse(text);
  RunConfig cfg;
  cfg.config_hash = fnv1a64(kv.canonical_text());

  if (kv.has("data.input")) cfg.input_path = kv.require_string("data.input");
  cfg.simulate = kv.get_bool("data.simulate", false);
  cfg.tolerate_invalid = kv.get_bool("data.tolerate_invalid", false);

  // Covariate spec, in file order.
  for (const std::string& key : kv.keys_with_prefix("covariates.")) {
    CovariateEntry e;
    e.name = key.substr(std::string("covariates.").size());
    const std::string v = kv.require_string(key);
    if (v == "binary") {
      e.kind = CovariateKind::Binary;
    } else if (v == "continuous") {
      e.kind = CovariateKind::Continuous;
    } else if (v.rfind("continuous:poly", 0) == 0) {
      e.kind = CovariateKind::Continuous;
      e.poly_degree = static_cast<int>(parse_long(v.substr(15), key));
    } else {
      throw ConfigError("covariate '" + e.name + "': unknown kind '" + v + "'");
    }
    cfg.covariates.entries.push_back(std::move(e));
  }

  // Simulator.
  cfg.sim.theta_high = kv.get_double("sim.theta_high", cfg.sim.theta_high);
  cfg.sim.q_new = kv.get_double("sim.q_new", cfg.sim.q_new);
  cfg.sim.p_new = kv.get_double("sim.p_new", cfg.sim.p_new);
  cfg.sim.n_agents = kv.get_int("sim.n_agents", cfg.sim.n_agents);
  cfg.sim.seed = kv.get_uint64("sim.seed", cfg.sim.seed);
  cfg.sim.shock = kv.get_double("sim.shock", cfg.sim.shock);
  cfg.sim.price_noise_sd = kv.get_double("sim.price_noise_sd", cfg.sim.price_noise_sd);
  cfg.sim.duration_hazard = kv.get_double("sim.duration_hazard", cfg.sim.duration_hazard);
  cfg.sim.duration_censor_day = kv.get_int("sim.duration_censor_day", cfg.sim.duration_censor_day);
  const std::string scope = kv.get_string("sim.shock_scope", "all");
  if (scope != "all") {
    const auto eq = scope.find('=');
    if (eq == std::string::npos)
      throw ConfigError("sim.shock_scope must be 'all' or '<tag>=<category>'");
    cfg.sim.shock_scope = SubgroupFilter{trim(scope.substr(0, eq)), trim(scope.substr(eq + 1))};
  }

  const std::vector<std::string> component_names =
      ordered_unique_segments(kv, "sim.component.");
  if (!component_names.empty()) {
    cfg.sim.components.clear();
    for (const std::string& name : component_names) {
      QualityComponent c;
      c.name = name;
      const std::string base = "sim.component." + name + ".";
      const double q = kv.get_double(base + "q", 0.5);
      c.q_diesel = kv.get_double(base + "q_diesel", q);
      c.q_gasoline = kv.get_double(base + "q_gasoline", q);
      c.spread = kv.get_double(base + "spread", 0.0);
      cfg.sim.components.push_back(std::move(c));
    }
    for (int g = 0; g < 2; ++g) {
      const std::string group_name = (g == 1) ? "treated" : "control";
      std::vector<std::array<double, kNumPeriods>> per_component;
      for (const std::string& name : component_names) {
        const std::string key = "sim.weights." + name + "." + group_name;
        per_component.push_back(kv.has(key) ? parse_period_weights(kv.require_string(key))
                                            : parse_period_weights("1"));
      }
      for (int t = 0; t < kNumPeriods; ++t) {
        std::vector<double> w;
        for (const auto& pc : per_component) w.push_back(pc[static_cast<std::size_t>(t)]);
        cfg.sim.component_weights[static_cast<std::size_t>(g)][static_cast<std::size_t>(t)] = w;
      }
    }
  }

  const std::vector<std::string> link_names = ordered_unique_segments(kv, "sim.covariate.");
  for (const std::string& name : link_names) {
    CovariateLink link;
    link.name = name;
    const std::string base = "sim.covariate." + name + ".";
    const std::string kind = kv.get_string(base + "kind", "linear");
    if (kind == "linear")
      link.kind = CovariateLink::Kind::Linear;
    else if (kind == "threshold")
      link.kind = CovariateLink::Kind::Threshold;
    else if (kind == "noise")
      link.kind = CovariateLink::Kind::Noise;
    else
      throw ConfigError("sim covariate '" + name + "': unknown kind '" + kind + "'");
    link.intercept = kv.get_double(base + "intercept", 0.0);
    link.slope = kv.get_double(base + "slope", 0.0);
    link.noise_sd = kv.get_double(base + "noise_sd", 0.0);
    link.cutoff = kv.get_double(base + "cutoff", 0.5);
    cfg.sim.links.push_back(std::move(link));
  }

  if (kv.has("sim.tags.emission_standard"))
    cfg.sim.emission_tags = parse_tags(kv.require_string("sim.tags.emission_standard"));
  if (kv.has("sim.tags.vehicle_class"))
    cfg.sim.class_tags = parse_tags(kv.require_string("sim.tags.vehicle_class"));
  if (kv.has("sim.tags.seller_type"))
    cfg.sim.seller_tags = parse_tags(kv.require_string("sim.tags.seller_type"));

  // Requests, numbered request.1, request.2, ...
  const std::vector<std::string> request_ids = ordered_unique_segments(kv, "request.");
  for (const std::string& rid : request_ids) {
    RequestSpec r;
    const std::string base = "request." + rid + ".";
    const std::string outcome = kv.get_string(base + "outcome", "diesel_share");
    if (outcome == "diesel_share")
      r.outcome = Outcome::DieselShare;
    else if (outcome == "asking_price")
      r.outcome = Outcome::AskingPrice;
    else
      throw ConfigError("request " + rid + ": unknown outcome '" + outcome + "'");
    if (kv.has(base + "months")) r.months = parse_months(kv.require_string(base + "months"));
    const std::string control = kv.get_string(base + "control", "all");
    if (control == "all")
      r.control = ControlDefinition::AllOtherMakes;
    else if (control == "non_german")
      r.control = ControlDefinition::NonGermanMakes;
    else
      throw ConfigError("request " + rid + ": unknown control definition '" + control + "'");
    const std::string mode = kv.get_string(base + "mode", "unconditional");
    if (mode == "unconditional") {
      r.unconditional = true;
      r.conditional = false;
    } else if (mode == "conditional") {
      r.unconditional = false;
      r.conditional = true;
    } else if (mode == "both") {
      r.unconditional = true;
      r.conditional = true;
    } else {
      throw ConfigError("request " + rid + ": unknown mode '" + mode + "'");
    }
    if (kv.has(base + "subgroup")) r.subgroup_tag = kv.require_string(base + "subgroup");
    cfg.requests.push_back(std::move(r));
  }

  cfg.probit.tol = kv.get_double("probit.tol", cfg.probit.tol);
  cfg.probit.max_iter = kv.get_int("probit.max_iter", cfg.probit.max_iter);
  cfg.probit.separation_bound = kv.get_double("probit.separation_bound",
                                              cfg.probit.separation_bound);

  const std::string kernel = kv.get_string("match.kernel", "triangular");
  if (kernel == "triangular")
    cfg.match.kernel = Kernel::Triangular;
  else if (kernel == "inverse_distance")
    cfg.match.kernel = Kernel::InverseDistance;
  else
    throw ConfigError("unknown match kernel '" + kernel + "'");
  cfg.match.eta = kv.get_double("match.eta", cfg.match.eta);
  cfg.match.radius_floor = kv.get_double("match.radius_floor", cfg.match.radius_floor);

  cfg.bootstrap.replications = kv.get_int("bootstrap.replications", cfg.bootstrap.replications);
  cfg.bootstrap.seed = kv.get_uint64("bootstrap.seed", cfg.bootstrap.seed);
  const std::string ci = kv.get_string("bootstrap.ci", "normal");
  if (ci == "normal")
    cfg.bootstrap.ci = CiKind::Normal;
  else if (ci == "percentile")
    cfg.bootstrap.ci = CiKind::Percentile;
  else
    throw ConfigError("unknown bootstrap ci kind '" + ci + "'");
  cfg.bootstrap.discard_threshold =
      kv.get_double("bootstrap.discard_threshold", cfg.bootstrap.discard_threshold);

  if (kv.has("german_makes")) cfg.german_makes = parse_list(kv.require_string("german_makes"));
  cfg.km_enabled = kv.get_bool("km.enabled", cfg.km_enabled);
  cfg.km_horizon = kv.get_int("km.horizon", cfg.km_horizon);
  cfg.support_bins = kv.get_int("support.bins", cfg.support_bins);
  cfg.output_dir = kv.get_string("output.dir", cfg.output_dir);
  cfg.match_audit = kv.get_bool("output.match_audit", cfg.match_audit);

  for (const std::string& key : kv.untouched_keys())
    cfg.warnings.push_back("unknown config key '" + key + "'");

  cfg.validate();
  return cfg;
}

RunConfig parse_run_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

namespace {

const std::vector<std::string> kCoreColumns = {
    "id",   "group",          "period",        "fuel",        "price", "duration_days",
    "censored", "emission_standard", "vehicle_class", "seller_type", "make"};

}  // namespace

std::vector<ObservationRecord> load_observations(const std::string& path,
                                                 const CovariateSpec& spec,
                                                 const LoadOptions& options, LoadReport* report) {
  spec.validate();
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open observation file '" + path + "'");

  std::string header_line;
  if (!std::getline(in, header_line)) throw SchemaError("observation file '" + path + "' is empty");
  if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
  const std::vector<std::string> header = split(header_line, ',');

  std::map<std::string, int> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = trim(header[i]);
    if (column.count(name)) throw SchemaError("duplicate column '" + name + "'");
    column[name] = static_cast<int>(i);
  }

  const auto col = [&](const std::string& name) -> int {
    const auto it = column.find(name);
    return it == column.end() ? -1 : it->second;
  };
  const bool has_period = col("period") >= 0;
  const bool has_offset = col("days_since_disclosure") >= 0;
  for (const std::string& name : kCoreColumns) {
    if (name == "period") continue;
    if (name == "make") continue;  // optional
    if (col(name) < 0) throw SchemaError("missing column '" + name + "' in '" + path + "'");
  }
  if (!has_period && !has_offset)
    throw SchemaError("missing column 'period' (or 'days_since_disclosure') in '" + path + "'");
  for (const auto& e : spec.entries)
    if (col(e.name) < 0) throw SchemaError("missing covariate column '" + e.name + "'");

  std::vector<ObservationRecord> records;
  LoadReport local;
  std::string line;
  long rowno = 0;
  while (std::getline(in, line)) {
    ++rowno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++local.rows;
    const std::vector<std::string> fields = split(line, ',');
    try {
      if (fields.size() != header.size())
        throw ValidationError("expected " + std::to_string(header.size()) + " fields, found " +
                              std::to_string(fields.size()));
      ObservationRecord rec;
      rec.id = trim(fields[static_cast<std::size_t>(col("id"))]);
      rec.group = static_cast<int>(parse_long(fields[static_cast<std::size_t>(col("group"))], "group"));
      if (has_period) {
        rec.period =
            static_cast<int>(parse_long(fields[static_cast<std::size_t>(col("period"))], "period"));
      } else {
        const long offset = parse_long(
            fields[static_cast<std::size_t>(col("days_since_disclosure"))], "days_since_disclosure");
        const auto p = period_from_offset(static_cast<int>(offset));
        if (!p)
          throw ValidationError("first-online offset " + std::to_string(offset) +
                                " lies outside the sample window");
        rec.period = *p;
      }
      rec.fuel = static_cast<int>(parse_long(fields[static_cast<std::size_t>(col("fuel"))], "fuel"));
      rec.price = parse_double(fields[static_cast<std::size_t>(col("price"))], "price");
      rec.duration_days = static_cast<int>(
          parse_long(fields[static_cast<std::size_t>(col("duration_days"))], "duration_days"));
      const std::string cen = trim(fields[static_cast<std::size_t>(col("censored"))]);
      if (cen == "1" || cen == "true")
        rec.censored = true;
      else if (cen == "0" || cen == "false")
        rec.censored = false;
      else
        throw ValidationError("unparsable censoring flag '" + cen + "'");
      rec.emission_standard = trim(fields[static_cast<std::size_t>(col("emission_standard"))]);
      rec.vehicle_class = trim(fields[static_cast<std::size_t>(col("vehicle_class"))]);
      rec.seller_type = trim(fields[static_cast<std::size_t>(col("seller_type"))]);
      if (col("make") >= 0) rec.make = trim(fields[static_cast<std::size_t>(col("make"))]);
      rec.covariates.reserve(spec.size());
      for (const auto& e : spec.entries)
        rec.covariates.push_back(
            parse_double(fields[static_cast<std::size_t>(col(e.name))], e.name));
      validate_record(rec, spec);
      records.push_back(std::move(rec));
    } catch (const Error& e) {
      ++local.invalid;
      local.issues.push_back("row " + std::to_string(rowno) + ": " + e.what());
    }
  }

  if (report) *report = local;
  if (local.invalid > 0 && !options.tolerate_invalid) {
    std::string msg = "observation file '" + path + "': " + std::to_string(local.invalid) +
                      " invalid row(s); first: " + local.issues.front();
    throw ValidationError(msg);
  }
  return records;
}

void write_observations(const std::string& path, const std::vector<ObservationRecord>& records,
                        const CovariateSpec& spec) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "id,group,period,fuel,price,duration_days,censored,emission_standard,vehicle_class,"
         "seller_type,make";
  for (const auto& e : spec.entries) out << ',' << e.name;
  out << '\n';
  for (const auto& rec : records) {
    out << rec.id << ',' << rec.group << ',' << rec.period << ',' << rec.fuel << ','
        << format_double(rec.price) << ',' << rec.duration_days << ',' << (rec.censored ? 1 : 0)
        << ',' << rec.emission_standard << ',' << rec.vehicle_class << ',' << rec.seller_type
        << ',' << rec.make;
    for (const double v : rec.covariates) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace cdid

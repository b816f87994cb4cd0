#include "cdid/market_sim.hpp"

#include <algorithm>
#include <cmath>

#include "cdid/rng.hpp"

namespace cdid {

void MarketSimConfig::validate() const {
  if (!(theta_high > 1.0)) throw ConfigError("market sim: theta_high must exceed 1");
  if (!(q_new > 0.0)) throw ConfigError("market sim: q_new must be positive");
  if (!(theta_high * q_new > p_new && p_new > q_new))
    throw ConfigError("market sim: efficiency condition theta_high*q_new > p_new > q_new violated");
  if (n_agents <= 0) throw ConfigError("market sim: n_agents must be positive");
  if (shock < 0.0) throw ConfigError("market sim: shock must be >= 0");
  if (components.empty()) throw ConfigError("market sim: no quality components");
  for (const auto& c : components) {
    if (c.spread < 0.0) throw ConfigError("market sim: negative spread in component " + c.name);
    for (const double center : {c.q_diesel, c.q_gasoline}) {
      const double lo = center - c.spread / 2.0;
      const double hi = center + c.spread / 2.0;
      if (!(lo > 0.0 && hi < q_new))
        throw ConfigError("market sim: component " + c.name + " leaves (0, q_new)");
    }
    // The shock must keep treated-diesel quality positive.
    if (c.q_diesel - c.spread / 2.0 - shock <= 0.0)
      throw ConfigError("market sim: shock drives component " + c.name + " quality to <= 0");
  }
  for (int g = 0; g < 2; ++g)
    for (int t = 0; t < kNumPeriods; ++t) {
      const auto& w = component_weights[static_cast<std::size_t>(g)][static_cast<std::size_t>(t)];
      if (w.size() != components.size())
        throw ConfigError("market sim: component weights shape mismatch");
      double sum = 0.0;
      for (const double x : w) {
        if (x < 0.0) throw ConfigError("market sim: negative component weight");
        sum += x;
      }
      if (sum <= 0.0) throw ConfigError("market sim: component weights sum to zero");
    }
  for (const auto* tags : {&emission_tags, &class_tags, &seller_tags}) {
    if (tags->categories.empty()) throw ConfigError("market sim: empty tag distribution");
    double sum = 0.0;
    for (const auto& [_, w] : tags->categories) {
      if (w < 0.0) throw ConfigError("market sim: negative tag weight");
      sum += w;
    }
    if (sum <= 0.0) throw ConfigError("market sim: tag weights sum to zero");
  }
  if (shock_scope && shock_scope->first != "emission_standard" &&
      shock_scope->first != "vehicle_class" && shock_scope->first != "seller_type")
    throw ConfigError("market sim: unknown shock scope tag '" + shock_scope->first + "'");
  if (duration_hazard <= 0.0 || duration_hazard > 1.0)
    throw ConfigError("market sim: duration hazard must lie in (0, 1]");
  if (duration_censor_day < 1) throw ConfigError("market sim: censor day must be >= 1");
  if (control_makes.empty()) throw ConfigError("market sim: control make list empty");
}

CovariateSpec MarketSimConfig::covariate_spec() const {
  CovariateSpec spec;
  for (const auto& link : links) {
    CovariateEntry e;
    e.name = link.name;
    e.kind = (link.kind == CovariateLink::Kind::Threshold) ? CovariateKind::Binary
                                                           : CovariateKind::Continuous;
    spec.entries.push_back(e);
  }
  return spec;
}

double trade_utility(double theta, double q, const MarketSimConfig& cfg) {
  if (!(theta >= 1.0 && theta <= cfg.theta_high))
    throw Error("trade_utility: theta outside [1, theta_high]");
  if (!(q > 0.0 && q < cfg.q_new)) throw Error("trade_utility: q outside (0, q_new)");
  return theta * (cfg.q_new - q) - (cfg.p_new - q);
}

double seller_threshold(double q, const MarketSimConfig& cfg) {
  if (!(q > 0.0 && q < cfg.q_new)) throw Error("seller_threshold: q outside (0, q_new)");
  return (cfg.p_new - q) / (cfg.q_new - q);
}

double supply_share(double q, const MarketSimConfig& cfg) {
  const double threshold = seller_threshold(q, cfg);
  const double h = (threshold - 1.0) / (cfg.theta_high - 1.0);
  return std::clamp(1.0 - h, 0.0, 1.0);
}

double used_price(double q) {
  if (!(q > 0.0)) throw Error("used_price: q must be positive");
  return q;
}

namespace {

int draw_index(Rng& rng, const std::vector<double>& weights) {
  double sum = 0.0;
  for (const double w : weights) sum += w;
  double u = rng.uniform01() * sum;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

const std::string& draw_tag(Rng& rng, const TagDistribution& tags) {
  double sum = 0.0;
  for (const auto& [_, w] : tags.categories) sum += w;
  double u = rng.uniform01() * sum;
  for (const auto& [label, w] : tags.categories) {
    u -= w;
    if (u < 0.0) return label;
  }
  return tags.categories.back().first;
}

}  // namespace

std::vector<ObservationRecord> simulate_panel(const MarketSimConfig& cfg) {
  cfg.validate();
  std::vector<ObservationRecord> panel;

  int cell_index = 0;
  for (int g = 0; g < 2; ++g) {
    for (int fuel = 0; fuel < 2; ++fuel) {
      for (int t = 0; t < kNumPeriods; ++t, ++cell_index) {
        Rng rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(cell_index)));
        const auto& weights =
            cfg.component_weights[static_cast<std::size_t>(g)][static_cast<std::size_t>(t)];
        for (int agent = 0; agent < cfg.n_agents; ++agent) {
          const auto& comp = cfg.components[static_cast<std::size_t>(draw_index(rng, weights))];
          const double center = (fuel == 1) ? comp.q_diesel : comp.q_gasoline;
          double q0 = center;
          if (comp.spread > 0.0) q0 += rng.uniform(-comp.spread / 2.0, comp.spread / 2.0);

          const std::string& emission = draw_tag(rng, cfg.emission_tags);
          const std::string& vclass = draw_tag(rng, cfg.class_tags);
          const std::string& seller = draw_tag(rng, cfg.seller_tags);

          bool shocked = (g == 1 && fuel == 1 && t >= 1 && cfg.shock > 0.0);
          if (shocked && cfg.shock_scope) {
            const auto& [tag, category] = *cfg.shock_scope;
            const std::string& value = (tag == "emission_standard") ? emission
                                       : (tag == "vehicle_class")   ? vclass
                                                                    : seller;
            shocked = (value == category);
          }
          const double q_eff = shocked ? q0 - cfg.shock : q0;

          const double theta = rng.uniform(1.0, cfg.theta_high);
          // Covariates and the make label consume draws whether or not the
          // agent lists, keeping cells coupled only through the seed.
          std::vector<double> covariates;
          covariates.reserve(cfg.links.size());
          for (const auto& link : cfg.links) {
            switch (link.kind) {
              case CovariateLink::Kind::Linear:
                covariates.push_back(link.intercept + link.slope * q0 +
                                     (link.noise_sd > 0.0 ? rng.normal(0.0, link.noise_sd) : 0.0));
                break;
              case CovariateLink::Kind::Threshold:
                covariates.push_back(q0 < link.cutoff ? 1.0 : 0.0);
                break;
              case CovariateLink::Kind::Noise:
                covariates.push_back(rng.normal(0.0, link.noise_sd));
                break;
            }
          }
          const std::string& make =
              (g == 1) ? cfg.treated_make
                       : cfg.control_makes[rng.bounded(cfg.control_makes.size())];
          const int duration = rng.geometric_days(cfg.duration_hazard);
          const double price_noise =
              (cfg.price_noise_sd > 0.0) ? rng.normal(0.0, cfg.price_noise_sd) : 0.0;

          if (trade_utility(theta, q_eff, cfg) <= 0.0) continue;

          ObservationRecord rec;
          rec.id = "g" + std::to_string(g) + "f" + std::to_string(fuel) + "t" + std::to_string(t) +
                   "a" + std::to_string(agent);
          rec.group = g;
          rec.period = t;
          rec.fuel = fuel;
          rec.price = std::max(0.0, used_price(q_eff) + price_noise);
          rec.covariates = std::move(covariates);
          rec.emission_standard = emission;
          rec.vehicle_class = vclass;
          rec.seller_type = seller;
          rec.make = make;
          rec.censored = duration > cfg.duration_censor_day;
          rec.duration_days = rec.censored ? cfg.duration_censor_day : duration;
          panel.push_back(std::move(rec));
        }
      }
    }
  }
  return panel;
}

}  // namespace cdid

#include "cdid/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cdid {

std::vector<int> all_rows(const std::vector<ObservationRecord>& records) {
  std::vector<int> rows(records.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

DesignMatrix apply_covariate_spec(const std::vector<ObservationRecord>& records,
                                  std::span<const int> rows, const CovariateSpec& spec,
                                  bool standardize) {
  spec.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());

  if (spec.empty()) {
    // An empty spec means "ignore covariates": a zero-column design,
    // regardless of what the records carry.
    DesignMatrix dm;
    dm.values.resize(n, 0);
    return dm;
  }

  for (const int r : rows) {
    const auto& rec = records[static_cast<std::size_t>(r)];
    if (rec.covariates.size() != spec.size())
      throw SchemaError("record '" + rec.id + "': expected " + std::to_string(spec.size()) +
                        " covariate fields, found " + std::to_string(rec.covariates.size()));
  }

  DesignMatrix dm;
  dm.values.resize(n, static_cast<Eigen::Index>(spec.expanded_size()));
  Eigen::Index col = 0;
  for (std::size_t f = 0; f < spec.entries.size(); ++f) {
    const auto& entry = spec.entries[f];
    if (entry.kind == CovariateKind::Binary) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& rec = records[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
        const double v = rec.covariates[f];
        if (!std::isfinite(v))
          throw ValidationError("record '" + rec.id + "': non-finite value for field '" +
                                entry.name + "'");
        dm.values(i, col) = v;
      }
      dm.names.push_back(entry.name);
      dm.kinds.push_back(CovariateKind::Binary);
      ++col;
      continue;
    }
    for (int k = 1; k <= entry.poly_degree; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& rec = records[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
        const double v = rec.covariates[f];
        if (!std::isfinite(v))
          throw ValidationError("record '" + rec.id + "': non-finite value for field '" +
                                entry.name + "'");
        dm.values(i, col) = std::pow(v, k);
      }
      dm.names.push_back(k == 1 ? entry.name : entry.name + "^" + std::to_string(k));
      dm.kinds.push_back(CovariateKind::Continuous);
      ++col;
    }
  }

  if (standardize && n > 1) {
    for (Eigen::Index c = 0; c < dm.values.cols(); ++c) {
      if (dm.kinds[static_cast<std::size_t>(c)] == CovariateKind::Binary) continue;
      const double mean = dm.values.col(c).mean();
      const double ss = (dm.values.col(c).array() - mean).square().sum();
      const double sd = std::sqrt(ss / static_cast<double>(n - 1));
      dm.values.col(c).array() -= mean;
      if (sd > 0.0) dm.values.col(c).array() /= sd;
    }
  }
  return dm;
}

DesignMatrix apply_covariate_spec(const std::vector<ObservationRecord>& records,
                                  const CovariateSpec& spec, bool standardize) {
  return apply_covariate_spec(records, all_rows(records), spec, standardize);
}

namespace {

bool in_german_list(const std::string& make, std::span<const std::string> german_makes) {
  return std::find(german_makes.begin(), german_makes.end(), make) != german_makes.end();
}

void sort_by_id(std::vector<int>& cell, const std::vector<ObservationRecord>& records) {
  std::stable_sort(cell.begin(), cell.end(), [&](int a, int b) {
    return records[static_cast<std::size_t>(a)].id < records[static_cast<std::size_t>(b)].id;
  });
}

}  // namespace

CellPartition partition_cells(const std::vector<ObservationRecord>& records,
                              std::span<const int> rows, const EstimandRequest& request,
                              std::span<const std::string> german_makes) {
  request.validate();
  const int s = request.post_period;
  CellPartition part;
  for (const int r : rows) {
    const auto& rec = records[static_cast<std::size_t>(r)];
    if (rec.period != 0 && rec.period != s) continue;
    if (request.outcome == Outcome::AskingPrice && rec.fuel != 1) continue;
    if (request.control == ControlDefinition::NonGermanMakes && rec.group == 0 &&
        in_german_list(rec.make, german_makes))
      continue;
    if (request.subgroup_filter) {
      const auto& [tag, category] = *request.subgroup_filter;
      const std::string* value = nullptr;
      if (tag == "emission_standard")
        value = &rec.emission_standard;
      else if (tag == "vehicle_class")
        value = &rec.vehicle_class;
      else if (tag == "seller_type")
        value = &rec.seller_type;
      else
        throw ConfigError("unknown subgroup tag '" + tag + "'");
      if (*value != category) continue;
    }
    if (rec.group == 1)
      (rec.period == s ? part.treated_post : part.treated_pre).push_back(r);
    else
      (rec.period == s ? part.control_post : part.control_pre).push_back(r);
  }

  const auto require = [&](const std::vector<int>& cell, const char* name) {
    if (cell.empty())
      throw EstimandError(std::string("empty cell ") + name + " for month " + std::to_string(s));
  };
  require(part.treated_post, "G=1,T=s");
  require(part.treated_pre, "G=1,T=0");
  require(part.control_post, "G=0,T=s");
  require(part.control_pre, "G=0,T=0");

  sort_by_id(part.treated_post, records);
  sort_by_id(part.treated_pre, records);
  sort_by_id(part.control_post, records);
  sort_by_id(part.control_pre, records);
  return part;
}

CellPartition partition_cells(const std::vector<ObservationRecord>& records,
                              const EstimandRequest& request,
                              std::span<const std::string> german_makes) {
  return partition_cells(records, all_rows(records), request, german_makes);
}

}  // namespace cdid

#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "cdid/types.hpp"

namespace cdid {

// Expanded covariate matrix: one row per selected record, columns in spec
// order with polynomial terms grouped per variable.
struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> names;
  std::vector<CovariateKind> kinds;

  Eigen::Index cols() const { return values.cols(); }
  Eigen::Index rows() const { return values.rows(); }
};

// Expands raw covariates into the design matrix. Continuous variables with
// polynomial(k) become columns x, x^2, ..., x^k; when `standardize` is set
// each of those columns is centered and scaled by the mean/sd of the pooled
// sample given here (sample sd, n-1 denominator). Binary columns pass through
// untouched. Deterministic: identical input yields an identical matrix.
DesignMatrix apply_covariate_spec(const std::vector<ObservationRecord>& records,
                                  std::span<const int> rows, const CovariateSpec& spec,
                                  bool standardize = true);

// Convenience overload over all records.
DesignMatrix apply_covariate_spec(const std::vector<ObservationRecord>& records,
                                  const CovariateSpec& spec, bool standardize = true);

// The four difference-in-differences cells for one request. Row indices refer
// to the caller's record vector and are sorted by record id, which makes every
// downstream computation independent of input order.
struct CellPartition {
  std::vector<int> treated_post;  // G=1, T=s
  std::vector<int> treated_pre;   // G=1, T=0
  std::vector<int> control_post;  // G=0, T=s
  std::vector<int> control_pre;   // G=0, T=0

  std::size_t total() const {
    return treated_post.size() + treated_pre.size() + control_post.size() + control_pre.size();
  }
};

// Filters records for the request (period in {0, s}; diesel only for price
// outcomes; subgroup tag; control-group definition) and partitions them into
// the four cells. Throws EstimandError naming the cell when one is empty.
CellPartition partition_cells(const std::vector<ObservationRecord>& records,
                              std::span<const int> rows, const EstimandRequest& request,
                              std::span<const std::string> german_makes);

CellPartition partition_cells(const std::vector<ObservationRecord>& records,
                              const EstimandRequest& request,
                              std::span<const std::string> german_makes);

// All row indices 0..n-1.
std::vector<int> all_rows(const std::vector<ObservationRecord>& records);

}  // namespace cdid

#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "cdid/types.hpp"

namespace cdid {

struct ProbitOptions {
  double tol = 1e-8;  // convergence: inf-norm of the mean gradient
  int max_iter = 100;
  double separation_bound = 1e8;  // inf-norm bound on coefficients
  double prune_tol = 1e-9;        // relative residual below which a column is dropped
};

struct PropensityModel {
  // Intercept first, then one entry per design column. Columns dropped as
  // collinear keep a zero coefficient so prediction works on the full design.
  Eigen::VectorXd coefficients;
  bool converged = false;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  double log_likelihood = 0.0;
  std::vector<double> ll_trace;      // log-likelihood after each accepted step
  std::vector<int> dropped_columns;  // design column indices pruned before the fit
};

// Maximum-likelihood probit of labels on [1, design]. Newton-Raphson on the
// observed information with a Fisher-scoring fallback and step halving, so the
// log-likelihood never decreases across accepted steps. Trailing collinear
// columns are dropped with a zero coefficient rather than failing; the
// degree-7 polynomial designs make that a routine event.
//
// Throws DegenerateOutcomeError when labels are single-class and
// SeparationError when the coefficient norm diverges past the bound.
PropensityModel fit_probit(const Eigen::MatrixXd& design, std::span<const int> labels,
                           const ProbitOptions& opts = {});

// Phi(beta0 + x.beta), clipped to [1e-12, 1 - 1e-12]. Clipping happens only
// here, never inside the likelihood. Throws Error on dimension mismatch.
double predict_score(const PropensityModel& model, const Eigen::RowVectorXd& row);

Eigen::VectorXd predict_scores(const PropensityModel& model, const Eigen::MatrixXd& design);

// Average marginal effect per design column: mean phi(x.beta) * beta_k for
// continuous columns, the discrete contrast Phi(.|x_k=1) - Phi(.|x_k=0) for
// binary ones. Intercept-only models yield an empty vector.
Eigen::VectorXd marginal_effects(const PropensityModel& model, const Eigen::MatrixXd& design,
                                 std::span<const CovariateKind> kinds);

// Log-likelihood and analytic gradient on the augmented design [1, X]; exposed
// so tests can check the gradient against finite differences.
double probit_loglik(const Eigen::MatrixXd& design, std::span<const int> labels,
                     const Eigen::VectorXd& beta);
Eigen::VectorXd probit_gradient(const Eigen::MatrixXd& design, std::span<const int> labels,
                                const Eigen::VectorXd& beta);

// Greedy left-to-right scan: returns the kept column indices, dropping any
// column whose residual after projecting on the kept ones is below
// tol * ||column||. Shared by the probit fit and the matching adjustment.
std::vector<int> prune_collinear_columns(const Eigen::MatrixXd& m, double tol);

}  // namespace cdid

#include "cdid/probit.hpp"

#include <cmath>

#include "cdid/normal.hpp"

namespace cdid {

namespace {

Eigen::MatrixXd augment(const Eigen::MatrixXd& design) {
  Eigen::MatrixXd x(design.rows(), design.cols() + 1);
  x.col(0).setOnes();
  if (design.cols() > 0) x.rightCols(design.cols()) = design;
  return x;
}

// Score residual and observed-information weight per observation.
//   y=1: r = lambda(z),  w = lambda(z) * (lambda(z) + z)
//   y=0: r = -lambda(-z), w = lambda(-z) * (lambda(-z) - z)
// Both weights are positive for any finite z, so the Newton system is
// positive definite whenever the design has full rank.
void score_and_weight(double z, int y, double& r, double& w) {
  if (y == 1) {
    const double lam = inverse_mills(z);
    r = lam;
    w = lam * (lam + z);
  } else {
    const double lam = inverse_mills(-z);
    r = -lam;
    w = lam * (lam - z);
  }
  if (!(w > 0.0)) w = 0.0;
}

double fisher_weight(double z) {
  // phi(z)^2 / (Phi(z) * Phi(-z)), computed in logs.
  return std::exp(2.0 * norm_logpdf(z) - norm_logcdf(z) - norm_logcdf(-z));
}

}  // namespace

std::vector<int> prune_collinear_columns(const Eigen::MatrixXd& m, double tol) {
  std::vector<int> kept;
  if (m.cols() == 0) return kept;
  Eigen::MatrixXd basis(m.rows(), m.cols());
  Eigen::Index nb = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Eigen::VectorXd v = m.col(j);
    const double norm0 = v.norm();
    // Projected twice for numerical stability (re-orthogonalization).
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index b = 0; b < nb; ++b) v -= basis.col(b).dot(v) * basis.col(b);
    if (norm0 == 0.0 || v.norm() <= tol * norm0) continue;
    basis.col(nb++) = v / v.norm();
    kept.push_back(static_cast<int>(j));
  }
  return kept;
}

double probit_loglik(const Eigen::MatrixXd& design, std::span<const int> labels,
                     const Eigen::VectorXd& beta) {
  const Eigen::MatrixXd x = augment(design);
  const Eigen::VectorXd z = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    ll += labels[static_cast<std::size_t>(i)] == 1 ? norm_logcdf(z[i]) : norm_logcdf(-z[i]);
  return ll;
}

Eigen::VectorXd probit_gradient(const Eigen::MatrixXd& design, std::span<const int> labels,
                                const Eigen::VectorXd& beta) {
  const Eigen::MatrixXd x = augment(design);
  const Eigen::VectorXd z = x * beta;
  Eigen::VectorXd r(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    double ri, wi;
    score_and_weight(z[i], labels[static_cast<std::size_t>(i)], ri, wi);
    r[i] = ri;
  }
  return x.transpose() * r;
}

PropensityModel fit_probit(const Eigen::MatrixXd& design, std::span<const int> labels,
                           const ProbitOptions& opts) {
  const Eigen::Index n = design.rows();
  if (static_cast<std::size_t>(n) != labels.size())
    throw Error("fit_probit: label length does not match design rows");
  if (n == 0) throw Error("fit_probit: empty sample");

  long ones = 0;
  for (const int y : labels) {
    if (y != 0 && y != 1) throw Error("fit_probit: labels must be 0/1");
    ones += y;
  }
  if (ones == 0 || ones == n)
    throw DegenerateOutcomeError("fit_probit: labels contain a single class");

  Eigen::MatrixXd x = augment(design);
  const std::vector<int> kept = prune_collinear_columns(x, opts.prune_tol);

  PropensityModel model;
  {
    std::size_t k = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (k < kept.size() && kept[k] == j)
        ++k;
      else
        model.dropped_columns.push_back(static_cast<int>(j) - 1);  // design index
    }
  }

  Eigen::MatrixXd xk(n, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) xk.col(static_cast<Eigen::Index>(j)) = x.col(kept[j]);
  const Eigen::Index p = xk.cols();

  const auto loglik_at = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd z = xk * b;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      ll += labels[static_cast<std::size_t>(i)] == 1 ? norm_logcdf(z[i]) : norm_logcdf(-z[i]);
    return ll;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = loglik_at(beta);
  model.ll_trace.push_back(ll);

  Eigen::VectorXd z(n), r(n), w(n);
  double grad_norm = 0.0;
  int iter = 0;
  bool converged = false;

  const auto newton_direction = [&](const Eigen::VectorXd& grad) {
    Eigen::MatrixXd info = xk.transpose() * w.asDiagonal() * xk;
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) {
      // Fisher scoring fallback: the expected information is better
      // conditioned far from the optimum.
      for (Eigen::Index i = 0; i < n; ++i) w[i] = fisher_weight(z[i]);
      info = xk.transpose() * w.asDiagonal() * xk;
      llt.compute(info);
      if (llt.info() != Eigen::Success)
        throw Error("fit_probit: information matrix not positive definite after pruning");
    }
    return Eigen::VectorXd(llt.solve(grad));
  };

  for (; iter < opts.max_iter; ++iter) {
    z = xk * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      double ri, wi;
      score_and_weight(z[i], labels[static_cast<std::size_t>(i)], ri, wi);
      r[i] = ri;
      w[i] = wi;
    }
    const Eigen::VectorXd grad = xk.transpose() * r;
    grad_norm = grad.lpNorm<Eigen::Infinity>() / static_cast<double>(n);
    if (grad_norm <= opts.tol) {
      converged = true;
      // One polishing step: Newton converges quadratically, so this turns a
      // coefficient error of order tol into one of order tol^2. Accepted only
      // when both the likelihood and the gradient norm improve.
      const Eigen::VectorXd direction = newton_direction(grad);
      const Eigen::VectorXd candidate = beta + direction;
      const double ll_polished = loglik_at(candidate);
      if (std::isfinite(ll_polished) && ll_polished >= ll) {
        const Eigen::VectorXd zc = xk * candidate;
        Eigen::VectorXd rc(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          double ri, wi;
          score_and_weight(zc[i], labels[static_cast<std::size_t>(i)], ri, wi);
          rc[i] = ri;
        }
        const double polished_norm =
            (xk.transpose() * rc).lpNorm<Eigen::Infinity>() / static_cast<double>(n);
        if (polished_norm <= grad_norm) {
          beta = candidate;
          ll = ll_polished;
          grad_norm = polished_norm;
          model.ll_trace.push_back(ll);
        }
      }
      break;
    }

    const Eigen::VectorXd direction = newton_direction(grad);

    // Step halving keeps the ascent monotone.
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h < 60; ++h, step *= 0.5) {
      const Eigen::VectorXd candidate = beta + step * direction;
      const double ll_new = loglik_at(candidate);
      if (std::isfinite(ll_new) && ll_new >= ll) {
        beta = candidate;
        ll = ll_new;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no improving step; report non-convergence below
    model.ll_trace.push_back(ll);

    if (beta.lpNorm<Eigen::Infinity>() > opts.separation_bound)
      throw SeparationError("fit_probit: coefficient norm exceeded " +
                            std::to_string(opts.separation_bound) +
                            "; labels look perfectly separated");
  }

  if (!converged) {
    // Recompute the gradient norm at the final iterate for the report.
    z = xk * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      double ri, wi;
      score_and_weight(z[i], labels[static_cast<std::size_t>(i)], ri, wi);
      r[i] = ri;
    }
    grad_norm = (xk.transpose() * r).lpNorm<Eigen::Infinity>() / static_cast<double>(n);
    converged = grad_norm <= opts.tol;
  }

  model.coefficients = Eigen::VectorXd::Zero(x.cols());
  for (std::size_t j = 0; j < kept.size(); ++j)
    model.coefficients[kept[j]] = beta[static_cast<Eigen::Index>(j)];
  model.converged = converged;
  model.iterations = iter;
  model.final_gradient_norm = grad_norm;
  model.log_likelihood = ll;
  return model;
}

double predict_score(const PropensityModel& model, const Eigen::RowVectorXd& row) {
  if (row.size() + 1 != model.coefficients.size())
    throw Error("predict_score: row length does not match model");
  const double z = model.coefficients[0] + row * model.coefficients.tail(row.size());
  constexpr double eps = 1e-12;
  return std::clamp(norm_cdf(z), eps, 1.0 - eps);
}

Eigen::VectorXd predict_scores(const PropensityModel& model, const Eigen::MatrixXd& design) {
  if (design.cols() + 1 != model.coefficients.size())
    throw Error("predict_scores: design width does not match model");
  Eigen::VectorXd z = design * model.coefficients.tail(design.cols());
  z.array() += model.coefficients[0];
  constexpr double eps = 1e-12;
  Eigen::VectorXd scores(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i)
    scores[i] = std::clamp(norm_cdf(z[i]), eps, 1.0 - eps);
  return scores;
}

Eigen::VectorXd marginal_effects(const PropensityModel& model, const Eigen::MatrixXd& design,
                                 std::span<const CovariateKind> kinds) {
  if (design.cols() + 1 != model.coefficients.size())
    throw Error("marginal_effects: design width does not match model");
  if (static_cast<std::size_t>(design.cols()) != kinds.size())
    throw Error("marginal_effects: kinds length does not match design");
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  Eigen::VectorXd z = design * model.coefficients.tail(p);
  z.array() += model.coefficients[0];

  Eigen::VectorXd effects(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double beta_k = model.coefficients[k + 1];
    double sum = 0.0;
    if (kinds[static_cast<std::size_t>(k)] == CovariateKind::Continuous) {
      for (Eigen::Index i = 0; i < n; ++i) sum += norm_pdf(z[i]) * beta_k;
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double base = z[i] - design(i, k) * beta_k;
        sum += norm_cdf(base + beta_k) - norm_cdf(base);
      }
    }
    effects[k] = sum / static_cast<double>(n);
  }
  return effects;
}

}  // namespace cdid

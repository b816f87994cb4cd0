#pragma once

// Brute-force reference implementation of the matching pipeline
// (trim -> nearest-neighbor radius -> kernel weights -> weighted-regression
// bias adjustment). Deliberately independent of the library internals: plain
// quadratic loops, a hand-rolled Gauss-Jordan solve, no Eigen, no shared
// helpers. Tests compare the production pipeline against this.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace brute {

struct MatchCell {
  int comp;
  double weight;
};

inline std::vector<char> trim(const std::vector<double>& ref, const std::vector<double>& comp) {
  double max_comp = comp[0];
  for (const double c : comp) max_comp = std::max(max_comp, c);
  std::vector<char> keep(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) keep[i] = ref[i] > max_comp ? 0 : 1;
  return keep;
}

inline std::vector<double> nn_dists(const std::vector<double>& ref,
                                    const std::vector<double>& comp,
                                    const std::vector<char>& keep) {
  std::vector<double> out;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!keep[i]) continue;
    double best = std::fabs(ref[i] - comp[0]);
    for (const double c : comp) best = std::min(best, std::fabs(ref[i] - c));
    out.push_back(best);
  }
  return out;
}

inline double radius(std::vector<double> dists, double floor_value = 1e-12) {
  std::sort(dists.begin(), dists.end());
  const std::size_t n = dists.size();
  const std::size_t rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(n)));
  const double q = dists[(rank < 1 ? 1 : rank) - 1];
  return std::max(0.9 * q, floor_value);
}

inline std::vector<std::vector<MatchCell>> match(const std::vector<double>& ref,
                                                 const std::vector<double>& comp, double r,
                                                 const std::vector<char>& keep,
                                                 double eta = 1e-9) {
  std::vector<std::vector<MatchCell>> out(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!keep[i]) continue;
    double sum = 0.0;
    for (std::size_t j = 0; j < comp.size(); ++j) {
      const double d = std::fabs(ref[i] - comp[j]);
      if (d <= r) {
        const double w = (1.0 - d / r) + eta;
        out[i].push_back({static_cast<int>(j), w});
        sum += w;
      }
    }
    if (out[i].empty()) {
      double best = std::fabs(ref[i] - comp[0]);
      for (const double c : comp) best = std::min(best, std::fabs(ref[i] - c));
      int ties = 0;
      for (const double c : comp)
        if (std::fabs(ref[i] - c) == best) ++ties;
      for (std::size_t j = 0; j < comp.size(); ++j)
        if (std::fabs(ref[i] - comp[j]) == best)
          out[i].push_back({static_cast<int>(j), 1.0 / ties});
    } else {
      for (auto& mc : out[i]) mc.weight /= sum;
    }
  }
  return out;
}

// Solves A x = b by Gauss-Jordan with partial pivoting.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    if (std::fabs(a[pivot][col]) < 1e-12) throw std::runtime_error("brute solve: singular");
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    const double d = a[col][col];
    for (std::size_t c = 0; c < n; ++c) a[col][c] /= d;
    b[col] /= d;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  return b;
}

// Weighted least squares of y on [1, X]; returns p+1 coefficients.
inline std::vector<double> wls(const std::vector<std::vector<double>>& x,
                               const std::vector<double>& y, const std::vector<double>& w) {
  const std::size_t n = y.size();
  const std::size_t p = x.empty() ? 0 : x[0].size();
  const std::size_t dim = p + 1;
  std::vector<std::vector<double>> a(dim, std::vector<double>(dim, 0.0));
  std::vector<double> b(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(dim, 1.0);
    for (std::size_t k = 0; k < p; ++k) row[k + 1] = x[i][k];
    for (std::size_t r = 0; r < dim; ++r) {
      for (std::size_t c = 0; c < dim; ++c) a[r][c] += w[i] * row[r] * row[c];
      b[r] += w[i] * row[r] * y[i];
    }
  }
  return solve_dense(std::move(a), std::move(b));
}

struct PipelineResult {
  std::vector<char> keep;
  double radius = 0.0;
  std::vector<std::vector<MatchCell>> weights;
  double raw_mean = 0.0;
  double adjusted_mean = 0.0;
};

inline PipelineResult pipeline(const std::vector<double>& ref_scores,
                               const std::vector<double>& comp_scores,
                               const std::vector<double>& comp_y,
                               const std::vector<std::vector<double>>& comp_x,
                               const std::vector<double>& ref_means, double eta = 1e-9) {
  PipelineResult res;
  res.keep = trim(ref_scores, comp_scores);
  const std::vector<double> dists = nn_dists(ref_scores, comp_scores, res.keep);
  if (dists.empty()) throw std::runtime_error("brute pipeline: nothing on support");
  res.radius = radius(dists);
  res.weights = match(ref_scores, comp_scores, res.radius, res.keep, eta);

  std::size_t n_on = 0;
  for (const char k : res.keep) n_on += k ? 1 : 0;
  std::vector<double> agg(comp_scores.size(), 0.0);
  double raw = 0.0;
  for (std::size_t i = 0; i < res.weights.size(); ++i)
    for (const auto& mc : res.weights[i]) {
      raw += mc.weight * comp_y[static_cast<std::size_t>(mc.comp)];
      agg[static_cast<std::size_t>(mc.comp)] += mc.weight;
    }
  raw /= static_cast<double>(n_on);
  for (double& v : agg) v /= static_cast<double>(n_on);
  res.raw_mean = raw;

  const std::size_t p = ref_means.size();
  const std::vector<double> coef = wls(comp_x, comp_y, agg);
  std::vector<double> xbar_w(p, 0.0);
  for (std::size_t j = 0; j < comp_scores.size(); ++j)
    for (std::size_t k = 0; k < p; ++k) xbar_w[k] += agg[j] * comp_x[j][k];
  double adj = 0.0;
  for (std::size_t k = 0; k < p; ++k) adj += coef[k + 1] * (ref_means[k] - xbar_w[k]);
  res.adjusted_mean = raw + adj;
  return res;
}

}  // namespace brute

#include "causalgap/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "causalgap/error.hpp"
#include "causalgap/kernels.hpp"

namespace causalgap {

RankDeficientError::RankDeficientError(std::vector<std::string> columns)
    : Error([&] {
        std::string msg = "design is rank deficient; collinear columns:";
        for (const auto& c : columns) msg += " " + c;
        return msg;
      }()),
      columns_(std::move(columns)) {}

namespace detail {

GreedyQr greedy_qr(const Eigen::MatrixXd& a, double tol) {
  const Eigen::Index n = a.rows();
  const Eigen::Index p = a.cols();
  GreedyQr out;
  out.q.resize(n, p);
  Eigen::MatrixXd r_full = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd v(n);
  std::size_t rank = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    v = a.col(j);
    const double norm0 = std::sqrt(kernels::active().dot(v.data(), v.data(), static_cast<std::size_t>(n)));
    if (norm0 == 0.0) {
      out.pruned.push_back(static_cast<std::size_t>(j));
      continue;
    }
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < rank; ++k) {
        const double* qk = out.q.col(static_cast<Eigen::Index>(k)).data();
        const double coef = kernels::active().dot(qk, v.data(), static_cast<std::size_t>(n));
        kernels::active().axpy(-coef, qk, v.data(), static_cast<std::size_t>(n));
        r_full(static_cast<Eigen::Index>(k), j) += coef;
      }
    }
    const double norm = std::sqrt(kernels::active().dot(v.data(), v.data(), static_cast<std::size_t>(n)));
    if (norm <= tol * norm0) {
      out.pruned.push_back(static_cast<std::size_t>(j));
      continue;
    }
    out.q.col(static_cast<Eigen::Index>(rank)) = v / norm;
    r_full(static_cast<Eigen::Index>(rank), j) = norm;
    out.kept.push_back(static_cast<std::size_t>(j));
    ++rank;
  }
  const auto r = static_cast<Eigen::Index>(rank);
  out.q.conservativeResize(n, r);
  out.r.resize(r, r);
  for (Eigen::Index c = 0; c < r; ++c) {
    out.r.col(c) = r_full.col(static_cast<Eigen::Index>(out.kept[static_cast<std::size_t>(c)])).head(r);
  }
  return out;
}

}  // namespace detail

namespace {

std::vector<double> resolve_weights(std::span<const double> w, std::size_t n) {
  if (w.empty()) return std::vector<double>(n, 1.0);
  if (w.size() != n) throw Error("weight vector length does not match the design");
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error("weights must be finite and non-negative");
    total += x;
  }
  if (total <= 0.0) throw DegenerateError("all weights are zero");
  return {w.begin(), w.end()};
}

std::vector<std::string> labels_of(const DesignMatrix& X, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  for (std::size_t j : idx) out.push_back(X.columns[j].label);
  return out;
}

}  // namespace

std::size_t OlsFit::index_of(std::string_view label) const {
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] == label) return j;
  }
  throw SpecError(fmt::format("no coefficient named '{}'", label));
}

OlsFit fit_ols(const DesignMatrix& X, std::span<const double> y, std::span<const double> w_in,
               const OlsOptions& options) {
  const std::size_t n = X.rows();
  const std::size_t p = X.cols();
  if (y.size() != n) throw Error("outcome length does not match the design");
  const std::vector<double> w = resolve_weights(w_in, n);
  const auto n_eff = static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double x) { return x > 0.0; }));
  if (n_eff <= p) throw DegenerateError(fmt::format("need more observations ({}) than columns ({})", n_eff, p));

  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::VectorXd sw(ni);
  for (Eigen::Index i = 0; i < ni; ++i) sw[i] = std::sqrt(w[static_cast<std::size_t>(i)]);
  const Eigen::MatrixXd a = sw.asDiagonal() * X.values;
  const Eigen::VectorXd b = sw.cwiseProduct(Eigen::Map<const Eigen::VectorXd>(y.data(), ni));

  const detail::GreedyQr qr = detail::greedy_qr(a, options.collinearity_tol);
  if (!qr.pruned.empty() && !options.prune_collinear) throw RankDeficientError(labels_of(X, qr.pruned));
  const auto rank = static_cast<Eigen::Index>(qr.kept.size());

  OlsFit fit;
  fit.labels = X.labels();
  fit.pruned = labels_of(X, qr.pruned);
  fit.weights_used = !w_in.empty();
  fit.residual_df = static_cast<int>(n_eff) - static_cast<int>(rank);

  Eigen::VectorXd qtb(rank);
  for (Eigen::Index k = 0; k < rank; ++k) {
    qtb[k] = kernels::active().dot(qr.q.col(k).data(), b.data(), n);
  }
  const auto rt = qr.r.triangularView<Eigen::Upper>();
  const Eigen::VectorXd beta_kept = rt.solve(qtb);
  fit.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  for (Eigen::Index k = 0; k < rank; ++k) fit.coefficients[static_cast<Eigen::Index>(qr.kept[static_cast<std::size_t>(k)])] = beta_kept[k];

  fit.residuals = Eigen::Map<const Eigen::VectorXd>(y.data(), ni) - X.values * fit.coefficients;
  const Eigen::VectorXd wres = sw.cwiseProduct(fit.residuals);
  const double rss = kernels::active().dot(wres.data(), wres.data(), n);
  const double sigma2 = rss / fit.residual_df;
  fit.sigma = std::sqrt(sigma2);

  const Eigen::MatrixXd rinv = rt.solve(Eigen::MatrixXd::Identity(rank, rank));
  Eigen::MatrixXd cov;
  switch (options.se) {
    case SeKind::Classical:
      cov = sigma2 * rinv * rinv.transpose();
      break;
    case SeKind::HC1: {
      const Eigen::MatrixXd uq = wres.asDiagonal() * qr.q;
      const Eigen::MatrixXd meat = uq.transpose() * uq;
      cov = rinv * meat * rinv.transpose() * (static_cast<double>(n_eff) / fit.residual_df);
      break;
    }
    case SeKind::Cluster: {
      if (options.clusters.size() != n) throw Error("cluster ids must be given for every row");
      std::map<int, Eigen::VectorXd> sums;
      for (Eigen::Index i = 0; i < ni; ++i) {
        if (w[static_cast<std::size_t>(i)] <= 0.0) continue;
        auto [it, fresh] = sums.try_emplace(options.clusters[static_cast<std::size_t>(i)], Eigen::VectorXd::Zero(rank));
        it->second += wres[i] * qr.q.row(i).transpose();
      }
      Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(rank, rank);
      for (const auto& [id, s] : sums) meat += s * s.transpose();
      const double g = static_cast<double>(sums.size());
      if (g < 2) throw DegenerateError("cluster-robust errors need at least two clusters");
      const double factor = g / (g - 1.0) * (static_cast<double>(n_eff) - 1.0) / fit.residual_df;
      cov = rinv * meat * rinv.transpose() * factor;
      break;
    }
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  fit.standard_errors = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p), nan);
  fit.t_values = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p), nan);
  fit.p_values = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p), nan);
  const boost::math::students_t dist(static_cast<double>(fit.residual_df));
  for (Eigen::Index k = 0; k < rank; ++k) {
    const auto j = static_cast<Eigen::Index>(qr.kept[static_cast<std::size_t>(k)]);
    const double se = std::sqrt(cov(k, k));
    fit.standard_errors[j] = se;
    fit.t_values[j] = fit.coefficients[j] / se;
    fit.p_values[j] = std::isfinite(fit.t_values[j]) ? 2.0 * boost::math::cdf(dist, -std::abs(fit.t_values[j])) : nan;
  }

  const kernels::Moments ym = kernels::weighted_moments(w, y);
  const double ybar = ym.sum_wx / ym.sum_w;
  const double tss = std::max(ym.sum_wxx - ym.sum_w * ybar * ybar, 0.0);
  if (tss > 0.0) {
    fit.r_squared = std::clamp(1.0 - rss / tss, 0.0, 1.0);
  } else {
    fit.r_squared = rss == 0.0 ? 1.0 : 0.0;
  }
  fit.adj_r_squared = 1.0 - (1.0 - fit.r_squared) * (static_cast<double>(n_eff) - 1.0) / fit.residual_df;
  return fit;
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace {

double expit(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double deviance(const Eigen::VectorXd& eta, std::span<const double> z, const std::vector<double>& prior) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double pw = prior[static_cast<std::size_t>(i)];
    if (pw == 0.0) continue;
    // log(1 + exp(eta)) - z * eta, computed stably
    const double e = eta[i];
    const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    dev += pw * (softplus - z[static_cast<std::size_t>(i)] * e);
  }
  return 2.0 * dev;
}

}  // namespace

Eigen::VectorXd LogisticFit::predict(const Eigen::MatrixXd& X, double clamp) const {
  const Eigen::VectorXd eta = X * coefficients;
  Eigen::VectorXd p(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) p[i] = std::clamp(expit(eta[i]), clamp, 1.0 - clamp);
  return p;
}

LogisticFit fit_logistic(const DesignMatrix& X, std::span<const double> z, std::span<const double> prior_in,
                         const LogisticOptions& options) {
  const std::size_t n = X.rows();
  const std::size_t p = X.cols();
  if (z.size() != n) throw Error("treatment length does not match the design");
  const std::vector<double> prior = resolve_weights(prior_in, n);
  double w1 = 0.0;
  double w0 = 0.0;
  std::size_t n_eff = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (z[i] != 0.0 && z[i] != 1.0) throw Error("logistic outcome must be 0/1");
    if (prior[i] > 0.0) ++n_eff;
    (z[i] == 1.0 ? w1 : w0) += prior[i];
  }
  if (w1 <= 0.0 || w0 <= 0.0) throw DegenerateError("logistic regression needs both classes present");
  if (n_eff < p) throw DegenerateError(fmt::format("need at least as many observations ({}) as columns ({})", n_eff, p));

  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::VectorXd sp(ni);
  for (Eigen::Index i = 0; i < ni; ++i) sp[i] = std::sqrt(prior[static_cast<std::size_t>(i)]);

  // Column selection is fixed from the prior-weighted design.
  const detail::GreedyQr base = detail::greedy_qr(sp.asDiagonal() * X.values, 1e-9);
  Eigen::MatrixXd xk(ni, static_cast<Eigen::Index>(base.kept.size()));
  for (std::size_t k = 0; k < base.kept.size(); ++k) {
    xk.col(static_cast<Eigen::Index>(k)) = X.values.col(static_cast<Eigen::Index>(base.kept[k]));
  }
  const Eigen::Index r = xk.cols();

  LogisticFit fit;
  fit.labels = X.labels();
  fit.pruned = labels_of(X, base.pruned);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(r);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(ni);
  Eigen::VectorXd prob(ni);
  Eigen::VectorXd resid(ni);
  Eigen::VectorXd score(r);
  auto evaluate_score = [&]() {
    for (Eigen::Index i = 0; i < ni; ++i) {
      prob[i] = expit(eta[i]);
      resid[i] = prior[static_cast<std::size_t>(i)] * (z[static_cast<std::size_t>(i)] - prob[i]);
    }
    for (Eigen::Index k = 0; k < r; ++k) score[k] = kernels::active().dot(xk.col(k).data(), resid.data(), n);
    return r > 0 ? score.cwiseAbs().maxCoeff() : 0.0;
  };

  double max_score = evaluate_score();
  double dev = deviance(eta, z, prior);
  Eigen::VectorXd sw(ni);
  Eigen::VectorXd work(ni);
  int iter = 0;
  bool degenerate = false;
  while (max_score >= options.tol && iter < options.max_iter) {
    ++iter;
    for (Eigen::Index i = 0; i < ni; ++i) {
      const double v = std::max(prob[i] * (1.0 - prob[i]), 1e-12);
      sw[i] = std::sqrt(prior[static_cast<std::size_t>(i)] * v);
      work[i] = sw[i] * (eta[i] + (z[static_cast<std::size_t>(i)] - prob[i]) / v);
    }
    const detail::GreedyQr qr = detail::greedy_qr(sw.asDiagonal() * xk, 1e-12);
    if (!qr.pruned.empty()) {
      degenerate = true;
      break;
    }
    Eigen::VectorXd qtb(r);
    for (Eigen::Index k = 0; k < r; ++k) qtb[k] = kernels::active().dot(qr.q.col(k).data(), work.data(), n);
    const Eigen::VectorXd target = qr.r.triangularView<Eigen::Upper>().solve(qtb);

    // Step halving guards against overshooting far from the optimum.
    Eigen::VectorXd step = target - beta;
    double new_dev = 0.0;
    Eigen::VectorXd candidate;
    for (int halve = 0; halve < 20; ++halve) {
      candidate = beta + step;
      eta = xk * candidate;
      new_dev = deviance(eta, z, prior);
      if (new_dev <= dev * (1.0 + 1e-12) + 1e-12) break;
      step *= 0.5;
    }
    beta = candidate;
    dev = new_dev;
    max_score = evaluate_score();
    if (beta.norm() > options.divergence_norm) break;
  }

  fit.iterations = iter;
  fit.max_abs_score = max_score;
  // A vanishing score with fitted probabilities pinned at 0 or 1 is
  // separation, not convergence.
  bool extreme = false;
  for (Eigen::Index i = 0; i < ni; ++i) {
    if (prior[static_cast<std::size_t>(i)] > 0.0 && std::abs(eta[i]) > 30.0) extreme = true;
  }
  fit.separation = degenerate || beta.norm() > options.divergence_norm || extreme;
  fit.converged = max_score < options.tol && !fit.separation;

  fit.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t k = 0; k < base.kept.size(); ++k) {
    fit.coefficients[static_cast<Eigen::Index>(base.kept[k])] = beta[static_cast<Eigen::Index>(k)];
  }
  fit.fitted_probabilities.resize(ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    fit.fitted_probabilities[i] = std::clamp(prob[i], options.clamp, 1.0 - options.clamp);
  }
  return fit;
}

}  // namespace causalgap

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "causalgap/data_model.hpp"

namespace causalgap {

enum class SeKind {
  Classical,  // sigma^2 (X'WX)^-1
  HC1,        // heteroskedasticity-robust sandwich with n/(n-p) correction
  Cluster,    // cluster-robust sandwich; needs OlsOptions::clusters
};

struct OlsOptions {
  SeKind se = SeKind::Classical;
  std::span<const int> clusters;  // one id per row, for SeKind::Cluster
  // Drop exactly collinear columns instead of failing. Pruned columns are
  // listed in OlsFit::pruned and get coefficient 0 with NaN inference.
  bool prune_collinear = true;
  double collinearity_tol = 1e-9;
};

struct OlsFit {
  std::vector<std::string> labels;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd t_values;
  Eigen::VectorXd p_values;
  Eigen::VectorXd residuals;  // y - X b, unweighted
  double r_squared = 0.0;
  double adj_r_squared = 0.0;
  double sigma = 0.0;  // residual standard error
  int residual_df = 0;
  bool weights_used = false;
  std::vector<std::string> pruned;

  std::size_t index_of(std::string_view label) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const { return X * coefficients; }
};

// (Weighted) least squares. Rows with zero weight are excluded from the fit
// and from the residual degrees of freedom. Throws RankDeficientError when a
// column is collinear and pruning is off, DegenerateError when n <= p.
OlsFit fit_ols(const DesignMatrix& X, std::span<const double> y, std::span<const double> w = {},
               const OlsOptions& options = {});

struct LogisticOptions {
  int max_iter = 50;
  double tol = 1e-9;             // on max |X'(z - p)|
  double clamp = 1e-6;           // fitted probabilities kept in [clamp, 1 - clamp]
  double divergence_norm = 1e3;  // coefficient norm treated as separation
};

struct LogisticFit {
  std::vector<std::string> labels;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd fitted_probabilities;  // clamped
  bool converged = false;
  bool separation = false;
  int iterations = 0;
  double max_abs_score = 0.0;  // at the returned coefficients, unclamped
  std::vector<std::string> pruned;

  // Clamped probabilities for new rows.
  Eigen::VectorXd predict(const Eigen::MatrixXd& X, double clamp = 1e-6) const;
};

// Logistic regression by iteratively reweighted least squares. prior_weights
// (0/1 or frequency weights) select and weight the rows used in the fit.
LogisticFit fit_logistic(const DesignMatrix& X, std::span<const double> z,
                         std::span<const double> prior_weights = {}, const LogisticOptions& options = {});

namespace detail {

// Thin QR of a (row-scaled) design built column by column with classical
// Gram-Schmidt and one reorthogonalization pass. A column whose residual
// norm falls below tol times its original norm is skipped.
struct GreedyQr {
  std::vector<std::size_t> kept;    // original column indices, in order
  std::vector<std::size_t> pruned;  // original column indices
  Eigen::MatrixXd q;                // n x r, orthonormal columns
  Eigen::MatrixXd r;                // r x r upper triangular
};

GreedyQr greedy_qr(const Eigen::MatrixXd& a, double tol);

}  // namespace detail

}  // namespace causalgap

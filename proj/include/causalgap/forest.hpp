#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causalgap/data_model.hpp"
#include "causalgap/parametric.hpp"

namespace causalgap {

// ---------------------------------------------------------------------------
// Cross-fitted nuisances

struct NuisanceFit {
  std::vector<double> m_hat;  // out-of-fold E[Y | X]
  std::vector<double> e_hat;  // out-of-fold P(Z = 1 | X), clamped
  std::vector<int> fold;      // fold id per unit
  int fold_count = 0;
};

inline constexpr double kNuisanceClamp = 1e-3;

// Shuffles each arm with the fold stream of `seed` and deals it round-robin,
// so every fold gets both arms whenever each arm has at least `folds` units.
std::vector<int> stratified_folds(std::span<const double> treatment, int folds, std::uint64_t seed);

// The outcome model is OLS of y on outcome_X, the propensity model logistic
// regression of z on propensity_X; each unit is predicted by the models fit
// without its fold. Throws DegenerateError naming a fold that holds one arm.
NuisanceFit fit_nuisances(std::span<const double> y, std::span<const double> z, const DesignMatrix& outcome_X,
                          const DesignMatrix& propensity_X, std::span<const int> fold, int fold_count);

struct NuisanceDesigns {
  DesignMatrix outcome;
  DesignMatrix propensity;
};

// Outcome: title + university_class + department + title:working_years +
// university_class:department:productivity_log, plus has_profile when asked.
// Propensity: the default propensity spec (never has_profile).
NuisanceDesigns default_nuisance_designs(const Dataset& d, bool outcome_uses_profile = false);

NuisanceFit fit_nuisances(const Dataset& d, const NuisanceDesigns& designs, int folds, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Forest

struct ForestHyper {
  int num_trees = 3000;
  int min_node_size = 5;
  double subsample_fraction = 0.5;
  int mtry = 0;  // 0 means ceil(p / 3)
  double honesty_fraction = 0.5;
  int threads = 0;  // 0 means hardware concurrency; results do not depend on it
};

// Covariates the trees split on: one indicator per title, class and
// department level, then working_years and productivity_log.
struct ForestCovariates {
  Eigen::MatrixXd x;
  std::vector<std::string> labels;
};
ForestCovariates forest_covariates(const Dataset& d);

struct TreeNode {
  int column = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x <= threshold
  int left = -1;
  int right = -1;
  int leaf = -1;
};

struct HonestTree {
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> structure;   // grows the splits
  std::vector<std::uint32_t> estimation;  // fills the leaves
  std::vector<TreeNode> nodes;            // nodes[0] is the root
  std::vector<std::uint32_t> leaf_offsets;  // CSR into leaf_members
  std::vector<std::int32_t> leaf_members;   // estimation units per leaf
  std::vector<double> leaf_sum_yz;          // sum of ry * rz over members
  std::vector<double> leaf_sum_zz;          // sum of rz^2 over members
  std::vector<std::uint64_t> in_sample;     // bitset over training units
  int depth = 0;

  int leaf_of(const double* x) const;
  int leaf_of(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  std::size_t leaf_size(int leaf) const { return leaf_offsets[leaf + 1] - leaf_offsets[leaf]; }
  bool contains(std::size_t unit) const { return (in_sample[unit >> 6] >> (unit & 63)) & 1u; }
  // Same split rules, ignoring leaf contents.
  bool same_structure(const HonestTree& other) const;
};

// Training data in residualized form. Each column is also stored as dense
// ranks into its sorted distinct values so split search can bucket instead
// of sort.
struct ForestData {
  Eigen::MatrixXd x;
  std::vector<std::string> labels;
  std::vector<double> ry;  // y - m_hat
  std::vector<double> rz;  // z - e_hat
  std::vector<double> ryz;  // ry * rz
  std::vector<double> rzz;  // rz * rz
  std::vector<std::vector<std::uint32_t>> codes;  // [column][unit]
  std::vector<std::vector<double>> distinct;      // [column][code]
  std::vector<double> rows;                       // x in row-major order
};

ForestData make_forest_data(Eigen::MatrixXd x, std::vector<std::string> labels, std::span<const double> y,
                            std::span<const double> z, const NuisanceFit& nuisance);

int resolved_mtry(const ForestHyper& h, std::size_t p);

// One honest tree; its randomness comes only from tree_seed.
HonestTree grow_tree(const ForestData& data, const ForestHyper& hyper, std::uint64_t tree_seed);

struct CausalForest {
  ForestData data;
  ForestHyper hyper;  // mtry resolved
  NuisanceFit nuisance;
  std::vector<HonestTree> trees;
  std::uint64_t master_seed = 0;
};

std::uint64_t tree_seed(std::uint64_t master_seed, std::size_t tree_index);

CausalForest grow_forest(ForestData data, const NuisanceFit& nuisance, const ForestHyper& hyper,
                         std::uint64_t master_seed);
CausalForest grow_forest(const Dataset& d, const NuisanceFit& nuisance, const ForestHyper& hyper,
                         std::uint64_t master_seed);

// Picks mtry from {ceil(p/3), ceil(p/2), p} by out-of-bag R-loss on forests
// of min(num_trees, tuning_trees) trees. Returns the chosen value.
int tune_mtry(const ForestData& data, const NuisanceFit& nuisance, const ForestHyper& hyper,
              std::uint64_t master_seed, int tuning_trees = 500);

struct CateSummary {
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t defined = 0;
};

struct CateVector {
  std::vector<double> tau_hat;
  std::vector<bool> defined;  // false where the weighted denominator is below 1e-10
  CateSummary summary;
};

inline constexpr double kCateDenominatorFloor = 1e-10;

// CATE at arbitrary covariate rows, using every tree.
CateVector predict_cate(const CausalForest& f, const Eigen::MatrixXd& points);
// CATE at the training units, each from the trees that did not sample it.
CateVector predict_oob(const CausalForest& f);

// Forest weights alpha_i(x) over training units; empty if x has no support.
std::vector<double> forest_weights(const CausalForest& f, const Eigen::Ref<const Eigen::RowVectorXd>& x);

struct OverlapAteResult {
  EffectEstimate estimate;
  std::vector<double> scores;   // doubly robust score per unit
  std::vector<double> weights;  // e(1 - e)
  std::size_t excluded = 0;     // units without a defined CATE
};

// Doubly robust overlap-weighted ATE from the forest's residuals and
// nuisances. The one-argument form uses out-of-bag CATEs.
OverlapAteResult overlap_ate(const CausalForest& f);
OverlapAteResult overlap_ate(const CausalForest& f, const CateVector& cate);

struct IteGroup {
  std::string group;
  double lower = 0.0;  // bin edges for continuous covariates
  double upper = 0.0;
  std::size_t n = 0;
  double mean_tau = 0.0;
  double smoothed_tau = 0.0;
};

struct IteSummary {
  Field by = Field::WorkingYears;
  std::vector<IteGroup> groups;
  std::vector<std::string> notes;  // omitted empty groups
};

inline constexpr int kIteBins = 20;
inline constexpr int kIteSmoothingWindow = 3;

// Categorical covariates group by level; continuous ones use kIteBins
// equal-count bins. smoothed_tau is a centred moving average over groups.
IteSummary ite_summary(const CateVector& c, const Dataset& d, Field by);

// unit_id,tau_hat,defined
std::string format_ite_csv(const CateVector& c);
// covariate,group,lower,upper,n,mean_tau,smoothed_tau
std::string format_ite_groups_csv(std::span<const IteSummary> summaries);

}  // namespace causalgap

#include "causalgap/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "causalgap/error.hpp"
#include "causalgap/kernels.hpp"
#include "causalgap/propensity.hpp"
#include "causalgap/rng.hpp"

namespace causalgap {

namespace {

int worker_count(int requested, std::size_t jobs) {
  int t = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  t = std::max(t, 1);
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(t), std::max<std::size_t>(jobs, 1)));
}

// Runs fn(k) for k < jobs. Each k writes only its own slot, so the result
// does not depend on the worker count.
template <class Fn>
void parallel_for(std::size_t jobs, int threads, Fn fn) {
  const int workers = worker_count(threads, jobs);
  if (workers == 1) {
    for (std::size_t k = 0; k < jobs; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next.fetch_add(1); k < jobs; k = next.fetch_add(1)) fn(k);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

// ---------------------------------------------------------------------------
// Nuisances

std::vector<int> stratified_folds(std::span<const double> treatment, int folds, std::uint64_t seed) {
  if (folds < 2) throw SpecError("cross-fitting needs at least two folds");
  std::array<std::vector<std::size_t>, 2> arms;
  for (std::size_t i = 0; i < treatment.size(); ++i) arms[treatment[i] == 1.0 ? 1 : 0].push_back(i);
  std::vector<int> fold(treatment.size(), 0);
  std::size_t dealt = 0;
  for (std::uint32_t a = 0; a < 2; ++a) {
    std::vector<std::size_t>& v = arms[a];
    Philox4x32 rng(seed, stream::kFolds, a);
    for (std::size_t k = v.size(); k > 1; --k) std::swap(v[k - 1], v[rng.below(k)]);
    for (std::size_t i : v) fold[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(folds));
  }
  return fold;
}

NuisanceFit fit_nuisances(std::span<const double> y, std::span<const double> z, const DesignMatrix& outcome_X,
                          const DesignMatrix& propensity_X, std::span<const int> fold, int fold_count) {
  const std::size_t n = y.size();
  if (z.size() != n || fold.size() != n || outcome_X.rows() != n || propensity_X.rows() != n) {
    throw Error("nuisance inputs differ in length");
  }
  if (fold_count < 2) throw SpecError("cross-fitting needs at least two folds");
  std::vector<std::array<std::size_t, 2>> arm_counts(static_cast<std::size_t>(fold_count), {0, 0});
  for (std::size_t i = 0; i < n; ++i) {
    if (fold[i] < 0 || fold[i] >= fold_count) throw Error(fmt::format("unit {} has fold id {}", i, fold[i]));
    ++arm_counts[static_cast<std::size_t>(fold[i])][z[i] == 1.0 ? 1 : 0];
  }
  for (int k = 0; k < fold_count; ++k) {
    const auto& c = arm_counts[static_cast<std::size_t>(k)];
    if (c[0] == 0 || c[1] == 0) throw DegenerateError(fmt::format("fold {} contains a single treatment arm", k));
  }

  NuisanceFit nf;
  nf.m_hat.assign(n, 0.0);
  nf.e_hat.assign(n, 0.5);
  nf.fold.assign(fold.begin(), fold.end());
  nf.fold_count = fold_count;
  std::vector<double> w(n);
  for (int k = 0; k < fold_count; ++k) {
    for (std::size_t i = 0; i < n; ++i) w[i] = fold[i] == k ? 0.0 : 1.0;
    const OlsFit outcome = fit_ols(outcome_X, y, w);
    const LogisticFit prop = fit_logistic(propensity_X, z, w);
    const Eigen::VectorXd m = outcome.predict(outcome_X.values);
    const Eigen::VectorXd e = prop.predict(propensity_X.values, kNuisanceClamp);
    for (std::size_t i = 0; i < n; ++i) {
      if (fold[i] != k) continue;
      nf.m_hat[i] = m[static_cast<Eigen::Index>(i)];
      nf.e_hat[i] = e[static_cast<Eigen::Index>(i)];
    }
  }
  return nf;
}

NuisanceDesigns default_nuisance_designs(const Dataset& d, bool outcome_uses_profile) {
  std::string outcome =
      "title + university_class + department + title:working_years + university_class:department:productivity_log";
  if (outcome_uses_profile) outcome += " + has_profile";
  return {build_design(d, Formula::parse(outcome)), build_design(d, default_ps_spec())};
}

NuisanceFit fit_nuisances(const Dataset& d, const NuisanceDesigns& designs, int folds, std::uint64_t seed) {
  d.require_estimable();
  const std::vector<int> fold = stratified_folds(d.treatment(), folds, seed);
  return fit_nuisances(d.outcome_log(), d.treatment(), designs.outcome, designs.propensity, fold, folds);
}

// ---------------------------------------------------------------------------
// Data

ForestCovariates forest_covariates(const Dataset& d) {
  const std::size_t n = d.size();
  ForestCovariates out;
  for (Field f : {Field::Title, Field::UniversityClass, Field::Department}) {
    for (std::string_view level : field_levels(f)) out.labels.push_back(fmt::format("{}[{}]", field_name(f), level));
  }
  out.labels.emplace_back(field_name(Field::WorkingYears));
  out.labels.emplace_back(field_name(Field::ProductivityLog));
  out.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out.labels.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const UnitRecord& u = d[i];
    out.x(r, static_cast<Eigen::Index>(u.title)) = 1.0;
    out.x(r, 3 + static_cast<Eigen::Index>(u.university_class)) = 1.0;
    out.x(r, 6 + static_cast<Eigen::Index>(u.department)) = 1.0;
    out.x(r, 12) = u.working_years;
    out.x(r, 13) = d.value(Field::ProductivityLog, i);
  }
  return out;
}

ForestData make_forest_data(Eigen::MatrixXd x, std::vector<std::string> labels, std::span<const double> y,
                            std::span<const double> z, const NuisanceFit& nuisance) {
  const std::size_t n = y.size();
  if (z.size() != n || nuisance.m_hat.size() != n || nuisance.e_hat.size() != n ||
      static_cast<std::size_t>(x.rows()) != n) {
    throw Error("forest inputs differ in length");
  }
  if (labels.size() != static_cast<std::size_t>(x.cols())) throw Error("one label per covariate column is required");
  if (x.cols() == 0) throw SpecError("the forest needs at least one covariate");
  ForestData data;
  data.ry.resize(n);
  data.rz.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.ry[i] = y[i] - nuisance.m_hat[i];
    data.rz[i] = z[i] - nuisance.e_hat[i];
  }
  data.ryz.resize(n);
  data.rzz.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.ryz[i] = data.ry[i] * data.rz[i];
    data.rzz[i] = data.rz[i] * data.rz[i];
  }
  const auto p = static_cast<std::size_t>(x.cols());
  data.codes.resize(p);
  data.distinct.resize(p);
  for (std::size_t c = 0; c < p; ++c) {
    const auto col = x.col(static_cast<Eigen::Index>(c));
    std::vector<double> v(col.begin(), col.end());
    for (double a : v) {
      if (!std::isfinite(a)) throw Error(fmt::format("covariate '{}' has a non-finite value", labels[c]));
    }
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    data.codes[c].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      data.codes[c][i] = static_cast<std::uint32_t>(std::lower_bound(v.begin(), v.end(), col[static_cast<Eigen::Index>(i)]) - v.begin());
    }
    data.distinct[c] = std::move(v);
  }
  data.rows.resize(n * p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < p; ++c) data.rows[i * p + c] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
  }
  data.x = std::move(x);
  data.labels = std::move(labels);
  return data;
}

int resolved_mtry(const ForestHyper& h, std::size_t p) {
  const int pi = static_cast<int>(p);
  if (h.mtry <= 0) return std::max(1, (pi + 2) / 3);
  return std::min(h.mtry, pi);
}

// ---------------------------------------------------------------------------
// Trees

int HonestTree::leaf_of(const double* x) const {
  int k = 0;
  while (nodes[static_cast<std::size_t>(k)].column >= 0) {
    const TreeNode& nd = nodes[static_cast<std::size_t>(k)];
    k = x[nd.column] <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(k)].leaf;
}

int HonestTree::leaf_of(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  int k = 0;
  while (nodes[static_cast<std::size_t>(k)].column >= 0) {
    const TreeNode& nd = nodes[static_cast<std::size_t>(k)];
    k = x[nd.column] <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(k)].leaf;
}

bool HonestTree::same_structure(const HonestTree& other) const {
  if (nodes.size() != other.nodes.size()) return false;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const TreeNode& a = nodes[k];
    const TreeNode& b = other.nodes[k];
    if (a.column != b.column || a.threshold != b.threshold || a.left != b.left || a.right != b.right) return false;
  }
  return true;
}

std::uint64_t tree_seed(std::uint64_t master_seed, std::size_t tree_index) {
  Philox4x32 rng(master_seed, stream::kTree, static_cast<std::uint32_t>(tree_index));
  const std::uint64_t hi = rng();
  return (hi << 32) | rng();
}

namespace {

struct SplitChoice {
  int column = -1;
  double threshold = 0.0;
  double score = 0.0;
};

struct Bucket {
  std::size_t count = 0;
  double syz = 0.0;
  double szz = 0.0;
};

class SplitFinder {
 public:
  SplitFinder(const ForestData& data, int min_node) : data_(data), min_node_(static_cast<std::size_t>(min_node)) {}

  // Best split of `units` on column c, improving on `best` only when strictly better.
  void scan(std::span<const std::uint32_t> units, int c, SplitChoice& best) {
    const auto& codes = data_.codes[static_cast<std::size_t>(c)];
    const auto& values = data_.distinct[static_cast<std::size_t>(c)];
    const std::size_t m = units.size();
    const std::size_t k = values.size();
    if (k < 2) return;

    used_.clear();
    if (buckets_.size() < k) buckets_.resize(k);
    if (k <= m) {
      for (std::uint32_t i : units) {
        Bucket& bk = buckets_[codes[i]];
        ++bk.count;
        bk.syz += data_.ryz[i];
        bk.szz += data_.rzz[i];
      }
      for (std::uint32_t b = 0; b < k; ++b) {
        if (buckets_[b].count > 0) used_.push_back(b);
      }
    } else {
      for (std::uint32_t i : units) {
        const std::uint32_t b = codes[i];
        Bucket& bk = buckets_[b];
        if (bk.count == 0) used_.push_back(b);
        ++bk.count;
        bk.syz += data_.ryz[i];
        bk.szz += data_.rzz[i];
      }
      std::sort(used_.begin(), used_.end());
    }

    double tot_yz = 0.0, tot_zz = 0.0;
    for (std::uint32_t b : used_) {
      tot_yz += buckets_[b].syz;
      tot_zz += buckets_[b].szz;
    }
    std::size_t nl = 0;
    double lyz = 0.0, lzz = 0.0;
    const double md = static_cast<double>(m);
    for (std::size_t u = 0; u + 1 < used_.size(); ++u) {
      const Bucket& bk = buckets_[used_[u]];
      nl += bk.count;
      lyz += bk.syz;
      lzz += bk.szz;
      const std::size_t nr = m - nl;
      if (nl < min_node_) continue;
      if (nr < min_node_) break;
      const double rzz = tot_zz - lzz;
      if (lzz <= 1e-12 || rzz <= 1e-12) continue;
      const double diff = lyz / lzz - (tot_yz - lyz) / rzz;
      const double score = static_cast<double>(nl) * static_cast<double>(nr) / (md * md) * diff * diff;
      if (score > best.score) {
        const double a = values[used_[u]];
        const double b = values[used_[u + 1]];
        double thr = a + (b - a) / 2.0;
        if (!(thr < b)) thr = a;
        best = {c, thr, score};
      }
    }
    for (std::uint32_t b : used_) buckets_[b] = Bucket{};
  }

 private:
  const ForestData& data_;
  std::size_t min_node_;
  std::vector<Bucket> buckets_;
  std::vector<std::uint32_t> used_;
};

}  // namespace

HonestTree grow_tree(const ForestData& data, const ForestHyper& hyper, std::uint64_t seed) {
  const std::size_t n = data.ry.size();
  const std::size_t p = data.codes.size();
  if (hyper.min_node_size < 1) throw SpecError("min_node_size must be at least 1");
  if (!(hyper.subsample_fraction > 0.0 && hyper.subsample_fraction <= 1.0)) {
    throw SpecError("subsample_fraction must lie in (0, 1]");
  }
  if (!(hyper.honesty_fraction > 0.0 && hyper.honesty_fraction < 1.0)) {
    throw SpecError("honesty_fraction must lie in (0, 1)");
  }
  HonestTree tree;
  tree.seed = seed;
  Philox4x32 rng(seed, stream::kTree, 0);

  const auto s = static_cast<std::size_t>(std::floor(hyper.subsample_fraction * static_cast<double>(n)));
  if (s < 2) throw DegenerateError("subsample holds fewer than two units");
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::size_t k = 0; k < s; ++k) std::swap(perm[k], perm[k + rng.below32(static_cast<std::uint32_t>(n - k))]);
  auto ns = static_cast<std::size_t>(std::floor(hyper.honesty_fraction * static_cast<double>(s)));
  ns = std::clamp<std::size_t>(ns, 1, s - 1);
  tree.structure.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(ns));
  tree.estimation.assign(perm.begin() + static_cast<std::ptrdiff_t>(ns), perm.begin() + static_cast<std::ptrdiff_t>(s));
  std::sort(tree.structure.begin(), tree.structure.end());
  std::sort(tree.estimation.begin(), tree.estimation.end());
  tree.in_sample.assign((n + 63) / 64, 0);
  for (std::size_t k = 0; k < s; ++k) tree.in_sample[perm[k] >> 6] |= std::uint64_t{1} << (perm[k] & 63);

  const int mtry = resolved_mtry(hyper, p);
  const auto min_node = static_cast<std::size_t>(hyper.min_node_size);
  std::vector<std::uint32_t> work = tree.structure;
  std::vector<int> columns(p);
  std::vector<std::uint32_t> scratch;
  SplitFinder finder(data, hyper.min_node_size);

  struct Pending {
    int node;
    std::size_t begin, end;
    int depth;
  };
  tree.nodes.emplace_back();
  std::vector<Pending> stack{{0, 0, work.size(), 0}};
  int leaves = 0;
  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    tree.depth = std::max(tree.depth, cur.depth);
    const std::size_t m = cur.end - cur.begin;
    SplitChoice best;
    if (m >= 2 * min_node) {
      std::iota(columns.begin(), columns.end(), 0);
      for (int k = 0; k < mtry; ++k) {
        const auto j = static_cast<std::size_t>(k) + rng.below32(static_cast<std::uint32_t>(p - static_cast<std::size_t>(k)));
        std::swap(columns[static_cast<std::size_t>(k)], columns[j]);
      }
      const std::span<const std::uint32_t> units(work.data() + cur.begin, m);
      for (int k = 0; k < mtry; ++k) finder.scan(units, columns[static_cast<std::size_t>(k)], best);
    }
    if (best.column < 0) {
      tree.nodes[static_cast<std::size_t>(cur.node)].leaf = leaves++;
      continue;
    }
    const double thr = best.threshold;
    const auto& codes = data.codes[static_cast<std::size_t>(best.column)];
    const auto& values = data.distinct[static_cast<std::size_t>(best.column)];
    const auto last_left = static_cast<std::uint32_t>(std::upper_bound(values.begin(), values.end(), thr) - values.begin());
    std::size_t split = cur.begin;
    scratch.clear();
    for (std::size_t k = cur.begin; k < cur.end; ++k) {
      const std::uint32_t i = work[k];
      if (codes[i] < last_left) {
        work[split++] = i;
      } else {
        scratch.push_back(i);
      }
    }
    std::copy(scratch.begin(), scratch.end(), work.begin() + static_cast<std::ptrdiff_t>(split));
    const int left = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    TreeNode& nd = tree.nodes[static_cast<std::size_t>(cur.node)];
    nd.column = best.column;
    nd.threshold = thr;
    nd.left = left;
    nd.right = left + 1;
    stack.push_back({left + 1, split, cur.end, cur.depth + 1});
    stack.push_back({left, cur.begin, split, cur.depth + 1});
  }

  // Honest leaves: only estimation units contribute.
  std::vector<int> leaf_of_unit(tree.estimation.size());
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(leaves) + 1, 0);
  for (std::size_t k = 0; k < tree.estimation.size(); ++k) {
    leaf_of_unit[k] = tree.leaf_of(data.rows.data() + static_cast<std::size_t>(tree.estimation[k]) * p);
    ++counts[static_cast<std::size_t>(leaf_of_unit[k]) + 1];
  }
  tree.leaf_offsets.assign(counts.size(), 0);
  std::partial_sum(counts.begin(), counts.end(), tree.leaf_offsets.begin());
  tree.leaf_members.resize(tree.estimation.size());
  std::vector<std::uint32_t> fill(tree.leaf_offsets.begin(), tree.leaf_offsets.end() - 1);
  for (std::size_t k = 0; k < tree.estimation.size(); ++k) {
    tree.leaf_members[fill[static_cast<std::size_t>(leaf_of_unit[k])]++] = static_cast<std::int32_t>(tree.estimation[k]);
  }
  tree.leaf_sum_yz.resize(static_cast<std::size_t>(leaves));
  tree.leaf_sum_zz.resize(static_cast<std::size_t>(leaves));
  for (int l = 0; l < leaves; ++l) {
    const auto lo = tree.leaf_offsets[static_cast<std::size_t>(l)];
    const std::span<const std::int32_t> members(tree.leaf_members.data() + lo, tree.leaf_size(l));
    tree.leaf_sum_yz[static_cast<std::size_t>(l)] = kernels::gather_dot(data.ry, data.rz, members);
    tree.leaf_sum_zz[static_cast<std::size_t>(l)] = kernels::gather_dot(data.rz, data.rz, members);
  }
  return tree;
}

CausalForest grow_forest(ForestData data, const NuisanceFit& nuisance, const ForestHyper& hyper,
                         std::uint64_t master_seed) {
  if (hyper.num_trees < 1) throw SpecError("num_trees must be at least 1");
  if (nuisance.m_hat.size() != data.ry.size()) throw Error("nuisance fit does not match the forest data");
  CausalForest f;
  f.hyper = hyper;
  f.hyper.mtry = resolved_mtry(hyper, data.codes.size());
  f.nuisance = nuisance;
  f.master_seed = master_seed;
  f.data = std::move(data);
  f.trees.resize(static_cast<std::size_t>(hyper.num_trees));
  parallel_for(f.trees.size(), hyper.threads,
               [&](std::size_t t) { f.trees[t] = grow_tree(f.data, f.hyper, tree_seed(master_seed, t)); });
  return f;
}

CausalForest grow_forest(const Dataset& d, const NuisanceFit& nuisance, const ForestHyper& hyper,
                         std::uint64_t master_seed) {
  ForestCovariates cov = forest_covariates(d);
  return grow_forest(make_forest_data(std::move(cov.x), std::move(cov.labels), d.outcome_log(), d.treatment(), nuisance),
                     nuisance, hyper, master_seed);
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

struct Accum {
  double num = 0.0;
  double den = 0.0;
  std::size_t trees = 0;
};

void finish(CateVector& c) {
  CateSummary& s = c.summary;
  double sum = 0.0, sq = 0.0;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c.tau_hat.size(); ++i) {
    if (!c.defined[i]) continue;
    ++s.defined;
    sum += c.tau_hat[i];
    s.min = std::min(s.min, c.tau_hat[i]);
    s.max = std::max(s.max, c.tau_hat[i]);
  }
  if (s.defined == 0) {
    s = CateSummary{};
    s.mean = s.sd = s.min = s.max = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  s.mean = sum / static_cast<double>(s.defined);
  for (std::size_t i = 0; i < c.tau_hat.size(); ++i) {
    if (c.defined[i]) sq += (c.tau_hat[i] - s.mean) * (c.tau_hat[i] - s.mean);
  }
  s.sd = s.defined > 1 ? std::sqrt(sq / static_cast<double>(s.defined - 1)) : 0.0;
}

// Tree-major: each block of points walks every tree in order, so a point's
// sums are accumulated in tree order whatever the block layout.
CateVector predict_rows(const CausalForest& f, const double* rows, std::size_t n, bool oob) {
  const std::size_t p = f.data.codes.size();
  CateVector c;
  c.tau_hat.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<Accum> acc(n);
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  parallel_for(blocks, f.hyper.threads, [&](std::size_t b) {
    const std::size_t lo = b * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    for (const HonestTree& t : f.trees) {
      for (std::size_t i = lo; i < hi; ++i) {
        if (oob && t.contains(i)) continue;
        const int leaf = t.leaf_of(rows + i * p);
        const std::size_t size = t.leaf_size(leaf);
        if (size == 0) continue;
        const double inv = 1.0 / static_cast<double>(size);
        Accum& a = acc[i];
        a.num += t.leaf_sum_yz[static_cast<std::size_t>(leaf)] * inv;
        a.den += t.leaf_sum_zz[static_cast<std::size_t>(leaf)] * inv;
        ++a.trees;
      }
    }
  });
  c.defined.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const Accum& a = acc[i];
    if (a.trees == 0 || a.den / static_cast<double>(a.trees) < kCateDenominatorFloor) continue;
    c.tau_hat[i] = a.num / a.den;
    c.defined[i] = true;
  }
  finish(c);
  return c;
}

}  // namespace

CateVector predict_cate(const CausalForest& f, const Eigen::MatrixXd& points) {
  if (points.cols() != f.data.x.cols()) throw Error("prediction points have the wrong number of covariates");
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = points;
  return predict_rows(f, rows.data(), static_cast<std::size_t>(rows.rows()), false);
}

CateVector predict_oob(const CausalForest& f) { return predict_rows(f, f.data.rows.data(), f.data.ry.size(), true); }

std::vector<double> forest_weights(const CausalForest& f, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  std::vector<double> alpha(f.data.ry.size(), 0.0);
  std::size_t used = 0;
  for (const HonestTree& t : f.trees) {
    const int leaf = t.leaf_of(x);
    const std::size_t size = t.leaf_size(leaf);
    if (size == 0) continue;
    ++used;
    const double inv = 1.0 / static_cast<double>(size);
    const auto lo = t.leaf_offsets[static_cast<std::size_t>(leaf)];
    for (std::size_t k = 0; k < size; ++k) alpha[static_cast<std::size_t>(t.leaf_members[lo + k])] += inv;
  }
  if (used == 0) return {};
  for (double& a : alpha) a /= static_cast<double>(used);
  return alpha;
}

int tune_mtry(const ForestData& data, const NuisanceFit& nuisance, const ForestHyper& hyper,
              std::uint64_t master_seed, int tuning_trees) {
  const std::size_t p = data.codes.size();
  const int pi = static_cast<int>(p);
  std::vector<int> grid{std::max(1, (pi + 2) / 3), std::max(1, (pi + 1) / 2), pi};
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  int best = grid.front();
  double best_loss = std::numeric_limits<double>::infinity();
  for (int m : grid) {
    ForestHyper h = hyper;
    h.mtry = m;
    h.num_trees = std::min(hyper.num_trees, tuning_trees);
    const CausalForest f = grow_forest(data, nuisance, h, master_seed);
    const CateVector c = predict_oob(f);
    double loss = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < c.tau_hat.size(); ++i) {
      if (!c.defined[i]) continue;
      const double r = data.ry[i] - c.tau_hat[i] * data.rz[i];
      loss += r * r;
      ++k;
    }
    if (k == 0) continue;
    loss /= static_cast<double>(k);
    if (loss < best_loss) {
      best_loss = loss;
      best = m;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Overlap ATE

OverlapAteResult overlap_ate(const CausalForest& f) { return overlap_ate(f, predict_oob(f)); }

OverlapAteResult overlap_ate(const CausalForest& f, const CateVector& cate) {
  const std::size_t n = f.data.ry.size();
  if (cate.tau_hat.size() != n) throw Error("CATE vector does not match the forest's training data");
  OverlapAteResult r;
  r.scores.assign(n, std::numeric_limits<double>::quiet_NaN());
  r.weights.assign(n, 0.0);
  double sw = 0.0, swg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!cate.defined[i]) {
      ++r.excluded;
      continue;
    }
    const double e = f.nuisance.e_hat[i];
    const double v = e * (1.0 - e);
    const double tau = cate.tau_hat[i];
    const double rz = f.data.rz[i];
    r.scores[i] = tau + rz / v * (f.data.ry[i] - rz * tau);
    r.weights[i] = v;
    sw += v;
    swg += v * r.scores[i];
  }
  if (!(sw > 1e-12)) throw DegenerateError("no overlap: every overlap weight is zero");
  const double est = swg / sw;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (r.weights[i] == 0.0) continue;
    const double d = r.weights[i] * (r.scores[i] - est);
    ss += d * d;
  }
  r.estimate = make_effect(Method::Forest, Estimand::OverlapAte, est, std::sqrt(ss) / sw);
  return r;
}

// ---------------------------------------------------------------------------
// ITE summaries

IteSummary ite_summary(const CateVector& c, const Dataset& d, Field by) {
  if (c.tau_hat.size() != d.size()) throw Error("CATE vector does not match the dataset");
  if (by == Field::Treatment || by == Field::OutcomeLog) {
    throw SpecError(fmt::format("cannot summarize effects by '{}'", field_name(by)));
  }
  IteSummary s;
  s.by = by;
  if (is_categorical(by) || by == Field::HasProfile) {
    const auto levels = field_levels(by);
    const std::size_t k = by == Field::HasProfile ? 2 : levels.size();
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!c.defined[i]) continue;
      const auto g = static_cast<std::size_t>(d.value(by, i));
      sum[g] += c.tau_hat[i];
      ++cnt[g];
    }
    for (std::size_t g = 0; g < k; ++g) {
      const std::string name = by == Field::HasProfile ? std::to_string(g) : std::string(levels[g]);
      if (cnt[g] == 0) {
        s.notes.push_back(fmt::format("{}[{}]: no units with a defined effect; omitted", field_name(by), name));
        continue;
      }
      IteGroup grp;
      grp.group = name;
      grp.lower = grp.upper = static_cast<double>(g);
      grp.n = cnt[g];
      grp.mean_tau = grp.smoothed_tau = sum[g] / static_cast<double>(cnt[g]);
      s.groups.push_back(std::move(grp));
    }
    return s;
  }

  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (c.defined[i]) order.emplace_back(d.value(by, i), i);
  }
  if (order.empty()) {
    s.notes.push_back(fmt::format("{}: no units with a defined effect", field_name(by)));
    return s;
  }
  std::sort(order.begin(), order.end());
  const std::size_t m = order.size();
  const std::size_t bins = std::min<std::size_t>(kIteBins, m);
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * m / bins;
    const std::size_t hi = (b + 1) * m / bins;
    IteGroup grp;
    grp.group = fmt::format("bin_{:02}", b + 1);
    grp.lower = order[lo].first;
    grp.upper = order[hi - 1].first;
    grp.n = hi - lo;
    double sum = 0.0;
    for (std::size_t k = lo; k < hi; ++k) sum += c.tau_hat[order[k].second];
    grp.mean_tau = sum / static_cast<double>(grp.n);
    s.groups.push_back(std::move(grp));
  }
  const std::size_t half = kIteSmoothingWindow / 2;
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    const std::size_t lo = g >= half ? g - half : 0;
    const std::size_t hi = std::min(s.groups.size() - 1, g + half);
    double sum = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) sum += s.groups[k].mean_tau;
    s.groups[g].smoothed_tau = sum / static_cast<double>(hi - lo + 1);
  }
  return s;
}

std::string format_ite_csv(const CateVector& c) {
  std::string out = "unit_id,tau_hat,defined\n";
  for (std::size_t i = 0; i < c.tau_hat.size(); ++i) {
    out += c.defined[i] ? fmt::format("{},{},1\n", i, c.tau_hat[i]) : fmt::format("{},,0\n", i);
  }
  return out;
}

std::string format_ite_groups_csv(std::span<const IteSummary> summaries) {
  std::string out = "covariate,group,lower,upper,n,mean_tau,smoothed_tau\n";
  for (const IteSummary& s : summaries) {
    for (const IteGroup& g : s.groups) {
      out += fmt::format("{},{},{},{},{},{},{}\n", field_name(s.by), g.group, g.lower, g.upper, g.n, g.mean_tau,
                         g.smoothed_tau);
    }
  }
  return out;
}

}  // namespace causalgap

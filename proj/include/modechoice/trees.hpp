#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "modechoice/common.hpp"
#include "modechoice/rng.hpp"

namespace modechoice {

/// Gini impurity 1 - sum((c_k/n)^2) of a class-count vector.
inline double gini_impurity(const std::vector<double>& counts) {
  double n = 0.0;
  for (double c : counts) {
    if (c < 0) throw validation_error("gini_impurity: negative count");
    n += c;
  }
  if (n <= 0) throw validation_error("gini_impurity: all counts are zero");
  double s = 0.0;
  for (double c : counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;  // left: value <= threshold, right: value > threshold
  std::vector<double> class_counts;
  int leaf_label = 0;
  std::vector<double> leaf_probs;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<double> feature_tally;
  int n_classes = 0;
  int n_features = 0;

  int n_leaves() const {
    int n = 0;
    for (const auto& nd : nodes)
      if (nd.feature < 0) ++n;
    return n;
  }

  int leaf_index(const Eigen::RowVectorXd& row) const {
    int cur = 0;
    while (nodes[cur].feature >= 0)
      cur = row(nodes[cur].feature) <= nodes[cur].threshold ? nodes[cur].left : nodes[cur].right;
    return cur;
  }
};

struct CartOptions {
  int max_leaves = 6;  // 0: no pruning
  int min_split = 10;
};

namespace detail {

inline void finalize_leaf_stats(TreeNode& nd) {
  double n = 0.0;
  for (double c : nd.class_counts) n += c;
  nd.leaf_probs.assign(nd.class_counts.size(), 0.0);
  nd.leaf_label = 0;
  for (std::size_t k = 0; k < nd.class_counts.size(); ++k) {
    nd.leaf_probs[k] = nd.class_counts[k] / n;
    if (nd.class_counts[k] > nd.class_counts[nd.leaf_label]) nd.leaf_label = static_cast<int>(k);
  }
}

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;  // count-weighted impurity decrease
};

/// Best (feature, midpoint threshold) over the candidate features. Candidates
/// are scanned in ascending column order and thresholds ascending, so equal
/// gains resolve to the lowest column index, then the lowest threshold.
inline SplitChoice best_class_split(const Eigen::MatrixXd& z, const std::vector<int>& y,
                                    const std::vector<int>& idx,
                                    const std::vector<double>& parent_counts,
                                    const std::vector<int>& features, int n_classes) {
  SplitChoice best;
  const double parent_n = static_cast<double>(idx.size());
  const double parent_impurity = parent_n * gini_impurity(parent_counts);

  std::vector<std::pair<double, int>> vals(idx.size());
  std::vector<double> left(n_classes);
  for (int j : features) {
    for (std::size_t r = 0; r < idx.size(); ++r) vals[r] = {z(idx[r], j), y[idx[r]]};
    std::sort(vals.begin(), vals.end());
    if (vals.front().first == vals.back().first) continue;

    std::fill(left.begin(), left.end(), 0.0);
    double nl = 0.0;
    for (std::size_t r = 0; r + 1 < vals.size(); ++r) {
      left[vals[r].second] += 1.0;
      nl += 1.0;
      if (vals[r].first == vals[r + 1].first) continue;
      double nr = parent_n - nl;
      double gl = 0.0, gr = 0.0;
      for (int k = 0; k < n_classes; ++k) {
        double cl = left[k], cr = parent_counts[k] - cl;
        gl += cl * cl;
        gr += cr * cr;
      }
      double impurity_lr = (nl - gl / nl) + (nr - gr / nr);  // nl*gini_l + nr*gini_r
      double gain = parent_impurity - impurity_lr;
      if (gain > best.gain + 1e-12) {
        best.found = true;
        best.feature = j;
        best.threshold = vals[r].first + 0.5 * (vals[r + 1].first - vals[r].first);
        best.gain = gain;
      }
    }
  }
  return best;
}

struct GrowConfig {
  int min_split = 10;
  int mtry = 0;  // 0: all features
  Rng* rng = nullptr;
};

inline int grow_class_node(Tree& tree, const Eigen::MatrixXd& z, const std::vector<int>& y,
                           std::vector<int>& idx, const GrowConfig& cfg) {
  const int n_classes = tree.n_classes;
  TreeNode nd;
  nd.class_counts.assign(n_classes, 0.0);
  for (int i : idx) nd.class_counts[y[i]] += 1.0;
  finalize_leaf_stats(nd);
  int me = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(nd);

  bool pure = false;
  for (int k = 0; k < n_classes; ++k)
    if (tree.nodes[me].class_counts[k] == static_cast<double>(idx.size())) pure = true;
  if (pure || static_cast<int>(idx.size()) < cfg.min_split) return me;

  std::vector<int> features;
  if (cfg.mtry > 0 && cfg.mtry < tree.n_features) {
    features = cfg.rng->sample_without_replacement(tree.n_features, cfg.mtry);
  } else {
    features.resize(tree.n_features);
    for (int j = 0; j < tree.n_features; ++j) features[j] = j;
  }

  SplitChoice sp = best_class_split(z, y, idx, tree.nodes[me].class_counts, features, n_classes);
  if (!sp.found) return me;

  std::vector<int> left_idx, right_idx;
  for (int i : idx)
    (z(i, sp.feature) <= sp.threshold ? left_idx : right_idx).push_back(i);
  idx.clear();
  idx.shrink_to_fit();

  tree.feature_tally[sp.feature] += sp.gain;
  int l = grow_class_node(tree, z, y, left_idx, cfg);
  int r = grow_class_node(tree, z, y, right_idx, cfg);
  tree.nodes[me].feature = sp.feature;
  tree.nodes[me].threshold = sp.threshold;
  tree.nodes[me].left = l;
  tree.nodes[me].right = r;
  return me;
}

/// Drops nodes that pruning made unreachable and renumbers the links.
inline void compact_tree(Tree& tree) {
  std::vector<int> remap(tree.nodes.size(), -1);
  std::vector<TreeNode> kept;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    int cur = stack.back();
    stack.pop_back();
    remap[cur] = static_cast<int>(kept.size());
    kept.push_back(tree.nodes[cur]);
    if (tree.nodes[cur].feature >= 0) {
      stack.push_back(tree.nodes[cur].right);
      stack.push_back(tree.nodes[cur].left);
    }
  }
  for (auto& nd : kept)
    if (nd.feature >= 0) {
      nd.left = remap[nd.left];
      nd.right = remap[nd.right];
    }
  tree.nodes = std::move(kept);
}

/// Weakest-link collapse, one merge at a time, until the requested leaf
/// count: among internal nodes whose children are both leaves, fold the one
/// with the smallest resubstitution-impurity increase.
inline void prune_to_leaves(Tree& tree, int max_leaves) {
  auto node_cost = [&](const TreeNode& nd) {
    double n = 0.0;
    for (double c : nd.class_counts) n += c;
    return n * gini_impurity(nd.class_counts);
  };
  int leaves = tree.n_leaves();  // grown trees hold no unreachable nodes yet
  while (leaves > max_leaves) {
    int best = -1;
    double best_rise = kInf;
    for (std::size_t t = 0; t < tree.nodes.size(); ++t) {
      const auto& nd = tree.nodes[t];
      if (nd.feature < 0) continue;
      if (tree.nodes[nd.left].feature >= 0 || tree.nodes[nd.right].feature >= 0) continue;
      double rise = node_cost(nd) - node_cost(tree.nodes[nd.left]) - node_cost(tree.nodes[nd.right]);
      if (rise < best_rise) {
        best_rise = rise;
        best = static_cast<int>(t);
      }
    }
    if (best < 0) break;
    tree.nodes[best].feature = -1;
    tree.nodes[best].left = tree.nodes[best].right = -1;
    --leaves;
  }
  compact_tree(tree);
}

}  // namespace detail

/// Greedy Gini CART: grown fully subject to min_split, then cost-complexity
/// pruned to exactly max_leaves leaves when the unpruned tree is larger.
inline Tree fit_cart(const Eigen::MatrixXd& z, const std::vector<int>& y, int n_classes,
                     const CartOptions& opts = {}) {
  if (z.rows() < 1 || z.rows() != static_cast<Eigen::Index>(y.size()))
    throw validation_error("fit_cart: rows and labels disagree");
  Tree tree;
  tree.n_classes = n_classes;
  tree.n_features = static_cast<int>(z.cols());
  tree.feature_tally.assign(tree.n_features, 0.0);
  std::vector<int> idx(z.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  detail::GrowConfig cfg;
  cfg.min_split = opts.min_split;
  detail::grow_class_node(tree, z, y, idx, cfg);
  if (opts.max_leaves > 0) detail::prune_to_leaves(tree, opts.max_leaves);
  return tree;
}

enum class EnsembleKind { bagging, random_forest };

struct Ensemble {
  EnsembleKind kind = EnsembleKind::bagging;
  std::vector<Tree> trees;
  int mtry = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> oob_indices;
  std::vector<double> feature_tally;
  int n_classes = 0;
  int n_features = 0;
};

struct EnsembleOptions {
  int n_trees = 0;  // 0: model default (400 bagging, 500 random forest)
  std::uint64_t seed = 0;
  int min_split = 10;
  bool bootstrap = true;  // false: every tree sees the identity sample
  int mtry = 0;           // random forest only
};

namespace detail {

inline Ensemble fit_forest(const Eigen::MatrixXd& z, const std::vector<int>& y, int n_classes,
                           EnsembleKind kind, const EnsembleOptions& opts) {
  if (opts.n_trees < 1) throw validation_error("ensemble needs n_trees >= 1");
  const int n = static_cast<int>(z.rows());
  const int p = static_cast<int>(z.cols());
  if (kind == EnsembleKind::random_forest && (opts.mtry < 1 || opts.mtry > p))
    throw validation_error("random forest needs 1 <= mtry <= n_features (mtry=" +
                           std::to_string(opts.mtry) + ", n_features=" + std::to_string(p) + ")");

  Ensemble ens;
  ens.kind = kind;
  ens.mtry = kind == EnsembleKind::random_forest ? opts.mtry : 0;
  ens.seed = opts.seed;
  ens.n_classes = n_classes;
  ens.n_features = p;
  ens.feature_tally.assign(p, 0.0);
  ens.trees.resize(opts.n_trees);
  ens.oob_indices.resize(opts.n_trees);

  for (int t = 0; t < opts.n_trees; ++t) {
    Rng rng(mix_seed(opts.seed, static_cast<std::uint64_t>(t)));
    std::vector<int> sample(n);
    std::vector<uint8_t> in_bag(n, 0);
    if (opts.bootstrap) {
      for (int i = 0; i < n; ++i) {
        sample[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        in_bag[sample[i]] = 1;
      }
    } else {
      for (int i = 0; i < n; ++i) sample[i] = i;
      std::fill(in_bag.begin(), in_bag.end(), 1);
    }
    for (int i = 0; i < n; ++i)
      if (!in_bag[i]) ens.oob_indices[t].push_back(i);

    Tree& tree = ens.trees[t];
    tree.n_classes = n_classes;
    tree.n_features = p;
    tree.feature_tally.assign(p, 0.0);
    GrowConfig cfg;
    cfg.min_split = opts.min_split;
    cfg.mtry = kind == EnsembleKind::random_forest ? opts.mtry : 0;
    cfg.rng = &rng;
    grow_class_node(tree, z, y, sample, cfg);
    for (int j = 0; j < p; ++j) ens.feature_tally[j] += tree.feature_tally[j];
  }
  return ens;
}

}  // namespace detail

/// Bootstrap-aggregated unpruned trees over all features.
inline Ensemble fit_bagging(const Eigen::MatrixXd& z, const std::vector<int>& y, int n_classes,
                            EnsembleOptions opts = {}) {
  opts.mtry = 0;
  if (opts.n_trees == 0) opts.n_trees = 400;
  return detail::fit_forest(z, y, n_classes, EnsembleKind::bagging, opts);
}

/// Random forest: bagging plus a fresh uniform subset of mtry columns at
/// every split. Defaults are 500 trees with 12 candidate variables.
inline Ensemble fit_rf(const Eigen::MatrixXd& z, const std::vector<int>& y, int n_classes,
                       EnsembleOptions opts = {}) {
  if (opts.n_trees == 0) opts.n_trees = 500;
  if (opts.mtry == 0) opts.mtry = 12;
  return detail::fit_forest(z, y, n_classes, EnsembleKind::random_forest, opts);
}

// ---------------------------------------------------------------------------
// Gradient boosting with multinomial deviance
// ---------------------------------------------------------------------------

struct RegNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf estimate (unshrunk)
};

struct RegTree {
  std::vector<RegNode> nodes;

  double predict(const Eigen::RowVectorXd& row) const {
    int cur = 0;
    while (nodes[cur].feature >= 0)
      cur = row(nodes[cur].feature) <= nodes[cur].threshold ? nodes[cur].left : nodes[cur].right;
    return nodes[cur].value;
  }
};

struct BoostOptions {
  int n_iters = 400;
  double shrinkage = 0.14;
  int interaction_depth = 10;  // internal splits per stage tree
  int min_node = 10;
};

struct BoostModel {
  BoostOptions opts;
  int n_classes = 0;
  int n_features = 0;
  Eigen::VectorXd init_scores;
  std::vector<std::vector<RegTree>> stages;  // [iteration][class]
  std::vector<double> feature_tally;

  Eigen::VectorXd scores(const Eigen::RowVectorXd& row) const {
    Eigen::VectorXd f = init_scores;
    for (const auto& stage : stages)
      for (int k = 0; k < n_classes; ++k) f(k) += opts.shrinkage * stage[k].predict(row);
    return f;
  }
};

namespace detail {

struct RegLeafCandidate {
  int node = -1;
  std::vector<int> idx;
  double sum = 0.0;
  bool has_split = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  std::vector<int> left_idx, right_idx;
};

inline void find_reg_split(RegLeafCandidate& c, const Eigen::MatrixXd& z,
                           const Eigen::VectorXd& target, int min_node) {
  c.has_split = false;
  const int n = static_cast<int>(c.idx.size());
  if (n < 2 * min_node) return;
  double best_gain = 1e-12;
  std::vector<std::pair<double, int>> vals(n);
  for (int j = 0; j < z.cols(); ++j) {
    for (int r = 0; r < n; ++r) vals[r] = {z(c.idx[r], j), c.idx[r]};
    std::sort(vals.begin(), vals.end());
    if (vals.front().first == vals.back().first) continue;
    double sum_left = 0.0;
    for (int r = 0; r + 1 < n; ++r) {
      sum_left += target(vals[r].second);
      if (vals[r].first == vals[r + 1].first) continue;
      int nl = r + 1, nr = n - nl;
      if (nl < min_node || nr < min_node) continue;
      double sum_right = c.sum - sum_left;
      double gain = sum_left * sum_left / nl + sum_right * sum_right / nr - c.sum * c.sum / n;
      if (gain > best_gain) {
        best_gain = gain;
        c.has_split = true;
        c.feature = j;
        c.threshold = vals[r].first + 0.5 * (vals[r + 1].first - vals[r].first);
        c.gain = gain;
      }
    }
  }
  if (!c.has_split) return;
  c.left_idx.clear();
  c.right_idx.clear();
  for (int i : c.idx) (z(i, c.feature) <= c.threshold ? c.left_idx : c.right_idx).push_back(i);
}

/// Best-first regression tree with at most `depth` internal splits, squared
/// error criterion, and >= min_node observations per leaf. Returns the tree
/// plus the observation list of every leaf so the caller can set estimates.
inline RegTree grow_reg_tree(const Eigen::MatrixXd& z, const Eigen::VectorXd& target, int depth,
                             int min_node, std::vector<std::pair<int, std::vector<int>>>& leaves,
                             std::vector<double>& tally) {
  RegTree tree;
  std::vector<RegLeafCandidate> open;

  RegLeafCandidate root;
  root.node = 0;
  root.idx.resize(z.rows());
  for (std::size_t i = 0; i < root.idx.size(); ++i) root.idx[i] = static_cast<int>(i);
  for (int i : root.idx) root.sum += target(i);
  tree.nodes.push_back({});
  find_reg_split(root, z, target, min_node);
  open.push_back(std::move(root));

  int splits = 0;
  while (splits < depth) {
    int best = -1;
    for (std::size_t c = 0; c < open.size(); ++c)
      if (open[c].has_split && (best < 0 || open[c].gain > open[best].gain)) best = static_cast<int>(c);
    if (best < 0) break;

    RegLeafCandidate cand = std::move(open[best]);
    open.erase(open.begin() + best);
    tally[cand.feature] += cand.gain;

    RegLeafCandidate l, r;
    l.node = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    r.node = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[cand.node].feature = cand.feature;
    tree.nodes[cand.node].threshold = cand.threshold;
    tree.nodes[cand.node].left = l.node;
    tree.nodes[cand.node].right = r.node;

    l.idx = std::move(cand.left_idx);
    r.idx = std::move(cand.right_idx);
    for (int i : l.idx) l.sum += target(i);
    r.sum = cand.sum - l.sum;
    find_reg_split(l, z, target, min_node);
    find_reg_split(r, z, target, min_node);
    open.push_back(std::move(l));
    open.push_back(std::move(r));
    ++splits;
  }

  for (auto& c : open) leaves.emplace_back(c.node, std::move(c.idx));
  return tree;
}

}  // namespace detail

/// Multinomial-deviance gradient boosting: K score functions, one regression
/// tree per class per iteration fit to 1[y=k] - softmax_k(F), terminal nodes
/// by the multinomial update, scaled by shrinkage.
inline BoostModel fit_boost(const Eigen::MatrixXd& z, const std::vector<int>& y, int n_classes,
                            const BoostOptions& opts = {}) {
  const int n = static_cast<int>(z.rows());
  if (n <= opts.min_node) throw validation_error("fit_boost needs more observations than min_node");

  BoostModel model;
  model.opts = opts;
  model.n_classes = n_classes;
  model.n_features = static_cast<int>(z.cols());
  model.feature_tally.assign(model.n_features, 0.0);
  model.init_scores.resize(n_classes);
  {
    std::vector<double> counts(n_classes, 0.0);
    for (int yi : y) counts[yi] += 1.0;
    for (int k = 0; k < n_classes; ++k)
      model.init_scores(k) = std::log(std::max(counts[k] / n, 1e-12));
  }

  Eigen::MatrixXd f = model.init_scores.transpose().replicate(n, 1);
  Eigen::MatrixXd probs(n, n_classes);
  Eigen::VectorXd residual(n);
  const double kfactor = static_cast<double>(n_classes - 1) / n_classes;

  for (int m = 0; m < opts.n_iters; ++m) {
    for (int i = 0; i < n; ++i) {
      double mx = f.row(i).maxCoeff();
      probs.row(i) = (f.row(i).array() - mx).exp();
      probs.row(i) /= probs.row(i).sum();
    }
    std::vector<RegTree> stage;
    stage.reserve(n_classes);
    for (int k = 0; k < n_classes; ++k) {
      for (int i = 0; i < n; ++i) residual(i) = ((y[i] == k) ? 1.0 : 0.0) - probs(i, k);
      std::vector<std::pair<int, std::vector<int>>> leaves;
      RegTree tree = detail::grow_reg_tree(z, residual, opts.interaction_depth, opts.min_node,
                                           leaves, model.feature_tally);
      for (auto& [node, idx] : leaves) {
        double num = 0.0, den = 0.0;
        for (int i : idx) {
          num += residual(i);
          den += std::abs(residual(i)) * (1.0 - std::abs(residual(i)));
        }
        tree.nodes[node].value = den > 1e-12 ? kfactor * num / den : 0.0;
        for (int i : idx) f(i, k) += opts.shrinkage * tree.nodes[node].value;
      }
      stage.push_back(std::move(tree));
    }
    model.stages.push_back(std::move(stage));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd predict_proba(const Tree& tree, const Eigen::MatrixXd& rows) {
  if (rows.cols() != tree.n_features)
    throw validation_error("tree expects " + std::to_string(tree.n_features) + " columns, got " +
                           std::to_string(rows.cols()));
  Eigen::MatrixXd out(rows.rows(), tree.n_classes);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const auto& leaf = tree.nodes[tree.leaf_index(rows.row(i))];
    for (int k = 0; k < tree.n_classes; ++k) out(i, k) = leaf.leaf_probs[k];
  }
  return out;
}

/// Ensemble probability is the fraction of tree votes per class.
inline Eigen::MatrixXd predict_proba(const Ensemble& ens, const Eigen::MatrixXd& rows) {
  if (rows.cols() != ens.n_features)
    throw validation_error("ensemble expects " + std::to_string(ens.n_features) +
                           " columns, got " + std::to_string(rows.cols()));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows.rows(), ens.n_classes);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (const auto& tree : ens.trees) {
      const auto& leaf = tree.nodes[tree.leaf_index(rows.row(i))];
      out(i, leaf.leaf_label) += 1.0;
    }
  }
  out /= static_cast<double>(ens.trees.size());
  return out;
}

inline Eigen::MatrixXd predict_proba(const BoostModel& model, const Eigen::MatrixXd& rows) {
  if (rows.cols() != model.n_features)
    throw validation_error("boosting model expects " + std::to_string(model.n_features) +
                           " columns, got " + std::to_string(rows.cols()));
  Eigen::MatrixXd out(rows.rows(), model.n_classes);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Eigen::VectorXd f = model.scores(rows.row(i));
    double mx = f.maxCoeff();
    Eigen::VectorXd e = (f.array() - mx).exp();
    out.row(i) = e.transpose() / e.sum();
  }
  return out;
}

}  // namespace modechoice

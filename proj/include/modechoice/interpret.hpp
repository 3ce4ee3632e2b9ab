#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "modechoice/classifiers.hpp"
#include "modechoice/logit.hpp"
#include "modechoice/trees.hpp"

namespace modechoice {

/// Uniform prediction contract for the interpretation suite: wide rows in,
/// per-row probability simplex out, plus column metadata and the per-column
/// training range used by the constrained sensitivity variants.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& rows) const = 0;

  std::string name;
  int n_alts = 0;
  std::vector<std::string> col_names;
  std::vector<std::string> alt_names;
  Eigen::VectorXd train_min, train_max;

  int col_index(const std::string& col) const {
    for (std::size_t j = 0; j < col_names.size(); ++j)
      if (col_names[j] == col) return static_cast<int>(j);
    throw validation_error("predictor '" + name + "' has no column '" + col + "'");
  }

 protected:
  void set_metadata(const WideMatrix& train) {
    n_alts = train.n_alts;
    col_names = train.col_names;
    alt_names = train.alt_names;
    train_min = train.Z.colwise().minCoeff();
    train_max = train.Z.colwise().maxCoeff();
  }
  friend std::unique_ptr<Predictor> wrap_logit(const FittedLogit&, const WideMatrix&);
};

inline Eigen::MatrixXd predict_proba(const NaiveBayesModel& m, const Eigen::MatrixXd& rows) {
  return nb_predict_proba(m, rows);
}
inline Eigen::MatrixXd predict_proba(const NeuralNet& m, const Eigen::MatrixXd& rows) {
  return nn_predict_proba(m, rows);
}

template <class Model>
class ModelPredictor final : public Predictor {
 public:
  ModelPredictor(Model model, const WideMatrix& train, std::string model_name)
      : model_(std::move(model)) {
    name = std::move(model_name);
    set_metadata(train);
  }
  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& rows) const override {
    return modechoice::predict_proba(model_, rows);
  }
  const Model& model() const { return model_; }

 private:
  Model model_;
};

/// Logit models predict on wide rows by reassembling each row into its K x P
/// attribute slice; the mixed logit averages MNL probabilities over its draw
/// block (the unconditional simulated probability).
class LogitPredictor final : public Predictor {
 public:
  LogitPredictor(FittedLogit fit, const WideMatrix& train, std::string model_name)
      : fit_(std::move(fit)), mapping_(train) {
    name = std::move(model_name);
    set_metadata(train);
    mapping_.Z.resize(0, 0);  // only the column mapping is needed
    mapping_.y.clear();
    n_features_ = static_cast<int>(mapping_.col_of.size());
    if (fit_.random) {
      const auto& rcs = *fit_.random;
      HaltonDraws hd = normal_draws(1, rcs.n_draws, static_cast<int>(rcs.coef_ids.size()), rcs.skip);
      pred_draws_.resize(rcs.n_draws, hd.dims);
      for (int d = 0; d < rcs.n_draws; ++d)
        for (int r = 0; r < hd.dims; ++r) pred_draws_(d, r) = hd.z(0, d, r);
    }
  }

  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& rows) const override {
    if (rows.cols() != static_cast<Eigen::Index>(col_names.size()))
      throw validation_error("logit predictor expects " + std::to_string(col_names.size()) +
                             " columns, got " + std::to_string(rows.cols()));
    Eigen::MatrixXd out(rows.rows(), n_alts);
    Eigen::MatrixXd x(n_alts, n_features_);
    const int n_base = fit_.spec.n_params();
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      wide_row_to_long(mapping_, rows.row(i), n_features_, x);
      if (!fit_.random) {
        out.row(i) = mnl_probabilities(fit_.beta.head(n_base), fit_.spec, x).transpose();
      } else {
        const auto& rcs = *fit_.random;
        Eigen::VectorXd beta_d = fit_.beta.head(n_base);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_alts);
        for (int d = 0; d < rcs.n_draws; ++d) {
          for (std::size_t r = 0; r < rcs.coef_ids.size(); ++r)
            beta_d(rcs.coef_ids[r]) = fit_.beta(rcs.coef_ids[r]) +
                                      fit_.beta(n_base + static_cast<int>(r)) * pred_draws_(d, r);
          acc += mnl_probabilities(beta_d, fit_.spec, x);
        }
        out.row(i) = acc.transpose() / static_cast<double>(rcs.n_draws);
      }
    }
    return out;
  }

  const FittedLogit& fit() const { return fit_; }

 private:
  FittedLogit fit_;
  WideMatrix mapping_;
  Eigen::MatrixXd pred_draws_;
  int n_features_ = 0;
};

inline std::unique_ptr<Predictor> wrap_logit(const FittedLogit& fit, const WideMatrix& train) {
  return std::make_unique<LogitPredictor>(fit, train, fit.random ? "mixl" : "mnl");
}

// ---------------------------------------------------------------------------
// Aggregate predictions and sensitivities
// ---------------------------------------------------------------------------

enum class ShareMode {
  mean_probability,  // average predicted probability per alternative
  label_fraction     // fraction of argmax labels per alternative
};

inline int argmax_choice(const Eigen::VectorXd& probs) {
  int best = 0;
  for (Eigen::Index k = 1; k < probs.size(); ++k)
    if (probs(k) > probs(best)) best = static_cast<int>(k);
  return best;
}

inline Eigen::VectorXd market_share(const Predictor& pred, const Eigen::MatrixXd& rows,
                                    ShareMode mode = ShareMode::mean_probability) {
  if (rows.rows() < 1) throw validation_error("market_share needs at least one row");
  Eigen::MatrixXd probs = pred.predict_proba(rows);
  Eigen::VectorXd share = Eigen::VectorXd::Zero(probs.cols());
  if (mode == ShareMode::mean_probability) {
    share = probs.colwise().mean();
  } else {
    for (Eigen::Index i = 0; i < probs.rows(); ++i) share(argmax_choice(probs.row(i))) += 1.0;
    share /= static_cast<double>(probs.rows());
  }
  return share;
}

/// Perturbation request for elasticities and marginal effects. `constrained`
/// drops rows whose perturbed value leaves the predictor's training range
/// before averaging (the out-of-bound treatment for tree ensembles).
struct SensitivitySpec {
  int column = -1;
  double delta = 0.0;  // relative fraction for elasticity, absolute for marginal effect
  int target_alt = 0;
  bool constrained = false;
};

namespace detail {

inline std::vector<int> in_range_rows(const Predictor& pred, const Eigen::MatrixXd& perturbed,
                                      int column) {
  std::vector<int> keep;
  for (Eigen::Index i = 0; i < perturbed.rows(); ++i) {
    double v = perturbed(i, column);
    if (v >= pred.train_min(column) && v <= pred.train_max(column)) keep.push_back(static_cast<int>(i));
  }
  return keep;
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(idx[r]);
  return out;
}

inline std::pair<double, double> share_pair(const Predictor& pred, const Eigen::MatrixXd& rows,
                                            const Eigen::MatrixXd& perturbed,
                                            const SensitivitySpec& spec) {
  if (spec.delta == 0.0) throw validation_error("sensitivity delta must be nonzero");
  if (!spec.constrained) {
    return {market_share(pred, rows)(spec.target_alt),
            market_share(pred, perturbed)(spec.target_alt)};
  }
  std::vector<int> keep = in_range_rows(pred, perturbed, spec.column);
  if (keep.empty())
    throw validation_error("constrained sensitivity removed every row for column '" +
                           pred.col_names[spec.column] + "'");
  return {market_share(pred, take_rows(rows, keep))(spec.target_alt),
          market_share(pred, take_rows(perturbed, keep))(spec.target_alt)};
}

}  // namespace detail

/// Arc elasticity: relative share response to a multiplicative (1 + delta)
/// perturbation of the feature column.
inline double arc_elasticity(const Predictor& pred, const Eigen::MatrixXd& rows,
                             const SensitivitySpec& spec) {
  Eigen::MatrixXd perturbed = rows;
  perturbed.col(spec.column) *= (1.0 + spec.delta);
  auto [q0, q1] = detail::share_pair(pred, rows, perturbed, spec);
  if (q0 == 0.0) throw validation_error("arc_elasticity: baseline share is zero");
  return ((q1 - q0) / q0) / std::abs(spec.delta);
}

/// Marginal effect: share response per unit additive change of the feature.
inline double marginal_effect(const Predictor& pred, const Eigen::MatrixXd& rows,
                              const SensitivitySpec& spec) {
  Eigen::MatrixXd perturbed = rows;
  perturbed.col(spec.column).array() += spec.delta;
  auto [q0, q1] = detail::share_pair(pred, rows, perturbed, spec);
  return (q1 - q0) / std::abs(spec.delta);
}

/// Effects re-expressed in units of a reference feature (e.g. minutes of
/// transit travel time per transfer).
inline std::map<std::string, double> value_of_time_ratio(
    const std::map<std::string, double>& effects, const std::string& reference) {
  auto it = effects.find(reference);
  if (it == effects.end())
    throw validation_error("value_of_time_ratio: no effect for reference '" + reference + "'");
  if (it->second == 0.0) throw validation_error("value_of_time_ratio: reference effect is zero");
  std::map<std::string, double> out;
  for (const auto& [feature, effect] : effects) out[feature] = effect / it->second;
  return out;
}

struct PDCurve {
  std::string feature;
  int target_alt = 0;
  std::vector<double> grid;
  std::vector<double> values;
};

inline std::vector<double> pd_default_grid(const Eigen::MatrixXd& rows, int column,
                                           int points = 50) {
  double lo = rows.col(column).minCoeff();
  double hi = rows.col(column).maxCoeff();
  std::vector<double> grid(points);
  if (points == 1 || lo == hi) {
    grid.assign(1, lo);
    return grid;
  }
  for (int g = 0; g < points; ++g) grid[g] = lo + (hi - lo) * g / (points - 1);
  return grid;
}

/// Friedman-style partial dependence on the probability scale: the feature
/// column is overridden with each grid value across all rows.
inline PDCurve partial_dependence(const Predictor& pred, const Eigen::MatrixXd& rows, int column,
                                  const std::vector<double>& grid, int target_alt) {
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (grid[g] <= grid[g - 1]) throw validation_error("partial_dependence grid must be ascending");
  PDCurve curve;
  curve.feature = pred.col_names[column];
  curve.target_alt = target_alt;
  curve.grid = grid;
  Eigen::MatrixXd work = rows;
  for (double v : grid) {
    work.col(column).setConstant(v);
    curve.values.push_back(market_share(pred, work)(target_alt));
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Variable importance
// ---------------------------------------------------------------------------

struct ImportanceEntry {
  std::string variable;
  double score;
};

namespace detail {

inline std::vector<ImportanceEntry> rank_tally(const std::vector<double>& tally,
                                               const std::vector<std::string>& names,
                                               bool normalize_to_max) {
  std::vector<int> order(tally.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (tally[a] != tally[b]) return tally[a] > tally[b];
    return a < b;  // lowest column index on ties
  });
  double denom;
  if (normalize_to_max) {
    denom = tally[order.front()];
  } else {
    denom = 0.0;
    for (double t : tally) denom += t;
  }
  std::vector<ImportanceEntry> out;
  for (int j : order)
    out.push_back({names[j], denom > 0 ? 100.0 * tally[j] / denom : 0.0});
  return out;
}

}  // namespace detail

/// Mean-decrease-in-impurity importance, normalized so the top feature scores
/// 100, descending with lowest-column-index tie-break.
template <class TreeModel>
inline std::vector<ImportanceEntry> gini_importance(const TreeModel& model,
                                                    const std::vector<std::string>& col_names) {
  return detail::rank_tally(model.feature_tally, col_names, /*normalize_to_max=*/true);
}

/// Garson weight decomposition: input contributions via |W1| shares weighted
/// by |W2|, normalized to sum 100.
inline std::vector<ImportanceEntry> nn_importance(const NeuralNet& nn,
                                                  const std::vector<std::string>& col_names) {
  std::vector<double> tally(nn.n_inputs, 0.0);
  for (int h = 0; h < nn.opts.hidden; ++h) {
    double row_sum = nn.w1.row(h).cwiseAbs().sum();
    if (row_sum == 0.0) continue;
    double out_sum = nn.w2.col(h).cwiseAbs().sum();
    for (int j = 0; j < nn.n_inputs; ++j)
      tally[j] += std::abs(nn.w1(h, j)) / row_sum * out_sum;
  }
  return detail::rank_tally(tally, col_names, /*normalize_to_max=*/false);
}

/// One importance column for the cross-model rank table.
struct ImportanceColumn {
  std::string model;
  std::vector<ImportanceEntry> entries;  // already ranked, best first
};

struct ImportanceTable {
  std::vector<std::string> variables;
  std::vector<std::string> models;
  std::vector<std::vector<int>> ranks;  // [variable][model], 0 marks absent ("/")
};

/// Rows ordered by the first model's ranking, then by first appearance in
/// later columns; absent (variable, model) cells are 0 and print as "/".
inline ImportanceTable importance_table(const std::vector<ImportanceColumn>& columns) {
  ImportanceTable table;
  for (const auto& col : columns) {
    table.models.push_back(col.model);
    for (const auto& e : col.entries) {
      bool seen = false;
      for (const auto& v : table.variables)
        if (v == e.variable) seen = true;
      if (!seen) table.variables.push_back(e.variable);
    }
  }
  table.ranks.assign(table.variables.size(), std::vector<int>(columns.size(), 0));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t r = 0; r < columns[c].entries.size(); ++r) {
      const auto& var = columns[c].entries[r].variable;
      for (std::size_t v = 0; v < table.variables.size(); ++v)
        if (table.variables[v] == var) table.ranks[v][c] = static_cast<int>(r + 1);
    }
  }
  return table;
}

}  // namespace modechoice

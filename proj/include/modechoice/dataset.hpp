#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "modechoice/csv.hpp"
#include "modechoice/rng.hpp"

namespace modechoice {

/// Panel choice data in the long, alternative-indexed layout: N observations,
/// K alternatives, P features, with the attribute tensor stored flat.
/// Immutable after construction.
struct ChoiceDataset {
  int n_obs = 0;
  int n_alts = 0;
  int n_features = 0;
  std::vector<std::string> alt_names;
  std::vector<std::string> feature_names;
  std::vector<long long> obs_id;     // per observation, original id
  std::vector<long long> person_id;  // per observation, panel grouping
  std::vector<double> x_flat;        // n_obs * n_alts * n_features
  std::vector<int> chosen;           // per observation, in [0, n_alts)
  std::vector<uint8_t> avail_flat;   // n_obs * n_alts
  // applies[p*n_alts + k]: feature p enters alternative k's attributes.
  // Non-applicable cells hold 0 in x_flat.
  std::vector<uint8_t> applies;

  double x(int i, int k, int p) const { return x_flat[(static_cast<std::size_t>(i) * n_alts + k) * n_features + p]; }
  double& x(int i, int k, int p) { return x_flat[(static_cast<std::size_t>(i) * n_alts + k) * n_features + p]; }
  bool avail(int i, int k) const { return avail_flat[static_cast<std::size_t>(i) * n_alts + k] != 0; }
  bool feature_applies(int p, int k) const { return applies[static_cast<std::size_t>(p) * n_alts + k] != 0; }

  int alt_index(const std::string& name) const {
    for (int k = 0; k < n_alts; ++k)
      if (alt_names[k] == name) return k;
    return -1;
  }
  int feature_index(const std::string& name) const {
    for (int p = 0; p < n_features; ++p)
      if (feature_names[p] == name) return p;
    return -1;
  }

  /// Observation indices grouped by person, in order of first appearance.
  std::vector<std::vector<int>> person_groups() const {
    std::vector<std::vector<int>> groups;
    std::map<long long, int> slot;
    for (int i = 0; i < n_obs; ++i) {
      auto it = slot.find(person_id[i]);
      if (it == slot.end()) {
        slot.emplace(person_id[i], static_cast<int>(groups.size()));
        groups.push_back({i});
      } else {
        groups[it->second].push_back(i);
      }
    }
    return groups;
  }

  int n_individuals() const {
    std::set<long long> ids(person_id.begin(), person_id.end());
    return static_cast<int>(ids.size());
  }

  /// Row subset (e.g. one CV fold); keeps alternative/feature metadata.
  ChoiceDataset subset(const std::vector<int>& idx) const {
    ChoiceDataset out;
    out.n_obs = static_cast<int>(idx.size());
    out.n_alts = n_alts;
    out.n_features = n_features;
    out.alt_names = alt_names;
    out.feature_names = feature_names;
    out.applies = applies;
    out.x_flat.resize(static_cast<std::size_t>(out.n_obs) * n_alts * n_features);
    out.avail_flat.resize(static_cast<std::size_t>(out.n_obs) * n_alts);
    out.obs_id.reserve(idx.size());
    out.person_id.reserve(idx.size());
    out.chosen.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      int i = idx[r];
      out.obs_id.push_back(obs_id[i]);
      out.person_id.push_back(person_id[i]);
      out.chosen.push_back(chosen[i]);
      std::copy_n(&x_flat[static_cast<std::size_t>(i) * n_alts * n_features],
                  static_cast<std::size_t>(n_alts) * n_features,
                  &out.x_flat[r * n_alts * n_features]);
      std::copy_n(&avail_flat[static_cast<std::size_t>(i) * n_alts], n_alts,
                  &out.avail_flat[r * n_alts]);
    }
    return out;
  }

  void validate() const {
    if (n_alts < 2) throw validation_error("dataset needs at least 2 alternatives");
    if (n_obs < 1) throw validation_error("dataset needs at least 1 observation");
    if (n_features < 1) throw validation_error("dataset needs at least 1 feature");
    for (int i = 0; i < n_obs; ++i) {
      if (chosen[i] < 0 || chosen[i] >= n_alts)
        throw validation_error("obs " + std::to_string(obs_id[i]) + ": chosen index out of range");
      if (!avail(i, chosen[i]))
        throw validation_error("obs " + std::to_string(obs_id[i]) + ": chosen alternative '" +
                               alt_names[chosen[i]] + "' is not available");
    }
    for (double v : x_flat)
      if (!std::isfinite(v)) throw validation_error("dataset contains a non-finite attribute value");
  }
};

/// One-row-per-observation layout for the classifiers: alternative-varying
/// features flattened to one column per applicable alternative.
struct WideMatrix {
  Eigen::MatrixXd Z;  // n_obs x n_cols
  std::vector<std::string> col_names;
  std::vector<int> y;  // chosen alternative per row
  int n_alts = 0;
  std::vector<std::string> alt_names;

  // Mapping back to the long layout. col_feature/col_alt describe each wide
  // column; col_alt = -1 marks an individual-level column shared by all
  // alternatives. col_of[p][k] is the wide column feeding X[.,k,p], or -1
  // where the feature does not apply.
  std::vector<int> col_feature;
  std::vector<int> col_alt;
  std::vector<std::vector<int>> col_of;

  int n_rows() const { return static_cast<int>(Z.rows()); }
  int n_cols() const { return static_cast<int>(Z.cols()); }

  int col_index(const std::string& name) const {
    for (std::size_t j = 0; j < col_names.size(); ++j)
      if (col_names[j] == name) return static_cast<int>(j);
    return -1;
  }

  WideMatrix rows(const std::vector<int>& idx) const {
    WideMatrix out = *this;
    out.Z.resize(static_cast<Eigen::Index>(idx.size()), Z.cols());
    out.y.clear();
    out.y.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.Z.row(static_cast<Eigen::Index>(r)) = Z.row(idx[r]);
      out.y.push_back(y[idx[r]]);
    }
    return out;
  }
};

/// Deterministic observation-to-fold assignment.
struct FoldAssignment {
  int k = 0;
  std::vector<int> assignment;  // per observation, in [0, k)
  std::uint64_t seed = 0;

  std::vector<int> fold_indices(int fold) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == fold) out.push_back(static_cast<int>(i));
    return out;
  }
  std::vector<int> complement_indices(int fold) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] != fold) out.push_back(static_cast<int>(i));
    return out;
  }
};

/// Column mapping for load_long. Feature applicability can be declared
/// explicitly; otherwise a feature is taken to apply to every alternative
/// where it has at least one nonzero value (all-zero everywhere means it
/// applies everywhere).
struct LongSchema {
  std::string obs_id = "obs_id";
  std::string person_id = "person_id";
  std::string alt = "alt";
  std::string chosen = "chosen";
  std::vector<std::string> features;  // empty: every remaining column
  std::map<std::string, std::vector<std::string>> applies;
};

inline ChoiceDataset load_long(const CsvTable& t, const LongSchema& schema = {}) {
  const int c_obs = t.require_col(schema.obs_id);
  const int c_person = t.require_col(schema.person_id);
  const int c_alt = t.require_col(schema.alt);
  const int c_chosen = t.require_col(schema.chosen);

  std::vector<std::string> features = schema.features;
  if (features.empty()) {
    for (const auto& h : t.header)
      if (h != schema.obs_id && h != schema.person_id && h != schema.alt && h != schema.chosen)
        features.push_back(h);
  }
  if (features.empty()) throw validation_error("long CSV has no feature columns");
  std::vector<int> c_feat;
  for (const auto& f : features) c_feat.push_back(t.require_col(f));

  // First pass: discover alternatives and observations in file order.
  std::vector<std::string> alt_names;
  std::map<std::string, int> alt_of;
  std::vector<long long> obs_ids;
  std::map<long long, int> obs_of;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string& a = row[c_alt];
    if (!alt_of.count(a)) {
      alt_of.emplace(a, static_cast<int>(alt_names.size()));
      alt_names.push_back(a);
    }
    long long oid = static_cast<long long>(parse_num(row[c_obs], schema.obs_id, static_cast<long long>(r + 1)));
    if (!obs_of.count(oid)) {
      obs_of.emplace(oid, static_cast<int>(obs_ids.size()));
      obs_ids.push_back(oid);
    }
  }

  ChoiceDataset ds;
  ds.n_obs = static_cast<int>(obs_ids.size());
  ds.n_alts = static_cast<int>(alt_names.size());
  ds.n_features = static_cast<int>(features.size());
  ds.alt_names = alt_names;
  ds.feature_names = features;
  ds.obs_id = obs_ids;
  ds.person_id.assign(ds.n_obs, 0);
  ds.chosen.assign(ds.n_obs, -1);
  ds.x_flat.assign(static_cast<std::size_t>(ds.n_obs) * ds.n_alts * ds.n_features, 0.0);
  ds.avail_flat.assign(static_cast<std::size_t>(ds.n_obs) * ds.n_alts, 0);
  ds.applies.assign(static_cast<std::size_t>(ds.n_features) * ds.n_alts, 0);

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const long long line = static_cast<long long>(r + 1);
    long long oid = static_cast<long long>(parse_num(row[c_obs], schema.obs_id, line));
    int i = obs_of[oid];
    int k = alt_of[row[c_alt]];
    if (ds.avail_flat[static_cast<std::size_t>(i) * ds.n_alts + k])
      throw validation_error("duplicate (obs_id, alt) pair: obs " + std::to_string(oid) +
                             ", alt '" + row[c_alt] + "'");
    ds.avail_flat[static_cast<std::size_t>(i) * ds.n_alts + k] = 1;
    ds.person_id[i] = static_cast<long long>(parse_num(row[c_person], schema.person_id, line));
    double ch = parse_num(row[c_chosen], schema.chosen, line);
    if (ch != 0.0 && ch != 1.0)
      throw validation_error("column '" + schema.chosen + "' must be 0 or 1, row " + std::to_string(line));
    if (ch == 1.0) {
      if (ds.chosen[i] >= 0)
        throw validation_error("obs " + std::to_string(oid) + " has two chosen=1 rows");
      ds.chosen[i] = k;
    }
    for (int p = 0; p < ds.n_features; ++p)
      ds.x(i, k, p) = parse_num(row[c_feat[p]], features[p], line);
  }

  for (int i = 0; i < ds.n_obs; ++i)
    if (ds.chosen[i] < 0)
      throw validation_error("obs " + std::to_string(ds.obs_id[i]) + " has no chosen=1 row");

  // Applicability: explicit schema entry wins, otherwise infer from the data.
  for (int p = 0; p < ds.n_features; ++p) {
    auto it = schema.applies.find(features[p]);
    if (it != schema.applies.end()) {
      for (const auto& an : it->second) {
        auto ai = alt_of.find(an);
        if (ai == alt_of.end())
          throw validation_error("applies for feature '" + features[p] + "' names unknown alternative '" + an + "'");
        ds.applies[static_cast<std::size_t>(p) * ds.n_alts + ai->second] = 1;
      }
    } else {
      bool any_nonzero = false;
      for (int k = 0; k < ds.n_alts; ++k) {
        for (int i = 0; i < ds.n_obs; ++i) {
          if (ds.avail(i, k) && ds.x(i, k, p) != 0.0) {
            ds.applies[static_cast<std::size_t>(p) * ds.n_alts + k] = 1;
            any_nonzero = true;
            break;
          }
        }
      }
      if (!any_nonzero)
        for (int k = 0; k < ds.n_alts; ++k)
          ds.applies[static_cast<std::size_t>(p) * ds.n_alts + k] = 1;
    }
    // Zero out non-applicable cells so the mask and storage agree.
    for (int k = 0; k < ds.n_alts; ++k)
      if (!ds.feature_applies(p, k))
        for (int i = 0; i < ds.n_obs; ++i) ds.x(i, k, p) = 0.0;
  }

  ds.validate();
  return ds;
}

inline ChoiceDataset load_long_file(const std::string& path, const LongSchema& schema = {}) {
  return load_long(read_csv_file(path), schema);
}

/// Flattening rule: a feature applying to every alternative with identical
/// values within each observation becomes one column; otherwise one column
/// per applicable alternative (bare name when only one alternative applies).
inline WideMatrix to_wide(const ChoiceDataset& ds) {
  WideMatrix w;
  w.n_alts = ds.n_alts;
  w.alt_names = ds.alt_names;
  w.y = ds.chosen;
  w.col_of.assign(ds.n_features, std::vector<int>(ds.n_alts, -1));

  struct ColPlan {
    int feature;
    int alt;  // -1 for individual-level
    std::string name;
  };
  std::vector<ColPlan> plan;
  for (int p = 0; p < ds.n_features; ++p) {
    std::vector<int> applicable;
    for (int k = 0; k < ds.n_alts; ++k)
      if (ds.feature_applies(p, k)) applicable.push_back(k);

    bool individual = static_cast<int>(applicable.size()) == ds.n_alts;
    if (individual) {
      for (int i = 0; i < ds.n_obs && individual; ++i) {
        std::optional<double> ref;
        for (int k = 0; k < ds.n_alts; ++k) {
          if (!ds.avail(i, k)) continue;
          if (!ref) {
            ref = ds.x(i, k, p);
          } else if (ds.x(i, k, p) != *ref) {
            individual = false;
            break;
          }
        }
      }
    }

    if (individual) {
      plan.push_back({p, -1, ds.feature_names[p]});
    } else if (applicable.size() == 1) {
      plan.push_back({p, applicable[0], ds.feature_names[p]});
    } else {
      for (int k : applicable)
        plan.push_back({p, k, ds.feature_names[p] + "_" + ds.alt_names[k]});
    }
  }

  w.Z.resize(ds.n_obs, static_cast<Eigen::Index>(plan.size()));
  for (std::size_t j = 0; j < plan.size(); ++j) {
    const auto& c = plan[j];
    w.col_names.push_back(c.name);
    w.col_feature.push_back(c.feature);
    w.col_alt.push_back(c.alt);
    if (c.alt < 0) {
      for (int k = 0; k < ds.n_alts; ++k) w.col_of[c.feature][k] = static_cast<int>(j);
      for (int i = 0; i < ds.n_obs; ++i) {
        double v = 0.0;
        for (int k = 0; k < ds.n_alts; ++k)
          if (ds.avail(i, k)) {
            v = ds.x(i, k, c.feature);
            break;
          }
        w.Z(i, static_cast<Eigen::Index>(j)) = v;
      }
    } else {
      w.col_of[c.feature][c.alt] = static_cast<int>(j);
      for (int i = 0; i < ds.n_obs; ++i) w.Z(i, static_cast<Eigen::Index>(j)) = ds.x(i, c.alt, c.feature);
    }
  }

  std::set<std::string> names(w.col_names.begin(), w.col_names.end());
  if (names.size() != w.col_names.size())
    throw validation_error("wide flattening produced duplicate column names");
  return w;
}

/// Reassembles one wide row into the K x P attribute slice it came from.
/// Inverse of the to_wide flattening; the logit predictors evaluate perturbed
/// wide rows through this mapping.
inline void wide_row_to_long(const WideMatrix& w, const Eigen::RowVectorXd& z, int n_features,
                             Eigen::Ref<Eigen::MatrixXd> x_out) {
  x_out.setZero();
  for (int p = 0; p < n_features; ++p)
    for (int k = 0; k < w.n_alts; ++k) {
      int j = w.col_of[p][k];
      if (j >= 0) x_out(k, p) = z(j);
    }
}

/// VIF_j = 1 / (1 - R^2_j) from the OLS regression of column j on all other
/// columns plus an intercept. Perfect collinearity is reported as +inf.
inline std::vector<double> vif(const WideMatrix& w) {
  const int n = w.n_rows();
  const int c = w.n_cols();
  if (c < 2) throw validation_error("vif needs at least 2 columns");
  for (int j = 0; j < c; ++j) {
    double mn = w.Z.col(j).minCoeff(), mx = w.Z.col(j).maxCoeff();
    if (mn == mx)
      throw validation_error("vif: column '" + w.col_names[j] + "' is constant");
  }

  std::vector<double> out(c);
  Eigen::MatrixXd design(n, c);  // intercept + the other c-1 columns
  for (int j = 0; j < c; ++j) {
    design.col(0).setOnes();
    int idx = 1;
    for (int o = 0; o < c; ++o)
      if (o != j) design.col(idx++) = w.Z.col(o);
    Eigen::VectorXd target = w.Z.col(j);
    Eigen::VectorXd coef = design.colPivHouseholderQr().solve(target);
    double ss_res = (target - design * coef).squaredNorm();
    double mean = target.mean();
    double ss_tot = (target.array() - mean).square().sum();
    double r2 = 1.0 - ss_res / ss_tot;
    out[j] = (r2 >= 1.0 - 1e-10) ? kInf : 1.0 / (1.0 - r2);
  }
  return out;
}

/// Seeded shuffle of 0..n-1 followed by round-robin slicing.
inline FoldAssignment kfold_split(int n, int k, std::uint64_t seed) {
  if (k < 2) throw validation_error("kfold_split needs k >= 2");
  if (k > n) throw validation_error("kfold_split: k exceeds number of observations");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  fa.assignment.assign(n, 0);
  for (int pos = 0; pos < n; ++pos) fa.assignment[order[pos]] = pos % k;
  return fa;
}

/// Person-level variant: all of an individual's observations land in one fold.
inline FoldAssignment kfold_split_persons(const std::vector<long long>& person_id, int k,
                                          std::uint64_t seed) {
  std::vector<long long> persons;
  std::map<long long, int> index_of;
  for (long long pid : person_id)
    if (!index_of.count(pid)) {
      index_of.emplace(pid, static_cast<int>(persons.size()));
      persons.push_back(pid);
    }
  FoldAssignment groups = kfold_split(static_cast<int>(persons.size()), k, seed);
  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  fa.assignment.reserve(person_id.size());
  for (long long pid : person_id) fa.assignment.push_back(groups.assignment[index_of[pid]]);
  return fa;
}

}  // namespace modechoice

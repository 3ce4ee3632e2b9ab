#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "modechoice/dataset.hpp"
#include "modechoice/halton.hpp"
#include "modechoice/optim.hpp"

namespace modechoice {

/// One utility term: a feature entering the listed alternatives with a single
/// shared coefficient. Coefficient ids are dense: term i owns id i, constant
/// j owns id n_terms + j.
struct UtilityTerm {
  int feature = -1;
  std::vector<int> alts;
  std::string label;  // filled from feature/alternative names when empty
};

struct UtilitySpec {
  std::vector<UtilityTerm> terms;
  std::vector<int> constants;  // alternatives receiving an ASC; >=1 alt must be left out

  int n_params() const { return static_cast<int>(terms.size() + constants.size()); }

  void bind(const ChoiceDataset& ds) {
    if (static_cast<int>(constants.size()) >= ds.n_alts)
      throw validation_error("utility spec: every alternative has a constant; one must be normalized to 0");
    std::set<int> const_set;
    for (int k : constants) {
      if (k < 0 || k >= ds.n_alts) throw validation_error("utility spec: constant alternative out of range");
      if (!const_set.insert(k).second) throw validation_error("utility spec: duplicate constant");
    }
    std::set<std::pair<int, int>> cells;
    for (auto& t : terms) {
      if (t.feature < 0 || t.feature >= ds.n_features)
        throw validation_error("utility spec: feature index out of range");
      if (t.alts.empty()) throw validation_error("utility spec: term with empty alternative set");
      for (int k : t.alts) {
        if (k < 0 || k >= ds.n_alts) throw validation_error("utility spec: term alternative out of range");
        if (!cells.insert({t.feature, k}).second)
          throw validation_error("utility spec: feature '" + ds.feature_names[t.feature] +
                                 "' enters alternative '" + ds.alt_names[k] + "' twice");
      }
      if (t.label.empty()) {
        bool all = static_cast<int>(t.alts.size()) == ds.n_alts;
        if (all || t.alts.size() > 1) {
          t.label = ds.feature_names[t.feature];
        } else {
          t.label = ds.feature_names[t.feature] + "_" + ds.alt_names[t.alts[0]];
        }
      }
    }
    std::set<std::string> labels;
    for (auto& t : terms)
      if (!labels.insert(t.label).second)
        throw validation_error("utility spec: duplicate term label '" + t.label + "'");
  }

  std::vector<std::string> coef_labels(const std::vector<std::string>& alt_names) const {
    std::vector<std::string> out;
    for (const auto& t : terms) out.push_back(t.label);
    for (int k : constants) out.push_back("asc_" + alt_names[k]);
    return out;
  }
};

/// Normally distributed random coefficients for the mixed logit. The sd
/// parameters sit after the base coefficients in the parameter vector and are
/// reported as absolute values (the simulated likelihood is even in them).
struct RandomCoefSpec {
  std::vector<int> coef_ids;
  int n_draws = 1000;
  int skip = 10;  // burn-in dropped from each Halton dimension
  static constexpr const char* draw_scheme = "halton";
};

struct FittedLogit {
  UtilitySpec spec;
  std::optional<RandomCoefSpec> random;
  Eigen::VectorXd beta;        // n_params (+ one sd per random coefficient)
  Eigen::VectorXd std_errors;  // NaN where the Hessian is not informative
  double ll = kNaN;            // log likelihood at convergence
  double ll_constants_only = kNaN;
  int n_params = 0;
  int n_obs = 0;
  int n_individuals = 0;
  bool converged = false;
  std::string message;
};

namespace detail {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline RowMajorMap obs_matrix(const ChoiceDataset& ds, int i) {
  return RowMajorMap(&ds.x_flat[static_cast<std::size_t>(i) * ds.n_alts * ds.n_features],
                     ds.n_alts, ds.n_features);
}

template <class XLike>
inline void utilities(const Eigen::VectorXd& beta, const UtilitySpec& spec, const XLike& x,
                      Eigen::VectorXd& v) {
  v.setZero();
  for (std::size_t t = 0; t < spec.terms.size(); ++t) {
    const auto& term = spec.terms[t];
    double coef = beta(static_cast<Eigen::Index>(t));
    for (int k : term.alts) v(k) += coef * x(k, term.feature);
  }
  for (std::size_t c = 0; c < spec.constants.size(); ++c)
    v(spec.constants[c]) += beta(static_cast<Eigen::Index>(spec.terms.size() + c));
}

/// Softmax over available alternatives with max-subtraction; returns the
/// log-sum-exp so callers can form log probabilities directly.
inline double softmax_available(const Eigen::VectorXd& v, const std::uint8_t* avail,
                                Eigen::VectorXd& p) {
  const Eigen::Index k_count = v.size();
  double vmax = -kInf;
  for (Eigen::Index k = 0; k < k_count; ++k)
    if (!avail || avail[k]) vmax = std::max(vmax, v(k));
  if (vmax == -kInf) throw validation_error("all alternatives unavailable for an observation");
  double denom = 0.0;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    if (!avail || avail[k]) {
      p(k) = std::exp(v(k) - vmax);
      denom += p(k);
    } else {
      p(k) = 0.0;
    }
  }
  p /= denom;
  return std::log(denom) + vmax;  // log-sum-exp of available utilities
}

}  // namespace detail

/// Choice probabilities for one observation's K x P attribute slice.
inline Eigen::VectorXd mnl_probabilities(const Eigen::VectorXd& beta, const UtilitySpec& spec,
                                         const Eigen::Ref<const Eigen::MatrixXd>& x_obs,
                                         const std::uint8_t* avail = nullptr) {
  if (beta.size() != spec.n_params())
    throw validation_error("beta length does not match the utility spec");
  Eigen::VectorXd v(x_obs.rows()), p(x_obs.rows());
  detail::utilities(beta, spec, x_obs, v);
  detail::softmax_available(v, avail, p);
  return p;
}

struct LoglikResult {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// Log likelihood and analytic score of the MNL over a dataset. The gradient
/// aggregates (1[chosen=k] - p_ik) * x_ik through the coefficient-sharing map.
inline LoglikResult mnl_loglik(const Eigen::VectorXd& beta, const ChoiceDataset& ds,
                               const UtilitySpec& spec) {
  const int n_par = spec.n_params();
  if (beta.size() != n_par) throw validation_error("beta length does not match the utility spec");
  LoglikResult res;
  res.grad = Eigen::VectorXd::Zero(n_par);
  Eigen::VectorXd v(ds.n_alts), p(ds.n_alts);
  for (int i = 0; i < ds.n_obs; ++i) {
    auto x = detail::obs_matrix(ds, i);
    const std::uint8_t* avail = &ds.avail_flat[static_cast<std::size_t>(i) * ds.n_alts];
    detail::utilities(beta, spec, x, v);
    double lse = detail::softmax_available(v, avail, p);
    res.value += v(ds.chosen[i]) - lse;
    for (std::size_t t = 0; t < spec.terms.size(); ++t) {
      const auto& term = spec.terms[t];
      double acc = 0.0;
      for (int k : term.alts)
        if (avail[k]) acc += (((k == ds.chosen[i]) ? 1.0 : 0.0) - p(k)) * x(k, term.feature);
      res.grad(static_cast<Eigen::Index>(t)) += acc;
    }
    for (std::size_t c = 0; c < spec.constants.size(); ++c) {
      int k = spec.constants[c];
      if (avail[k])
        res.grad(static_cast<Eigen::Index>(spec.terms.size() + c)) +=
            ((k == ds.chosen[i]) ? 1.0 : 0.0) - p(k);
    }
  }
  return res;
}

namespace detail {

inline double constants_only_loglik(const ChoiceDataset& ds, const UtilitySpec& spec,
                                    const OptOptions& opts) {
  UtilitySpec null_spec;
  null_spec.constants = spec.constants;
  if (null_spec.constants.empty()) {
    double ll = 0.0;
    for (int i = 0; i < ds.n_obs; ++i) {
      int avail_count = 0;
      for (int k = 0; k < ds.n_alts; ++k)
        if (ds.avail(i, k)) ++avail_count;
      ll -= std::log(static_cast<double>(avail_count));
    }
    return ll;
  }
  OptProblem prob;
  prob.dim = null_spec.n_params();
  prob.objective = [&](const Eigen::VectorXd& b) { return mnl_loglik(b, ds, null_spec).value; };
  prob.gradient = [&](const Eigen::VectorXd& b) { return mnl_loglik(b, ds, null_spec).grad; };
  OptResult r = maximize(prob, Eigen::VectorXd::Zero(prob.dim), opts);
  return r.f_star;
}

/// Coefficients larger than this in magnitude indicate separation-style
/// divergence: exp(V) is pinned and the optimizer is chasing a supremum.
inline constexpr double kDivergenceBound = 25.0;

inline void fill_std_errors(FittedLogit& fit,
                            const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad) {
  Eigen::MatrixXd hess = fd_hessian(grad, fit.beta);
  Eigen::MatrixXd neg = -hess;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(neg);
  fit.std_errors = Eigen::VectorXd::Constant(fit.beta.size(), kNaN);
  if (!lu.isInvertible()) return;
  Eigen::MatrixXd cov = lu.inverse();
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j)
    if (cov(j, j) > 0) fit.std_errors(j) = std::sqrt(cov(j, j));
}

}  // namespace detail

/// Maximum likelihood MNL fit from beta = 0, with standard errors from the
/// inverse finite-difference Hessian and the constants-only log likelihood.
inline FittedLogit fit_mnl(const ChoiceDataset& ds, UtilitySpec spec, OptOptions opts = {}) {
  spec.bind(ds);
  OptProblem prob;
  prob.dim = spec.n_params();
  prob.objective = [&](const Eigen::VectorXd& b) { return mnl_loglik(b, ds, spec).value; };
  auto grad = [&](const Eigen::VectorXd& b) { return mnl_loglik(b, ds, spec).grad; };
  prob.gradient = grad;
  OptResult r = maximize(prob, Eigen::VectorXd::Zero(prob.dim), opts);

  FittedLogit fit;
  fit.spec = spec;
  fit.beta = r.x_star;
  fit.ll = r.f_star;
  fit.n_params = prob.dim;
  fit.n_obs = ds.n_obs;
  fit.n_individuals = ds.n_individuals();
  fit.converged = r.converged;
  fit.message = r.message;
  if (fit.converged && fit.beta.cwiseAbs().maxCoeff() >= detail::kDivergenceBound) {
    fit.converged = false;
    fit.message = "coefficient diverged (likely separation)";
  }
  detail::fill_std_errors(fit, grad);
  fit.ll_constants_only = detail::constants_only_loglik(ds, spec, opts);
  return fit;
}

/// Simulated panel log likelihood: per individual, average over draws of the
/// product over choice occasions of MNL probabilities at beta(draw), with the
/// analytic gradient propagated through the smooth simulator (fixed draws).
inline LoglikResult mixl_sim_loglik(const Eigen::VectorXd& params, const ChoiceDataset& ds,
                                    const UtilitySpec& spec, const RandomCoefSpec& rcs,
                                    const HaltonDraws& draws) {
  const int n_base = spec.n_params();
  const int n_rand = static_cast<int>(rcs.coef_ids.size());
  if (params.size() != n_base + n_rand)
    throw validation_error("mixed logit parameter vector has wrong length");
  const auto groups = ds.person_groups();
  if (static_cast<int>(groups.size()) != draws.n_individuals)
    throw validation_error("draws are sized for a different number of individuals");
  if (draws.dims != n_rand)
    throw validation_error("draws dimensionality does not match the random coefficients");

  LoglikResult res;
  res.grad = Eigen::VectorXd::Zero(params.size());
  const int n_draws = draws.n_draws;
  Eigen::VectorXd beta_d = params.head(n_base);
  Eigen::VectorXd v(ds.n_alts), p(ds.n_alts);
  Eigen::VectorXd draw_ll(n_draws);
  Eigen::MatrixXd draw_score(params.size(), n_draws);
  Eigen::VectorXd base_score(n_base);

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    for (int d = 0; d < n_draws; ++d) {
      for (int r = 0; r < n_rand; ++r) {
        int c = rcs.coef_ids[r];
        beta_d(c) = params(c) + params(n_base + r) * draws.z(static_cast<int>(gi), d, r);
      }
      double ll_d = 0.0;
      base_score.setZero();
      for (int i : groups[gi]) {
        auto x = detail::obs_matrix(ds, i);
        const std::uint8_t* avail = &ds.avail_flat[static_cast<std::size_t>(i) * ds.n_alts];
        detail::utilities(beta_d, spec, x, v);
        double lse = detail::softmax_available(v, avail, p);
        ll_d += v(ds.chosen[i]) - lse;
        for (std::size_t t = 0; t < spec.terms.size(); ++t) {
          const auto& term = spec.terms[t];
          double acc = 0.0;
          for (int k : term.alts)
            if (avail[k]) acc += (((k == ds.chosen[i]) ? 1.0 : 0.0) - p(k)) * x(k, term.feature);
          base_score(static_cast<Eigen::Index>(t)) += acc;
        }
        for (std::size_t c = 0; c < spec.constants.size(); ++c) {
          int k = spec.constants[c];
          if (avail[k])
            base_score(static_cast<Eigen::Index>(spec.terms.size() + c)) +=
                ((k == ds.chosen[i]) ? 1.0 : 0.0) - p(k);
        }
      }
      draw_ll(d) = ll_d;
      draw_score.col(d).head(n_base) = base_score;
      for (int r = 0; r < n_rand; ++r)
        draw_score(n_base + r, d) =
            base_score(rcs.coef_ids[r]) * draws.z(static_cast<int>(gi), d, r);
      // reset the random entries for the next draw
      for (int r = 0; r < n_rand; ++r) beta_d(rcs.coef_ids[r]) = params(rcs.coef_ids[r]);
    }
    double m = draw_ll.maxCoeff();
    double sum = (draw_ll.array() - m).exp().sum();
    res.value += m + std::log(sum) - std::log(static_cast<double>(n_draws));
    Eigen::VectorXd w = (draw_ll.array() - m).exp() / sum;
    res.grad += draw_score * w;
  }
  return res;
}

struct MixlOptions {
  OptOptions opt;
  double sd_start = 0.1;
};

/// Simulated maximum likelihood for the panel mixed logit, warm-started from
/// the MNL solution. Draws are built once and held fixed across iterations.
inline FittedLogit fit_mixl(const ChoiceDataset& ds, UtilitySpec spec, RandomCoefSpec rcs,
                            MixlOptions mopts = {}) {
  spec.bind(ds);
  const int n_base = spec.n_params();
  const int n_rand = static_cast<int>(rcs.coef_ids.size());
  if (n_rand == 0) throw validation_error("mixed logit needs at least one random coefficient");
  for (int c : rcs.coef_ids)
    if (c < 0 || c >= n_base) throw validation_error("random coefficient id out of range");
  if (rcs.n_draws < 1) throw validation_error("mixed logit needs n_draws >= 1");

  FittedLogit mnl = fit_mnl(ds, spec, mopts.opt);
  const auto groups = ds.person_groups();
  HaltonDraws draws = normal_draws(static_cast<int>(groups.size()), rcs.n_draws, n_rand, rcs.skip);

  Eigen::VectorXd x0(n_base + n_rand);
  x0.head(n_base) = mnl.beta;
  x0.tail(n_rand).setConstant(mopts.sd_start);

  OptProblem prob;
  prob.dim = n_base + n_rand;
  prob.objective = [&](const Eigen::VectorXd& b) {
    return mixl_sim_loglik(b, ds, spec, rcs, draws).value;
  };
  auto grad = [&](const Eigen::VectorXd& b) { return mixl_sim_loglik(b, ds, spec, rcs, draws).grad; };
  prob.gradient = grad;
  OptResult r = maximize(prob, x0, mopts.opt);

  FittedLogit fit;
  fit.spec = spec;
  fit.random = rcs;
  fit.beta = r.x_star;
  for (int rr = 0; rr < n_rand; ++rr) fit.beta(n_base + rr) = std::abs(fit.beta(n_base + rr));
  fit.ll = r.f_star;
  fit.n_params = prob.dim;
  fit.n_obs = ds.n_obs;
  fit.n_individuals = static_cast<int>(groups.size());
  fit.converged = r.converged;
  fit.message = r.message;
  if (fit.converged && fit.beta.head(n_base).cwiseAbs().maxCoeff() >= detail::kDivergenceBound) {
    fit.converged = false;
    fit.message = "coefficient diverged (likely separation)";
  }
  detail::fill_std_errors(fit, grad);
  fit.ll_constants_only = mnl.ll_constants_only;
  return fit;
}

/// Out-of-sample probabilities over a long-form dataset, honoring the
/// availability mask. The mixed logit returns unconditional probabilities,
/// averaging the MNL over one shared block of draws.
inline Eigen::MatrixXd logit_predict_long(const FittedLogit& fit, const ChoiceDataset& ds) {
  const int n_base = fit.spec.n_params();
  Eigen::MatrixXd out(ds.n_obs, ds.n_alts);
  Eigen::VectorXd v(ds.n_alts), p(ds.n_alts);
  if (!fit.random) {
    for (int i = 0; i < ds.n_obs; ++i) {
      auto x = detail::obs_matrix(ds, i);
      detail::utilities(fit.beta, fit.spec, x, v);
      detail::softmax_available(v, &ds.avail_flat[static_cast<std::size_t>(i) * ds.n_alts], p);
      out.row(i) = p.transpose();
    }
    return out;
  }
  const auto& rcs = *fit.random;
  const int n_rand = static_cast<int>(rcs.coef_ids.size());
  HaltonDraws draws = normal_draws(1, rcs.n_draws, n_rand, rcs.skip);
  Eigen::VectorXd beta_d = fit.beta.head(n_base);
  out.setZero();
  for (int d = 0; d < rcs.n_draws; ++d) {
    for (int r = 0; r < n_rand; ++r)
      beta_d(rcs.coef_ids[r]) = fit.beta(rcs.coef_ids[r]) + fit.beta(n_base + r) * draws.z(0, d, r);
    for (int i = 0; i < ds.n_obs; ++i) {
      auto x = detail::obs_matrix(ds, i);
      detail::utilities(beta_d, fit.spec, x, v);
      detail::softmax_available(v, &ds.avail_flat[static_cast<std::size_t>(i) * ds.n_alts], p);
      out.row(i) += p.transpose();
    }
  }
  out /= static_cast<double>(rcs.n_draws);
  return out;
}

struct FitStats {
  double pseudo_r2 = kNaN;
  double adj_pseudo_r2 = kNaN;
  double aic = kNaN;
  double bic = kNaN;
  int n_obs_used = 0;  // BIC uses choice observations, not individuals
};

inline FitStats fit_stats(const FittedLogit& f) {
  if (f.ll_constants_only == 0.0) throw validation_error("fit_stats: constants-only log likelihood is zero");
  FitStats s;
  s.pseudo_r2 = 1.0 - f.ll / f.ll_constants_only;
  s.adj_pseudo_r2 = 1.0 - (f.ll - f.n_params) / f.ll_constants_only;
  s.aic = -2.0 * f.ll + 2.0 * f.n_params;
  s.bic = -2.0 * f.ll + f.n_params * std::log(static_cast<double>(f.n_obs));
  s.n_obs_used = f.n_obs;
  return s;
}

struct XStandardized {
  FittedLogit refit;                  // on the standardized inputs
  Eigen::VectorXd beta_std;           // same layout as FittedLogit::beta
  std::vector<uint8_t> standardizable;  // per coefficient; constants excluded
  std::vector<double> cell_mean, cell_sd;  // per term, over applicable cells
};

/// Refit with every non-constant feature replaced by (x - mean)/sd over the
/// (observation, alternative) cells its term covers; constants untouched.
inline XStandardized x_standardized(const FittedLogit& f, const ChoiceDataset& ds,
                                    OptOptions opts = {}) {
  ChoiceDataset std_ds = ds;
  const auto& spec = f.spec;
  XStandardized out;
  out.standardizable.assign(f.beta.size(), 1);
  out.cell_mean.assign(spec.terms.size(), 0.0);
  out.cell_sd.assign(spec.terms.size(), 0.0);

  for (std::size_t t = 0; t < spec.terms.size(); ++t) {
    const auto& term = spec.terms[t];
    double sum = 0.0, sum2 = 0.0;
    long long n = 0;
    for (int k : term.alts) {
      if (!ds.feature_applies(term.feature, k)) continue;
      for (int i = 0; i < ds.n_obs; ++i) {
        if (!ds.avail(i, k)) continue;
        double v = ds.x(i, k, term.feature);
        sum += v;
        sum2 += v * v;
        ++n;
      }
    }
    if (n < 2) {
      out.standardizable[t] = 0;
      continue;
    }
    double mean = sum / n;
    double var = (sum2 - n * mean * mean) / (n - 1);
    if (var <= 0.0) {
      out.standardizable[t] = 0;
      continue;
    }
    double sd = std::sqrt(var);
    out.cell_mean[t] = mean;
    out.cell_sd[t] = sd;
    for (int k : term.alts) {
      if (!ds.feature_applies(term.feature, k)) continue;
      for (int i = 0; i < ds.n_obs; ++i)
        if (ds.avail(i, k))
          std_ds.x(i, k, term.feature) = (ds.x(i, k, term.feature) - mean) / sd;
    }
  }

  out.refit = f.random ? fit_mixl(std_ds, spec, *f.random, MixlOptions{opts, 0.1})
                       : fit_mnl(std_ds, spec, opts);
  out.beta_std = out.refit.beta;
  for (Eigen::Index j = 0; j < out.beta_std.size(); ++j)
    if (j < static_cast<Eigen::Index>(spec.terms.size()) && !out.standardizable[j])
      out.beta_std(j) = kNaN;
  return out;
}

}  // namespace modechoice

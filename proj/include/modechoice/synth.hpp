#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "modechoice/dataset.hpp"
#include "modechoice/halton.hpp"
#include "modechoice/logit.hpp"

namespace modechoice {

struct SynthDist {
  enum class Kind { uniform, normal, bernoulli } kind = Kind::uniform;
  double a = 0.0, b = 1.0;  // uniform bounds / normal mean, sd / bernoulli rate in a
};

struct SynthFeature {
  std::string name;
  bool individual = false;  // drawn once per person instead of per (obs, alt)
  SynthDist dist;
  std::vector<std::string> applies;  // alternative names; empty: all
};

/// One generator utility term. `sd` > 0 draws a per-person coefficient from
/// Normal(coef, sd). A finite clamp range makes the response piecewise flat:
/// the term contributes coef * clamp(x, lo, hi).
struct SynthTerm {
  std::string feature;
  std::vector<std::string> alts;  // empty: all applicable
  double coef = 0.0;
  double sd = 0.0;
  double clamp_lo = -kInf;
  double clamp_hi = kInf;
};

struct SynthInteraction {
  std::string f1, f2;
  std::vector<std::string> alts;
  double coef = 0.0;
};

struct SynthConfig {
  std::vector<std::string> alts;
  int n_persons = 0;
  int n_occasions = 1;
  std::vector<SynthFeature> features;
  std::vector<SynthTerm> terms;
  std::vector<SynthInteraction> interactions;
  std::map<std::string, double> constants;  // alternative name -> ASC value
  std::uint64_t seed = 0;
};

namespace detail {

inline double draw_value(const SynthDist& d, Rng& rng) {
  switch (d.kind) {
    case SynthDist::Kind::uniform: return rng.uniform(d.a, d.b);
    case SynthDist::Kind::normal: return d.a + d.b * inv_normal_cdf(std::max(rng.next_double(), 1e-16));
    case SynthDist::Kind::bernoulli: return rng.next_double() < d.a ? 1.0 : 0.0;
  }
  return 0.0;
}

inline double gumbel(Rng& rng) {
  double u = std::max(rng.next_double(), 1e-300);
  return -std::log(-std::log(u));
}

}  // namespace detail

/// Simulates utility-maximizing choices with i.i.d. Gumbel errors under the
/// configured utility terms. The returned dataset is ready for estimation;
/// the config itself is the ground-truth sidecar.
inline ChoiceDataset synth_generate(const SynthConfig& cfg) {
  if (cfg.alts.size() < 2) throw validation_error("synth: need at least 2 alternatives");
  if (cfg.n_persons < 1 || cfg.n_occasions < 1)
    throw validation_error("synth: need positive persons and occasions");
  if (cfg.features.empty()) throw validation_error("synth: need at least one feature");

  const int n_alts = static_cast<int>(cfg.alts.size());
  const int n_feat = static_cast<int>(cfg.features.size());
  const int n_obs = cfg.n_persons * cfg.n_occasions;

  ChoiceDataset ds;
  ds.n_obs = n_obs;
  ds.n_alts = n_alts;
  ds.n_features = n_feat;
  ds.alt_names = cfg.alts;
  for (const auto& f : cfg.features) ds.feature_names.push_back(f.name);
  ds.x_flat.assign(static_cast<std::size_t>(n_obs) * n_alts * n_feat, 0.0);
  ds.avail_flat.assign(static_cast<std::size_t>(n_obs) * n_alts, 1);
  ds.applies.assign(static_cast<std::size_t>(n_feat) * n_alts, 0);
  ds.chosen.assign(n_obs, 0);

  auto alt_index = [&](const std::string& name) {
    for (int k = 0; k < n_alts; ++k)
      if (cfg.alts[k] == name) return k;
    throw validation_error("synth: unknown alternative '" + name + "'");
  };
  auto feature_index = [&](const std::string& name) {
    for (int p = 0; p < n_feat; ++p)
      if (cfg.features[p].name == name) return p;
    throw validation_error("synth: unknown feature '" + name + "'");
  };

  std::vector<std::vector<uint8_t>> applies(n_feat, std::vector<uint8_t>(n_alts, 0));
  for (int p = 0; p < n_feat; ++p) {
    if (cfg.features[p].applies.empty()) {
      std::fill(applies[p].begin(), applies[p].end(), 1);
    } else {
      for (const auto& an : cfg.features[p].applies) applies[p][alt_index(an)] = 1;
    }
    for (int k = 0; k < n_alts; ++k)
      ds.applies[static_cast<std::size_t>(p) * n_alts + k] = applies[p][k];
  }

  struct BoundTerm {
    int feature;
    std::vector<int> alts;
    double coef, sd, lo, hi;
  };
  std::vector<BoundTerm> terms;
  for (const auto& t : cfg.terms) {
    BoundTerm bt;
    bt.feature = feature_index(t.feature);
    if (t.alts.empty()) {
      for (int k = 0; k < n_alts; ++k)
        if (applies[bt.feature][k]) bt.alts.push_back(k);
    } else {
      for (const auto& an : t.alts) bt.alts.push_back(alt_index(an));
    }
    bt.coef = t.coef;
    bt.sd = t.sd;
    bt.lo = t.clamp_lo;
    bt.hi = t.clamp_hi;
    terms.push_back(std::move(bt));
  }

  struct BoundInter {
    int f1, f2;
    std::vector<int> alts;
    double coef;
  };
  std::vector<BoundInter> inters;
  for (const auto& it : cfg.interactions) {
    BoundInter bi;
    bi.f1 = feature_index(it.f1);
    bi.f2 = feature_index(it.f2);
    if (it.alts.empty()) {
      for (int k = 0; k < n_alts; ++k) bi.alts.push_back(k);
    } else {
      for (const auto& an : it.alts) bi.alts.push_back(alt_index(an));
    }
    bi.coef = it.coef;
    inters.push_back(std::move(bi));
  }

  std::vector<double> asc(n_alts, 0.0);
  for (const auto& [an, v] : cfg.constants) asc[alt_index(an)] = v;

  Rng rng(cfg.seed);
  std::vector<double> person_coef(terms.size());
  std::vector<double> indiv_value(n_feat);
  std::vector<double> u(n_alts);

  int obs = 0;
  for (int person = 0; person < cfg.n_persons; ++person) {
    for (std::size_t t = 0; t < terms.size(); ++t)
      person_coef[t] = terms[t].sd > 0
                           ? terms[t].coef + terms[t].sd *
                                                 inv_normal_cdf(std::max(rng.next_double(), 1e-16))
                           : terms[t].coef;
    for (int p = 0; p < n_feat; ++p)
      if (cfg.features[p].individual) indiv_value[p] = detail::draw_value(cfg.features[p].dist, rng);

    for (int occ = 0; occ < cfg.n_occasions; ++occ, ++obs) {
      ds.obs_id.push_back(obs + 1);
      ds.person_id.push_back(person + 1);
      for (int p = 0; p < n_feat; ++p) {
        for (int k = 0; k < n_alts; ++k) {
          if (!applies[p][k]) continue;
          ds.x(obs, k, p) = cfg.features[p].individual ? indiv_value[p]
                                                       : detail::draw_value(cfg.features[p].dist, rng);
        }
      }
      std::fill(u.begin(), u.end(), 0.0);
      for (std::size_t t = 0; t < terms.size(); ++t)
        for (int k : terms[t].alts) {
          double x = ds.x(obs, k, terms[t].feature);
          u[k] += person_coef[t] * std::clamp(x, terms[t].lo, terms[t].hi);
        }
      for (const auto& bi : inters)
        for (int k : bi.alts) u[k] += bi.coef * ds.x(obs, k, bi.f1) * ds.x(obs, k, bi.f2);
      for (int k = 0; k < n_alts; ++k) u[k] += asc[k] + detail::gumbel(rng);

      int best = 0;
      for (int k = 1; k < n_alts; ++k)
        if (u[k] > u[best]) best = k;
      ds.chosen[obs] = best;
    }
  }
  ds.validate();
  return ds;
}

/// The estimation spec that matches the generator's linear terms and
/// constants (clamped terms are intentionally left linear so misspecification
/// studies can compare against flexible models).
inline UtilitySpec synth_matching_spec(const SynthConfig& cfg, const ChoiceDataset& ds) {
  UtilitySpec spec;
  for (const auto& t : cfg.terms) {
    UtilityTerm ut;
    ut.feature = ds.feature_index(t.feature);
    if (t.alts.empty()) {
      for (int k = 0; k < ds.n_alts; ++k)
        if (ds.feature_applies(ut.feature, k)) ut.alts.push_back(k);
    } else {
      for (const auto& an : t.alts) ut.alts.push_back(ds.alt_index(an));
    }
    spec.terms.push_back(std::move(ut));
  }
  for (const auto& [an, v] : cfg.constants) spec.constants.push_back(ds.alt_index(an));
  std::sort(spec.constants.begin(), spec.constants.end());
  return spec;
}

}  // namespace modechoice

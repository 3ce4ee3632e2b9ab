#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "modechoice/interpret.hpp"
#include "modechoice/parallel.hpp"

namespace modechoice {

enum class ModelKind { mnl, mixl, nb, cart, boost, bag, rf, nn };

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::mnl: return "mnl";
    case ModelKind::mixl: return "mixl";
    case ModelKind::nb: return "nb";
    case ModelKind::cart: return "cart";
    case ModelKind::boost: return "boost";
    case ModelKind::bag: return "bag";
    case ModelKind::rf: return "rf";
    case ModelKind::nn: return "nn";
  }
  return "?";
}

/// One trainable entry of the model zoo. Hyperparameter defaults are the
/// reference configuration: CART pruned to 6 leaves, BOOST 400/0.14/10/10,
/// BAG 400 trees, RF 500 trees with mtry 12, NN 18 hidden units with decay
/// 0.4, mixed logit with 1000 Halton draws.
struct ModelConfig {
  ModelKind kind = ModelKind::mnl;
  std::string name;
  UtilitySpec utility;    // logit kinds
  RandomCoefSpec random;  // mixl
  CartOptions cart;
  EnsembleOptions ensemble;
  BoostOptions boost;
  NnOptions nn;
};

/// Trains on the long form (logit) or the wide projection (classifiers) and
/// wraps the result behind the shared Predictor contract. `seed` overrides
/// the stochastic models' seed so harnesses can derive per-job streams.
inline std::unique_ptr<Predictor> train_model(const ModelConfig& cfg, const ChoiceDataset& ds,
                                              const WideMatrix& wide, std::uint64_t seed) {
  const int k_classes = wide.n_alts;
  switch (cfg.kind) {
    case ModelKind::mnl:
      return std::make_unique<LogitPredictor>(fit_mnl(ds, cfg.utility), wide, cfg.name);
    case ModelKind::mixl:
      return std::make_unique<LogitPredictor>(fit_mixl(ds, cfg.utility, cfg.random), wide, cfg.name);
    case ModelKind::nb:
      return std::make_unique<ModelPredictor<NaiveBayesModel>>(fit_nb(wide.Z, wide.y, k_classes),
                                                               wide, cfg.name);
    case ModelKind::cart:
      return std::make_unique<ModelPredictor<Tree>>(fit_cart(wide.Z, wide.y, k_classes, cfg.cart),
                                                    wide, cfg.name);
    case ModelKind::boost:
      return std::make_unique<ModelPredictor<BoostModel>>(
          fit_boost(wide.Z, wide.y, k_classes, cfg.boost), wide, cfg.name);
    case ModelKind::bag: {
      EnsembleOptions o = cfg.ensemble;
      o.seed = seed;
      return std::make_unique<ModelPredictor<Ensemble>>(fit_bagging(wide.Z, wide.y, k_classes, o),
                                                        wide, cfg.name);
    }
    case ModelKind::rf: {
      EnsembleOptions o = cfg.ensemble;
      o.seed = seed;
      return std::make_unique<ModelPredictor<Ensemble>>(fit_rf(wide.Z, wide.y, k_classes, o),
                                                        wide, cfg.name);
    }
    case ModelKind::nn: {
      NnOptions o = cfg.nn;
      o.seed = seed;
      return std::make_unique<ModelPredictor<NeuralNet>>(fit_nn(wide.Z, wide.y, k_classes, o),
                                                         wide, cfg.name);
    }
  }
  throw validation_error("unknown model kind");
}

struct Accuracy {
  double overall = kNaN;
  Eigen::VectorXd per_class;  // recall by true class; NaN where the class is empty
};

inline Accuracy accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                         int n_classes) {
  if (pred.size() != truth.size() || pred.empty())
    throw validation_error("accuracy: label vectors must be equal-length and non-empty");
  Accuracy a;
  a.per_class = Eigen::VectorXd::Constant(n_classes, kNaN);
  Eigen::VectorXd hit = Eigen::VectorXd::Zero(n_classes), tot = Eigen::VectorXd::Zero(n_classes);
  int correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    tot(truth[i]) += 1.0;
    if (pred[i] == truth[i]) {
      hit(truth[i]) += 1.0;
      ++correct;
    }
  }
  a.overall = static_cast<double>(correct) / pred.size();
  for (int k = 0; k < n_classes; ++k)
    if (tot(k) > 0) a.per_class(k) = hit(k) / tot(k);
  return a;
}

/// Sum of absolute share differences (range [0, 2]); both inputs must be
/// probability simplexes.
inline double l1_share_error(const Eigen::VectorXd& pred_shares,
                             const Eigen::VectorXd& true_shares) {
  auto check = [](const Eigen::VectorXd& s, const char* which) {
    if (s.minCoeff() < -1e-12 || std::abs(s.sum() - 1.0) > 1e-6)
      throw validation_error(std::string("l1_share_error: ") + which + " shares are not a simplex");
  };
  check(pred_shares, "predicted");
  check(true_shares, "true");
  if (pred_shares.size() != true_shares.size())
    throw validation_error("l1_share_error: length mismatch");
  return (pred_shares - true_shares).cwiseAbs().sum();
}

struct FoldScore {
  bool failed = false;
  std::string error;
  double acc_overall = kNaN;
  Eigen::VectorXd acc_per_class;
  double l1 = kNaN;
};

struct ModelCvResult {
  std::string name;
  std::vector<FoldScore> folds;
  double mean_acc = kNaN, sd_acc = kNaN;
  Eigen::VectorXd mean_class, sd_class;
  double mean_l1 = kNaN, sd_l1 = kNaN;
  int n_failed = 0;
};

struct CvReport {
  int k = 0;
  std::uint64_t seed = 0;
  bool person_level = false;
  std::vector<std::string> alt_names;
  std::vector<ModelCvResult> models;
};

namespace detail {

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  std::vector<double> v;
  for (double x : xs)
    if (std::isfinite(x)) v.push_back(x);
  if (v.empty()) return {kNaN, kNaN};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  if (v.size() < 2) return {mean, kNaN};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (v.size() - 1))};
}

}  // namespace detail

/// Paired k-fold cross-validation: one shared fold assignment for every
/// model, metrics on held-out folds only. A model failing on a fold marks
/// that cell failed and the run continues.
inline CvReport cross_validate(const std::vector<ModelConfig>& models, const ChoiceDataset& ds,
                               int k = 10, std::uint64_t seed = 0, int jobs = 1,
                               bool person_level = false) {
  if (k < 2) throw validation_error("cross_validate needs k >= 2");
  FoldAssignment folds =
      person_level ? kfold_split_persons(ds.person_id, k, seed) : kfold_split(ds.n_obs, k, seed);
  const WideMatrix wide = to_wide(ds);
  const int n_classes = wide.n_alts;

  CvReport report;
  report.k = k;
  report.seed = seed;
  report.person_level = person_level;
  report.alt_names = ds.alt_names;
  report.models.resize(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    report.models[m].name = models[m].name;
    report.models[m].folds.resize(k);
  }

  const int n_jobs_total = static_cast<int>(models.size()) * k;
  parallel_for(n_jobs_total, jobs, [&](int job) {
    const int m = job / k;
    const int fold = job % k;
    FoldScore& cell = report.models[m].folds[fold];
    try {
      std::vector<int> train_idx = folds.complement_indices(fold);
      std::vector<int> test_idx = folds.fold_indices(fold);
      const ModelConfig& cfg = models[m];
      std::uint64_t job_seed = mix_seed(seed, static_cast<std::uint64_t>(m),
                                        static_cast<std::uint64_t>(fold));

      Eigen::MatrixXd probs;
      std::vector<int> truth;
      if (cfg.kind == ModelKind::mnl || cfg.kind == ModelKind::mixl) {
        ChoiceDataset train_ds = ds.subset(train_idx);
        ChoiceDataset test_ds = ds.subset(test_idx);
        FittedLogit fit = cfg.kind == ModelKind::mnl ? fit_mnl(train_ds, cfg.utility)
                                                     : fit_mixl(train_ds, cfg.utility, cfg.random);
        probs = logit_predict_long(fit, test_ds);
        truth = test_ds.chosen;
      } else {
        WideMatrix train_w = wide.rows(train_idx);
        WideMatrix test_w = wide.rows(test_idx);
        ChoiceDataset unused;  // classifier kinds never touch the long form
        auto pred = train_model(cfg, unused, train_w, job_seed);
        probs = pred->predict_proba(test_w.Z);
        truth = test_w.y;
      }

      std::vector<int> labels(probs.rows());
      for (Eigen::Index i = 0; i < probs.rows(); ++i) labels[i] = argmax_choice(probs.row(i));
      Accuracy acc = accuracy(labels, truth, n_classes);
      Eigen::VectorXd pred_shares = probs.colwise().mean();
      Eigen::VectorXd true_shares = Eigen::VectorXd::Zero(n_classes);
      for (int t : truth) true_shares(t) += 1.0;
      true_shares /= static_cast<double>(truth.size());

      cell.acc_overall = acc.overall;
      cell.acc_per_class = acc.per_class;
      cell.l1 = l1_share_error(pred_shares, true_shares);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
  });

  for (auto& mr : report.models) {
    std::vector<double> accs, l1s;
    std::vector<std::vector<double>> per_class(n_classes);
    for (auto& f : mr.folds) {
      if (f.failed) {
        ++mr.n_failed;
        continue;
      }
      accs.push_back(f.acc_overall);
      l1s.push_back(f.l1);
      for (int c = 0; c < n_classes; ++c) per_class[c].push_back(f.acc_per_class(c));
    }
    std::tie(mr.mean_acc, mr.sd_acc) = detail::mean_sd(accs);
    std::tie(mr.mean_l1, mr.sd_l1) = detail::mean_sd(l1s);
    mr.mean_class = Eigen::VectorXd::Constant(n_classes, kNaN);
    mr.sd_class = Eigen::VectorXd::Constant(n_classes, kNaN);
    for (int c = 0; c < n_classes; ++c)
      std::tie(mr.mean_class(c), mr.sd_class(c)) = detail::mean_sd(per_class[c]);
  }
  return report;
}

}  // namespace modechoice

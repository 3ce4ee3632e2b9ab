#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "modechoice/common.hpp"
#include "modechoice/rng.hpp"

namespace modechoice {

/// Gaussian naive Bayes with Bernoulli handling of binary columns (a Gaussian
/// density on a 0/1 column is misspecified and numerically brittle).
struct NaiveBayesModel {
  int n_classes = 0;
  int n_features = 0;
  Eigen::VectorXd log_priors;
  std::vector<uint8_t> is_binary;  // per column
  Eigen::MatrixXd mean, sd;        // class x feature, continuous columns
  Eigen::MatrixXd rate;            // class x feature, Laplace-smoothed, binary columns
};

inline NaiveBayesModel fit_nb(const Eigen::MatrixXd& z, const std::vector<int>& y, int n_classes) {
  const int n = static_cast<int>(z.rows());
  const int p = static_cast<int>(z.cols());
  std::vector<int> class_n(n_classes, 0);
  for (int yi : y) ++class_n[yi];
  for (int k = 0; k < n_classes; ++k)
    if (class_n[k] == 0)
      throw validation_error("fit_nb: class " + std::to_string(k) + " absent from training data");

  NaiveBayesModel m;
  m.n_classes = n_classes;
  m.n_features = p;
  m.log_priors.resize(n_classes);
  for (int k = 0; k < n_classes; ++k)
    m.log_priors(k) = std::log(static_cast<double>(class_n[k]) / n);

  m.is_binary.assign(p, 1);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < n; ++i)
      if (z(i, j) != 0.0 && z(i, j) != 1.0) {
        m.is_binary[j] = 0;
        break;
      }

  m.mean = Eigen::MatrixXd::Zero(n_classes, p);
  m.sd = Eigen::MatrixXd::Zero(n_classes, p);
  m.rate = Eigen::MatrixXd::Zero(n_classes, p);
  for (int j = 0; j < p; ++j) {
    double col_mean = z.col(j).mean();
    double col_sd = std::sqrt((z.col(j).array() - col_mean).square().sum() / n);
    double floor = std::max(1e-6 * col_sd, 1e-9);
    for (int k = 0; k < n_classes; ++k) {
      double sum = 0.0, sum2 = 0.0, ones = 0.0;
      for (int i = 0; i < n; ++i) {
        if (y[i] != k) continue;
        sum += z(i, j);
        sum2 += z(i, j) * z(i, j);
        if (z(i, j) == 1.0) ones += 1.0;
      }
      double mu = sum / class_n[k];
      double var = sum2 / class_n[k] - mu * mu;
      m.mean(k, j) = mu;
      m.sd(k, j) = std::max(std::sqrt(std::max(var, 0.0)), floor);
      m.rate(k, j) = (ones + 1.0) / (class_n[k] + 2.0);
    }
  }
  return m;
}

inline Eigen::MatrixXd nb_predict_proba(const NaiveBayesModel& m, const Eigen::MatrixXd& rows) {
  if (rows.cols() != m.n_features)
    throw validation_error("naive Bayes expects " + std::to_string(m.n_features) +
                           " columns, got " + std::to_string(rows.cols()));
  const double log_2pi = std::log(2.0 * M_PI);
  Eigen::MatrixXd out(rows.rows(), m.n_classes);
  Eigen::VectorXd lp(m.n_classes);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (int k = 0; k < m.n_classes; ++k) {
      double acc = m.log_priors(k);
      for (int j = 0; j < m.n_features; ++j) {
        double x = rows(i, j);
        if (m.is_binary[j]) {
          double r = m.rate(k, j);
          acc += x * std::log(r) + (1.0 - x) * std::log(1.0 - r);
        } else {
          double s = m.sd(k, j), d = (x - m.mean(k, j)) / s;
          acc += -0.5 * (log_2pi + d * d) - std::log(s);
        }
      }
      lp(k) = acc;
    }
    double mx = lp.maxCoeff();
    Eigen::VectorXd e = (lp.array() - mx).exp();
    out.row(i) = e.transpose() / e.sum();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single-hidden-layer network, backpropagation with weight decay
// ---------------------------------------------------------------------------

struct NnOptions {
  int hidden = 18;
  double decay = 0.4;
  int epochs = 2000;
  double lr = 0.01;
  std::uint64_t seed = 0;
};

/// Logistic-sigmoid hidden layer, softmax output, trained by full-batch
/// gradient descent on cross-entropy + (decay/2)*sum(w^2). Inputs are
/// standardized internally and the transform is stored.
struct NeuralNet {
  NnOptions opts;
  int n_inputs = 0;
  int n_classes = 0;
  Eigen::MatrixXd w1;  // hidden x inputs
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // classes x hidden
  Eigen::VectorXd b2;
  Eigen::VectorXd in_mean, in_sd;
  std::vector<double> loss_history;  // per epoch, after the update
};

namespace detail {

inline Eigen::MatrixXd nn_forward(const NeuralNet& nn, const Eigen::MatrixXd& x_std,
                                  Eigen::MatrixXd* hidden_out = nullptr) {
  Eigen::MatrixXd h = ((x_std * nn.w1.transpose()).rowwise() + nn.b1.transpose())
                          .unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Eigen::MatrixXd scores = (h * nn.w2.transpose()).rowwise() + nn.b2.transpose();
  Eigen::MatrixXd probs(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double mx = scores.row(i).maxCoeff();
    Eigen::RowVectorXd e = (scores.row(i).array() - mx).exp();
    probs.row(i) = e / e.sum();
  }
  if (hidden_out) *hidden_out = std::move(h);
  return probs;
}

/// Total cross-entropy plus decay penalty, and its gradient in the packed
/// order (w1, b1, w2, b2). Exposed for the finite-difference check.
inline double nn_loss_grad(const NeuralNet& nn, const Eigen::MatrixXd& x_std,
                           const std::vector<int>& y, Eigen::MatrixXd& g_w1, Eigen::VectorXd& g_b1,
                           Eigen::MatrixXd& g_w2, Eigen::VectorXd& g_b2) {
  Eigen::MatrixXd h;
  Eigen::MatrixXd probs = nn_forward(nn, x_std, &h);
  const Eigen::Index n = x_std.rows();

  double loss = 0.0;
  Eigen::MatrixXd delta = probs;  // dLoss/dscores
  for (Eigen::Index i = 0; i < n; ++i) {
    loss -= std::log(std::max(probs(i, y[i]), 1e-300));
    delta(i, y[i]) -= 1.0;
  }
  loss += 0.5 * nn.opts.decay *
          (nn.w1.squaredNorm() + nn.b1.squaredNorm() + nn.w2.squaredNorm() + nn.b2.squaredNorm());

  g_w2 = delta.transpose() * h + nn.opts.decay * nn.w2;
  g_b2 = delta.colwise().sum().transpose() + nn.opts.decay * nn.b2;
  Eigen::MatrixXd dh = (delta * nn.w2).cwiseProduct(h.cwiseProduct((1.0 - h.array()).matrix()));
  g_w1 = dh.transpose() * x_std + nn.opts.decay * nn.w1;
  g_b1 = dh.colwise().sum().transpose() + nn.opts.decay * nn.b1;
  return loss;
}

}  // namespace detail

inline NeuralNet fit_nn(const Eigen::MatrixXd& z, const std::vector<int>& y, int n_classes,
                        const NnOptions& opts = {}) {
  const int p = static_cast<int>(z.cols());
  NeuralNet nn;
  nn.opts = opts;
  nn.n_inputs = p;
  nn.n_classes = n_classes;

  nn.in_mean = z.colwise().mean();
  nn.in_sd.resize(p);
  for (int j = 0; j < p; ++j) {
    double sd = std::sqrt((z.col(j).array() - nn.in_mean(j)).square().sum() / z.rows());
    nn.in_sd(j) = sd > 0 ? sd : 1.0;
  }
  Eigen::MatrixXd x_std =
      (z.rowwise() - nn.in_mean.transpose()).array().rowwise() / nn.in_sd.transpose().array();

  Rng rng(opts.seed);
  auto init = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-0.5, 0.5);
    return m;
  };
  nn.w1 = init(opts.hidden, p);
  nn.b1 = init(opts.hidden, 1);
  nn.w2 = init(n_classes, opts.hidden);
  nn.b2 = init(n_classes, 1);

  Eigen::MatrixXd g_w1, g_w2;
  Eigen::VectorXd g_b1, g_b2;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    double loss = detail::nn_loss_grad(nn, x_std, y, g_w1, g_b1, g_w2, g_b2);
    if (!std::isfinite(loss))
      throw validation_error("fit_nn: loss became non-finite; reduce the learning rate");
    nn.w1 -= opts.lr * g_w1;
    nn.b1 -= opts.lr * g_b1;
    nn.w2 -= opts.lr * g_w2;
    nn.b2 -= opts.lr * g_b2;
    nn.loss_history.push_back(loss);
  }
  return nn;
}

inline Eigen::MatrixXd nn_predict_proba(const NeuralNet& nn, const Eigen::MatrixXd& rows) {
  if (rows.cols() != nn.n_inputs)
    throw validation_error("neural net expects " + std::to_string(nn.n_inputs) + " columns, got " +
                           std::to_string(rows.cols()));
  Eigen::MatrixXd x_std =
      (rows.rowwise() - nn.in_mean.transpose()).array().rowwise() / nn.in_sd.transpose().array();
  return detail::nn_forward(nn, x_std);
}

}  // namespace modechoice

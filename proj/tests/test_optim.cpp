#include <catch2/catch_amalgamated.hpp>
#include <modechoice/optim.hpp>
#include <modechoice/rng.hpp>

using namespace modechoice;

namespace {

// Hand-written binary logit log likelihood, independent of the library's
// logit module: V = b0 + b1 * x, outcome y in {0, 1} picks alternative 1.
struct BinaryLogitFixture {
  std::vector<double> x;
  std::vector<int> y;

  double loglik(const Eigen::VectorXd& b) const {
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double v = b(0) + b(1) * x[i];
      double log_p1 = v - std::log1p(std::exp(v));
      ll += y[i] ? log_p1 : log_p1 - v;  // log p0 = -log(1 + e^v)
    }
    return ll;
  }

  static BinaryLogitFixture make(int n, double b0, double b1, std::uint64_t seed) {
    Rng rng(seed);
    BinaryLogitFixture f;
    for (int i = 0; i < n; ++i) {
      double xv = rng.uniform(-2, 2);
      double v = b0 + b1 * xv;
      double p1 = 1.0 / (1.0 + std::exp(-v));
      f.x.push_back(xv);
      f.y.push_back(rng.next_double() < p1 ? 1 : 0);
    }
    return f;
  }
};

}  // namespace

TEST_CASE("maximize solves smooth concave problems") {
  SECTION("1-d quadratic peaks at 3") {
    OptProblem p;
    p.dim = 1;
    p.objective = [](const Eigen::VectorXd& x) { return -(x(0) - 3.0) * (x(0) - 3.0); };
    auto r = maximize(p, Eigen::VectorXd::Zero(1));
    REQUIRE(r.converged);
    REQUIRE(r.x_star(0) == Catch::Approx(3.0).margin(1e-6));
  }
  SECTION("anisotropic quadratic from (5,5)") {
    OptProblem p;
    p.dim = 2;
    p.objective = [](const Eigen::VectorXd& x) { return -x(0) * x(0) - 10.0 * x(1) * x(1); };
    Eigen::VectorXd x0(2);
    x0 << 5, 5;
    auto r = maximize(p, x0);
    REQUIRE(r.converged);
    REQUIRE(r.x_star.cwiseAbs().maxCoeff() < 1e-6);
  }
  SECTION("binary logit matches a grid-search oracle within 1e-3") {
    auto fx = BinaryLogitFixture::make(500, 0.4, -1.1, 21);
    OptProblem p;
    p.dim = 2;
    p.objective = [&](const Eigen::VectorXd& b) { return fx.loglik(b); };
    auto r = maximize(p, Eigen::VectorXd::Zero(2));
    REQUIRE(r.converged);

    // two-stage grid over [-5,5]^2: coarse 0.05, then 1e-3 around the best
    auto grid_best = [&](double lo0, double hi0, double lo1, double hi1, double step) {
      Eigen::VectorXd best(2), b(2);
      double best_ll = -kInf;
      for (double b0 = lo0; b0 <= hi0 + 1e-15; b0 += step)
        for (double b1 = lo1; b1 <= hi1 + 1e-15; b1 += step) {
          b << b0, b1;
          double ll = fx.loglik(b);
          if (ll > best_ll) {
            best_ll = ll;
            best = b;
          }
        }
      return best;
    };
    Eigen::VectorXd coarse = grid_best(-5, 5, -5, 5, 0.05);
    Eigen::VectorXd fine = grid_best(coarse(0) - 0.06, coarse(0) + 0.06, coarse(1) - 0.06,
                                     coarse(1) + 0.06, 1e-3);
    REQUIRE((r.x_star - fine).cwiseAbs().maxCoeff() < 2e-3);
  }
}

TEST_CASE("maximize failure modes") {
  SECTION("non-finite start is rejected") {
    OptProblem p;
    p.dim = 1;
    p.objective = [](const Eigen::VectorXd& x) { return std::log(x(0)); };
    REQUIRE_THROWS_AS(maximize(p, Eigen::VectorXd::Zero(1)), validation_error);
  }
  SECTION("line-search failure returns best-so-far unconverged") {
    OptProblem p;
    p.dim = 1;
    // objective with a kink the line search cration cannot improve past
    p.objective = [](const Eigen::VectorXd& x) { return -std::abs(x(0) - 0.3); };
    auto r = maximize(p, Eigen::VectorXd::Zero(1), {.max_iters = 100});
    REQUIRE_FALSE(r.converged);
    REQUIRE(std::isfinite(r.f_star));
  }
}

TEST_CASE("quadratics of dim <= 10 converge within 50 iterations to 1e-8") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    int dim = 1 + static_cast<int>(rng.below(10));
    Eigen::MatrixXd m(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) m(i, j) = rng.uniform(-1, 1);
    Eigen::MatrixXd a = m * m.transpose() + Eigen::MatrixXd::Identity(dim, dim);
    OptProblem p;
    p.dim = dim;
    p.objective = [&](const Eigen::VectorXd& x) { return -0.5 * x.dot(a * x); };
    p.gradient = [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(-(a * x)); };
    Eigen::VectorXd x0(dim);
    for (int i = 0; i < dim; ++i) x0(i) = rng.uniform(-3, 3);
    auto r = maximize(p, x0, {.max_iters = 50, .grad_tol = 1e-8});
    REQUIRE(r.converged);
    REQUIRE(r.n_iters <= 50);
    REQUIRE(r.grad_norm <= 1e-8 * (1.0 + std::abs(r.f_star)));
  }
}

TEST_CASE("accepted steps never decrease the objective") {
  auto fx = BinaryLogitFixture::make(200, -0.5, 0.8, 5);
  OptProblem p;
  p.dim = 2;
  p.objective = [&](const Eigen::VectorXd& b) { return fx.loglik(b); };
  OptOptions opts;
  opts.record_trace = true;
  auto r = maximize(p, Eigen::VectorXd::Zero(2), opts);
  REQUIRE(r.trace.size() >= 2);
  for (std::size_t i = 1; i < r.trace.size(); ++i)
    REQUIRE(r.trace[i].f >= r.trace[i - 1].f);
}

TEST_CASE("finite_diff_grad") {
  SECTION("x^2 at 2") {
    auto g = finite_diff_grad([](const Eigen::VectorXd& x) { return x(0) * x(0); },
                              Eigen::VectorXd::Constant(1, 2.0), 1e-5);
    REQUIRE(g(0) == Catch::Approx(4.0).margin(1e-8));
  }
  SECTION("sin at 0") {
    auto g = finite_diff_grad([](const Eigen::VectorXd& x) { return std::sin(x(0)); },
                              Eigen::VectorXd::Zero(1), 1e-5);
    REQUIRE(g(0) == Catch::Approx(1.0).margin(1e-8));
  }
}

TEST_CASE("check_gradient flags wrong gradients and passes right ones") {
  auto fx = BinaryLogitFixture::make(150, 0.2, 0.9, 8);
  OptProblem p;
  p.dim = 2;
  p.objective = [&](const Eigen::VectorXd& b) { return fx.loglik(b); };
  p.gradient = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
    for (std::size_t i = 0; i < fx.x.size(); ++i) {
      double v = b(0) + b(1) * fx.x[i];
      double p1 = 1.0 / (1.0 + std::exp(-v));
      double resid = fx.y[i] - p1;
      g(0) += resid;
      g(1) += resid * fx.x[i];
    }
    return g;
  };
  Eigen::VectorXd at(2);
  at << 0.3, -0.7;
  REQUIRE(check_gradient(p, at) < 1e-5);

  OptProblem broken = p;
  broken.gradient = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd g = p.gradient(b);
    g(1) = -g(1);  // injected sign bug
    return g;
  };
  REQUIRE(check_gradient(broken, at) > 0.1);
}

TEST_CASE("deterministic: identical inputs give bit-identical results") {
  auto fx = BinaryLogitFixture::make(300, 0.1, 0.5, 33);
  OptProblem p;
  p.dim = 2;
  p.objective = [&](const Eigen::VectorXd& b) { return fx.loglik(b); };
  auto r1 = maximize(p, Eigen::VectorXd::Zero(2));
  auto r2 = maximize(p, Eigen::VectorXd::Zero(2));
  REQUIRE(r1.x_star(0) == r2.x_star(0));
  REQUIRE(r1.x_star(1) == r2.x_star(1));
  REQUIRE(r1.f_star == r2.f_star);
  REQUIRE(r1.n_iters == r2.n_iters);
}

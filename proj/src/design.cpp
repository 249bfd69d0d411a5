#include "eti/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace eti {

DivisionByZeroMass::DivisionByZeroMass(Chain c, int x)
    : Error("mle_variance: zero kappa with positive weight at chain " + std::to_string(static_cast<int>(c)) +
            ", state " + std::to_string(x)),
      chain(c),
      state(x) {}

DegenerateChain::DegenerateChain(Chain c)
    : Error("chain " + std::to_string(static_cast<int>(c)) + " has zero average state variance"), chain(c) {}

double mle_variance(const KappaVector& kappa, const PerChain& pi, const PerChain& sigma2) {
  double total = 0.0;
  for (Chain c : kChains) {
    const int ci = index_of(c);
    for (Eigen::Index x = 0; x < kappa.cols(); ++x) {
      const double weight = pi(ci, x) * pi(ci, x) * sigma2(ci, x);
      if (weight == 0.0) continue;
      if (!(kappa(ci, x) > 0.0)) throw DivisionByZeroMass(c, static_cast<int>(x));
      total += weight / kappa(ci, x);
    }
  }
  return total;
}

namespace {

// Flattened layout: v[c * n + x] = kappa(c, x).
struct Program {
  int n = 0;
  Matrix A;  // n x 2n: balance rows for y = 0..n-2, then the mass row
  Vector c;  // objective weights pi^2 sigma2
};

Program build_program(const PerChain& pi, const PerChain& sigma2, const Matrix& P1, const Matrix& P2) {
  Program prog;
  const int n = static_cast<int>(P1.rows());
  prog.n = n;
  prog.A = Matrix::Zero(n, 2 * n);
  for (int y = 0; y + 1 < n; ++y) {
    for (int x = 0; x < n; ++x) {
      prog.A(y, x) = (x == y ? 1.0 : 0.0) - P1(x, y);
      prog.A(y, n + x) = (x == y ? 1.0 : 0.0) - P2(x, y);
    }
  }
  prog.A.row(n - 1).setOnes();
  prog.c.resize(2 * n);
  for (int x = 0; x < n; ++x) {
    prog.c(x) = pi(0, x) * pi(0, x) * sigma2(0, x);
    prog.c(n + x) = pi(1, x) * pi(1, x) * sigma2(1, x);
  }
  return prog;
}

Vector flatten(const KappaVector& k) {
  const auto n = k.cols();
  Vector v(2 * n);
  v.head(n) = k.row(0).transpose();
  v.tail(n) = k.row(1).transpose();
  return v;
}

KappaVector unflatten(const Vector& v) {
  const auto n = v.size() / 2;
  KappaVector k(2, n);
  k.row(0) = v.head(n).transpose();
  k.row(1) = v.tail(n).transpose();
  return k;
}

// phi(v) = t * f(v) - w * sum log v, with w = 1 in the barrier phase and 0 when polishing.
double merit(const Program& prog, const Vector& v, double t, double w) {
  double value = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v(i) > 0.0)) return std::numeric_limits<double>::infinity();
    value += t * prog.c(i) / v(i);
    if (w != 0.0) value -= w * std::log(v(i));
  }
  return value;
}

struct NewtonStep {
  Vector direction;
  Vector gradient;
  double decrement = 0.0;  // lambda^2
};

NewtonStep newton_step(const Program& prog, const Vector& v, double t, double w) {
  const Eigen::Index N = v.size();
  NewtonStep step;
  step.gradient.resize(N);
  Vector hinv(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double vi = v(i);
    step.gradient(i) = -t * prog.c(i) / (vi * vi) - w / vi;
    hinv(i) = 1.0 / (2.0 * t * prog.c(i) / (vi * vi * vi) + w / (vi * vi));
  }
  const Matrix AH = prog.A * hinv.asDiagonal();
  const Matrix schur = AH * prog.A.transpose();
  const Vector rhs = -(AH * step.gradient);
  const Vector mult = schur.ldlt().solve(rhs);
  step.direction = -(hinv.asDiagonal() * (step.gradient + prog.A.transpose() * mult));
  step.decrement = -step.gradient.dot(step.direction);
  return step;
}

// Backtracking line search that keeps v strictly positive.  Returns false when
// no step size improves the merit function.
bool line_search(const Program& prog, Vector& v, const NewtonStep& step, double t, double w) {
  double s = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (step.direction(i) < 0.0) s = std::min(s, -0.99 * v(i) / step.direction(i));
  }
  const double current = merit(prog, v, t, w);
  const double slope = step.gradient.dot(step.direction);
  while (s > 1e-16) {
    const Vector trial = v + s * step.direction;
    const double value = merit(prog, trial, t, w);
    if (value <= current + 0.25 * s * slope) {
      if (!(value < current)) return false;
      v = trial;
      return true;
    }
    s *= 0.5;
  }
  return false;
}

// Removes the roundoff drift of Newton iterates off the affine set A v = e_mass.
void restore_feasibility(const Program& prog, Vector& v) {
  Vector target = Vector::Zero(prog.n);
  target(prog.n - 1) = 1.0;
  const auto AAt = (prog.A * prog.A.transpose()).eval().ldlt();
  for (int pass = 0; pass < 2; ++pass) {
    const Vector trial = v - prog.A.transpose() * AAt.solve(prog.A * v - target);
    if (!((trial.array() > 0.0).all())) return;
    v = trial;
  }
}

double projected_gradient_norm(const Program& prog, const Vector& v) {
  Vector grad(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) grad(i) = -prog.c(i) / (v(i) * v(i));
  const Matrix AAt = prog.A * prog.A.transpose();
  const Vector mult = AAt.ldlt().solve(prog.A * grad);
  return (grad - prog.A.transpose() * mult).norm();
}

}  // namespace

double kkt_residual(const KappaVector& kappa, const PerChain& pi, const PerChain& sigma2, const Matrix& P1,
                    const Matrix& P2) {
  return projected_gradient_norm(build_program(pi, sigma2, P1, P2), flatten(kappa));
}

DesignSolution solve_optimal_kappa(const PerChain& pi, const PerChain& sigma2, const Matrix& P1, const Matrix& P2,
                                   const DesignOptions& options) {
  const int n = static_cast<int>(P1.rows());
  DesignSolution sol;
  sol.epsilon = options.epsilon;
  PerChain floored = sigma2;
  for (Eigen::Index i = 0; i < floored.size(); ++i) {
    if (floored.data()[i] < options.epsilon) {
      floored.data()[i] = options.epsilon;
      sol.regularized = true;
    }
  }
  const Program prog = build_program(pi, floored, P1, P2);
  const bool all_positive = (prog.c.array() > 0.0).all();
  const double N = 2.0 * n;

  auto start_from = [&](const std::vector<double>& p) -> std::optional<Vector> {
    try {
      const Vector v = flatten(kappa_from_markov(p, P1, P2));
      if ((v.array() > 0.0).all()) return v;
    } catch (const Error&) {
    }
    return std::nullopt;
  };

  std::optional<Vector> start;
  bool warm = false;
  if (options.warm_start && all_positive) {
    std::vector<double> p = *options.warm_start;
    for (double& value : p) value = std::clamp(value, 1e-6, 1.0 - 1e-6);
    start = start_from(p);
    warm = start.has_value();
  }
  if (!start) start = start_from(std::vector<double>(static_cast<std::size_t>(n), 0.5));
  if (!start) throw InfeasibleStart("solve_optimal_kappa: uniform Markov policy has no positive limits");
  Vector v = *start;

  int iterations = 0;
  auto centering = [&](double t, double w, double tol) {
    while (true) {
      const NewtonStep step = newton_step(prog, v, t, w);
      if (!(step.decrement >= 0.0) || step.decrement / 2.0 <= tol) return;
      if (++iterations > options.max_iterations) {
        throw MaxIterations("solve_optimal_kappa: Newton iteration limit reached");
      }
      if (!line_search(prog, v, step, t, w)) return;
    }
  };

  if (!warm) {
    const double f0 = merit(prog, v, 1.0, 0.0);
    double t = f0 > 0.0 ? N / f0 : 1.0;
    while (true) {
      centering(t, 1.0, 1e-10);
      restore_feasibility(prog, v);
      if (N / t <= options.gap_tolerance) break;
      t *= 20.0;
    }
  }
  if (all_positive) {
    // Pure Newton on the objective: it is its own barrier when every weight is positive.
    // Near the optimum the objective stops resolving progress, so full steps are
    // taken there and judged by the projected gradient instead.
    const double scale = std::max(1.0, merit(prog, v, 1.0, 0.0));
    centering(1.0, 0.0, 1e-12 * scale);
    double best = projected_gradient_norm(prog, v);
    for (int k = 0; k < 20 && best > 0.0; ++k) {
      const NewtonStep step = newton_step(prog, v, 1.0, 0.0);
      const Vector trial = v + step.direction;
      if (!((trial.array() > 0.0).all())) break;
      const double residual = projected_gradient_norm(prog, trial);
      if (!(residual < best)) break;
      ++iterations;
      v = trial;
      best = residual;
    }
  }
  restore_feasibility(prog, v);

  sol.kappa_star = unflatten(v);
  sol.p_star = markov_from_kappa(sol.kappa_star);
  sol.objective = merit(prog, v, 1.0, 0.0);
  sol.kkt_residual = projected_gradient_norm(prog, v);
  sol.iterations = iterations;
  return sol;
}

RegenerativeDesign optimal_regenerative(const ChainAnalysis& analysis, int regen_state) {
  if (regen_state < 0 || regen_state >= analysis.n_states()) {
    throw InvalidArgument("optimal_regenerative: regeneration state out of range");
  }
  const double s1 = analysis.sigma_bar(Chain::first);
  const double s2 = analysis.sigma_bar(Chain::second);
  if (!(s1 > 0.0)) throw DegenerateChain(Chain::first);
  if (!(s2 > 0.0)) throw DegenerateChain(Chain::second);
  const double eta1 = analysis.eta(0, regen_state);
  const double eta2 = analysis.eta(1, regen_state);

  RegenerativeDesign d;
  d.regen_state = regen_state;
  d.q_star = s1 / (s1 + s2);
  d.p_star = eta2 * s1 / (eta2 * s1 + eta1 * s2);
  d.variance = (s1 + s2) * (s1 + s2);
  d.kappa = regenerative_limits(d.q_star, analysis.pi.row(0).transpose(), analysis.pi.row(1).transpose());
  return d;
}

double sae_variance(double q, double sigma_bar1, double sigma_bar2) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("sae_variance: q must lie in (0, 1)");
  return sigma_bar1 * sigma_bar1 / q + sigma_bar2 * sigma_bar2 / (1.0 - q);
}

VarianceGapReport variance_gap_report(const ChainSpec& spec, const ChainAnalysis& analysis, int regen_state,
                                      const DesignOptions& options) {
  VarianceGapReport report;
  const DesignSolution markov =
      solve_optimal_kappa(analysis.pi, analysis.sigma2, spec.P(Chain::first), spec.P(Chain::second), options);
  const RegenerativeDesign regen = optimal_regenerative(analysis, regen_state);
  report.markov_variance = markov.objective;
  report.markov_regularized = markov.regularized;
  report.regenerative_variance = regen.variance;
  report.ratio = regen.variance / markov.objective;
  return report;
}

}  // namespace eti

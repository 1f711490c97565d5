#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "ctxscale/errors.hpp"
#include "ctxscale/optimize.hpp"

namespace ctxscale {
namespace {

constexpr double kRelativeStep = 1e-6;
constexpr double kMaxDamping = 1e16;

struct Problem {
  const ResidualFunction& residuals;
  std::size_t m;
  std::span<const Interval> bounds;

  Eigen::VectorXd eval(const Eigen::VectorXd& x) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(m));
    residuals(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
              std::span<double>(r.data(), m));
    return r;
  }

  // Central differences, falling back to one-sided next to a bound so that no
  // probe ever leaves the box.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& r0) const {
    const auto n = x.size();
    Eigen::MatrixXd J(static_cast<Eigen::Index>(m), n);
    Eigen::VectorXd probe = x;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& b = bounds[static_cast<std::size_t>(j)];
      const double h = kRelativeStep * std::max(std::abs(x[j]), 1.0);
      const bool up_ok = x[j] + h <= b.upper;
      const bool down_ok = x[j] - h >= b.lower;
      if (up_ok && down_ok) {
        probe[j] = x[j] + h;
        const Eigen::VectorXd rp = eval(probe);
        probe[j] = x[j] - h;
        const Eigen::VectorXd rm = eval(probe);
        J.col(j) = (rp - rm) / (2 * h);
      } else if (up_ok) {
        probe[j] = x[j] + h;
        J.col(j) = (eval(probe) - r0) / h;
      } else if (down_ok) {
        probe[j] = x[j] - h;
        J.col(j) = (r0 - eval(probe)) / h;
      } else {
        J.col(j).setZero();  // box narrower than the probe step
      }
      probe[j] = x[j];
    }
    return J;
  }

  Eigen::VectorXd project(Eigen::VectorXd x) const {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const auto& b = bounds[static_cast<std::size_t>(j)];
      x[j] = std::clamp(x[j], b.lower, b.upper);
    }
    return x;
  }

  // Gradient with components zeroed where the bound blocks descent.
  Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g) const {
    Eigen::VectorXd pg = g;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const auto& b = bounds[static_cast<std::size_t>(j)];
      if ((x[j] <= b.lower && g[j] > 0) || (x[j] >= b.upper && g[j] < 0)) {
        pg[j] = 0;
      }
    }
    return pg;
  }
};

double sum_squares(const Eigen::VectorXd& r) {
  const double s = r.squaredNorm();
  return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
}

}  // namespace

LeastSquaresResult bounded_least_squares(const ResidualFunction& residuals,
                                         std::size_t residual_count, std::vector<double> start,
                                         std::span<const Interval> bounds,
                                         const LocalConfig& config) {
  if (start.size() != bounds.size()) {
    throw ValidationError("bounded_least_squares: start and bounds differ in dimension");
  }
  for (std::size_t j = 0; j < start.size(); ++j) {
    if (!bounds[j].contains(start[j])) {
      throw DomainError("bounded_least_squares: start component " + std::to_string(j) +
                        " lies outside its bounds");
    }
  }
  if (!(config.step_tol > 0) || !(config.gradient_tol > 0)) {
    throw ValidationError("bounded_least_squares: tolerances must be > 0");
  }

  const Problem problem{residuals, residual_count, bounds};
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(start.data(),
                                                       static_cast<Eigen::Index>(start.size()));
  Eigen::VectorXd r = problem.eval(x);
  double sse = sum_squares(r);

  LeastSquaresResult out;
  out.sse_history.push_back(sse);

  double damping = 1e-3;
  double growth = 2.0;
  bool need_jacobian = true;
  Eigen::MatrixXd J;
  Eigen::VectorXd g;
  Eigen::MatrixXd H;

  while (out.iterations < config.max_iterations && std::isfinite(sse)) {
    ++out.iterations;
    if (need_jacobian) {
      J = problem.jacobian(x, r);
      g = J.transpose() * r;
      H = J.transpose() * J;
      need_jacobian = false;
      if (problem.projected_gradient(x, g).lpNorm<Eigen::Infinity>() <= config.gradient_tol) {
        out.converged = true;
        break;
      }
    }

    // Marquardt scaling with a floor so parameters the data cannot see still
    // receive some damping.
    Eigen::VectorXd scale = H.diagonal();
    const double floor = std::max(scale.maxCoeff(), 1.0) * 1e-12;
    scale = scale.cwiseMax(floor);
    Eigen::MatrixXd A = H;
    A.diagonal() += damping * scale;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    Eigen::VectorXd step;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      step = ldlt.solve(-g);
    }
    if (step.size() == 0 || !step.allFinite()) {
      step = -g.cwiseQuotient(damping * scale);
    }

    const Eigen::VectorXd candidate = problem.project(x + step);
    const Eigen::VectorXd taken = candidate - x;
    const Eigen::VectorXd r_new = problem.eval(candidate);
    const double sse_new = sum_squares(r_new);

    const double predicted = -(2.0 * g.dot(taken) + taken.dot(H * taken));
    const double actual = sse - sse_new;

    if (sse_new < sse) {
      const double rho = predicted > 0 ? actual / predicted : 0.0;
      x = candidate;
      r = r_new;
      sse = sse_new;
      out.sse_history.push_back(sse);
      need_jacobian = true;
      damping *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      growth = 2.0;
      if (taken.norm() <= config.step_tol * (x.norm() + config.step_tol)) {
        out.converged = true;
        break;
      }
    } else {
      damping *= growth;
      growth *= 2.0;
      if (damping > kMaxDamping) {
        // No descent direction left at working precision.
        out.converged = true;
        break;
      }
    }
  }

  out.x.assign(x.data(), x.data() + x.size());
  out.sse = sse;
  return out;
}

}  // namespace ctxscale

// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "hydro/manifold.hpp"
#include "suites.hpp"

namespace hydro::testing {

int SuiteReport::failures() const {
  int n = 0;
  for (const auto& c : cases) n += !c.ok();
  return n;
}

const CaseResult* SuiteReport::worst() const {
  const CaseResult* w = nullptr;
  double worst_ratio = -1.0;
  for (const auto& c : cases) {
    const double r = c.tolerance > 0 ? c.error / c.tolerance : (c.error > 0 ? INFINITY : 0.0);
    if (r > worst_ratio) {
      worst_ratio = r;
      w = &c;
    }
  }
  return w;
}

namespace {

using Ball = manifold::PoincareBall<double>;
using Vec = Ball::Vector;

double rel(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(1.0, b.norm()); }
double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

struct Sampler {
  std::mt19937_64 rng;
  std::normal_distribution<double> normal{0.0, 1.0};
  std::uniform_real_distribution<double> unit{0.0, 1.0};

  Vec direction(int d) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v(i) = normal(rng);
    return v / v.norm();
  }
  // Point with sqrt(c)|x| uniform in [0, max_scaled).
  Vec point(const Ball& b, int d, double max_scaled) { return direction(d) * (unit(rng) * max_scaled * b.radius()); }
  Vec tangent(const Ball& b, int d, double max_scaled) { return direction(d) * (unit(rng) * max_scaled * b.radius()); }
};

// Minkowski inner product with signature (-, +, ..., +).
double minkowski(const Vec& a, const Vec& b) { return -a(0) * b(0) + a.tail(a.size() - 1).dot(b.tail(b.size() - 1)); }

}  // namespace

SuiteReport manifold_suite(int random_cases, unsigned seed) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  const auto add = [&](std::string name, double err, double tol) { rep.cases.push_back({std::move(name), err, tol}); };

  // Closed forms at c = 1.
  {
    const Ball b(1.0);
    Vec x(2), y(2), z(2);
    x << 0.5, 0.0;
    y << 0.25, 0.0;
    z << 0.0, 0.0;
    // Collinear Mobius addition reduces to the relativistic velocity sum.
    add("mobius 0.5 (+) 0.25 = 2/3", std::abs(b.mobius_add(x, y)(0) - 2.0 / 3.0), 1e-15);
    add("mobius 0.5 (+) 0.5 = 0.8", std::abs(b.mobius_add(x, x)(0) - 0.8), 1e-15);
    add("distance_sq(0, 0.5 e1) = (ln 3)^2", std::abs(b.distance_sq(z, x) - std::pow(std::log(3.0), 2)), 1e-14);
    add("exp0(0.5 e1) = tanh(0.5) e1", std::abs(b.expmap0(x)(0) - std::tanh(0.5)), 1e-15);
    Vec h(3);
    h << 5.0 / 3.0, 4.0 / 3.0, 0.0;
    add("hyperboloid(0.5 e1) = (5/3, 4/3, 0)", (b.to_hyperboloid(x) - h).norm(), 1e-14);
    Vec u(2);
    u << 0.3, -0.7;
    add("gyr[a, b] = id for collinear a, b", (b.gyration(x, y, u) - u).norm(), 1e-12);
  }
  // Curvature scaling of the collinear sum: (x + y) / (1 + c x y).
  {
    const Ball b(0.01);
    Vec x(1), y(1);
    x << 3.0;
    y << -5.0;
    add("mobius 1D at c = 0.01", std::abs(b.mobius_add(x, y)(0) - (3.0 - 5.0) / (1.0 - 0.01 * 15.0)), 1e-13);
  }

  Sampler s{std::mt19937_64(seed)};
  const double curvatures[] = {0.01, 0.1, 1.0, 2.5};
  for (int k = 0; k < random_cases; ++k) {
    const Ball b(curvatures[k % 4]);
    const double sc = std::sqrt(b.curvature());
    const int d = 2 + k % 7;
    const Vec x = s.point(b, d, 0.7), y = s.point(b, d, 0.7), zero = Vec::Zero(d);
    const Vec u = s.tangent(b, d, 0.4), v = s.tangent(b, d, 0.4);
    const std::string tag = fmt::format("#{} c={} d={}", k, b.curvature(), d);

    add("left identity " + tag, rel(b.mobius_add(zero, x), x), 1e-12);
    add("right identity " + tag, rel(b.mobius_add(x, zero), x), 1e-12);
    add("left inverse " + tag, rel(b.mobius_add(-x, x), zero), 1e-12);
    add("left cancellation " + tag, rel(b.mobius_add(-x, b.mobius_add(x, y)), y), 1e-9);
    add("gyrocommutativity " + tag, rel(b.mobius_add(x, y), b.gyration(x, y, b.mobius_add(y, x))), 1e-9);

    add("log0 exp0 " + tag, rel(b.logmap0(b.expmap0(u)), u), 1e-9);
    add("exp0 log0 " + tag, rel(b.expmap0(b.logmap0(x)), x), 1e-9);
    const Vec q = b.expmap(x, u);
    add("log_x exp_x " + tag, rel(b.logmap(x, q), u), 1e-9);
    add("exp_x log_x " + tag, rel(b.expmap(x, b.logmap(x, y)), y), 1e-9);
    // Geodesic length of exp_x(u) is lambda_x |u|.
    add("distance along exp " + tag, rel(std::sqrt(b.distance_sq(x, q)) * sc, b.lambda(x) * u.norm() * sc), 1e-9);

    const Vec pu = b.parallel_transport(x, y, u), pv = b.parallel_transport(x, y, v);
    const double lx = b.lambda(x), ly = b.lambda(y);
    add("transport norm " + tag, rel(ly * pu.norm() * sc, lx * u.norm() * sc), 1e-9);
    add("transport inner product " + tag, rel(ly * ly * pu.dot(pv) * b.curvature(), lx * lx * u.dot(v) * b.curvature()),
        1e-9);
    add("transport round trip " + tag, rel(b.parallel_transport(y, x, pu), u), 1e-9);

    const Vec hx = b.to_hyperboloid(x), hy = b.to_hyperboloid(y);
    add("hyperboloid constraint " + tag, std::abs(minkowski(hx, hx) + 1.0) / (hx(0) * hx(0)), 1e-9);
    // On the unit sheet, cosh(sqrt(c) d) = -<h(x), h(y)>.
    add("hyperboloid distance " + tag, rel(std::acosh(std::max(1.0, -minkowski(hx, hy))), std::sqrt(b.distance_sq(x, y)) * sc),
        1e-7);
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace hydro::testing

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "hydro/errors.hpp"
#include "hydro/manifold.hpp"
#include "suites.hpp"

using namespace hydro;
using Ball = manifold::PoincareBall<double>;
using Vec = Ball::Vector;

TEST_CASE("manifold oracle suite") {
  const auto rep = testing::manifold_suite(200, 21);
  for (const auto& c : rep.cases) {
    INFO(c.name << " error " << c.error << " tol " << c.tolerance);
    CHECK(c.ok());
  }
}

TEST_CASE("ball construction rejects bad curvature") {
  CHECK_THROWS_AS(Ball(0.0), DomainError);
  CHECK_THROWS_AS(Ball(-1.0), DomainError);
  CHECK_THROWS_AS(Ball(1.0, 0.0), DomainError);
}

TEST_CASE("projection keeps points inside the margin") {
  const Ball b(1.0);
  Vec far(3);
  far << 3.0, -4.0, 0.0;
  const Vec p = b.project(far);
  CHECK(p.squaredNorm() == doctest::Approx(b.max_norm_sq()).epsilon(1e-12));
  CHECK(p.normalized().isApprox(far.normalized(), 1e-12));
  Vec bad(2);
  bad << std::nan(""), 0.0;
  CHECK_THROWS_AS(b.project(bad), DomainError);
}

TEST_CASE("typed points refuse to mix balls") {
  const Ball a(1.0), b(0.5);
  Vec x(2);
  x << 0.1, 0.2;
  const auto p = manifold::project_to_ball(x, a);
  const auto q = manifold::project_to_ball(x, b);
  CHECK_THROWS_AS(manifold::mobius_add(p, q), ContractError);
  CHECK_THROWS_AS(manifold::distance_sq(p, q), ContractError);
}

TEST_CASE("typed wrappers agree with the ball methods") {
  const Ball b(0.3);
  Vec x(2), y(2), u(2);
  x << 0.4, -0.2;
  y << -0.5, 0.9;
  u << 0.7, 0.1;
  const auto px = manifold::project_to_ball(x, b);
  const auto py = manifold::project_to_ball(y, b);
  CHECK(manifold::mobius_add(px, py).coords().isApprox(b.mobius_add(x, y)));
  const manifold::TangentVector<double> t(px, u);
  CHECK(manifold::exp_map(t).coords().isApprox(b.expmap(x, u)));
  CHECK(manifold::log_map(px, py).coords().isApprox(b.logmap(x, y)));
  CHECK(manifold::parallel_transport(py, t).coords().isApprox(b.parallel_transport(x, y, u)));
  CHECK(manifold::to_hyperboloid(px).isApprox(b.to_hyperboloid(x)));
}

TEST_CASE("mobius addition is not commutative") {
  const Ball b(1.0);
  Vec x(2), y(2);
  x << 0.5, 0.0;
  y << 0.0, 0.5;
  CHECK_FALSE(b.mobius_add(x, y).isApprox(b.mobius_add(y, x), 1e-6));
  // Same norm, though: the gyration is a rotation.
  CHECK(b.mobius_add(x, y).norm() == doctest::Approx(b.mobius_add(y, x).norm()).epsilon(1e-14));
}

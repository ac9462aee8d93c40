// SPDX-License-Identifier: Apache-2.0
//
// Poincare ball calculus. Every map comes with a vector-Jacobian product so
// the differentiation engine can chain through it without finite differences.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "hydro/errors.hpp"

namespace hydro::manifold {

inline constexpr double kBoundaryEps = 1e-5;

namespace detail {

// tanh(t)/t and its derivative, with a series branch near zero.
template <typename Scalar>
std::pair<Scalar, Scalar> tanh_ratio(Scalar t) {
  if (t < Scalar(1e-2)) {
    const Scalar t2 = t * t;
    const Scalar f = 1 - t2 / 3 + 2 * t2 * t2 / 15 - 17 * t2 * t2 * t2 / 315;
    const Scalar df = t * (Scalar(-2) / 3 + 8 * t2 / 15 - 102 * t2 * t2 / 315);
    return {f, df};
  }
  const Scalar th = std::tanh(t);
  const Scalar sech2 = 1 - th * th;
  return {th / t, (sech2 * t - th) / (t * t)};
}

// artanh(t)/t and its derivative.
template <typename Scalar>
std::pair<Scalar, Scalar> artanh_ratio(Scalar t) {
  if (t < Scalar(1e-2)) {
    const Scalar t2 = t * t;
    const Scalar f = 1 + t2 / 3 + t2 * t2 / 5 + t2 * t2 * t2 / 7;
    const Scalar df = t * (Scalar(2) / 3 + 4 * t2 / 5 + 6 * t2 * t2 / 7);
    return {f, df};
  }
  const Scalar at = std::atanh(t);
  return {at / t, (t / (1 - t * t) - at) / (t * t)};
}

template <typename Scalar>
Scalar clamp_unit(Scalar t) {
  return std::min(t, Scalar(1) - 4 * std::numeric_limits<Scalar>::epsilon());
}

}  // namespace detail

/// Open ball of radius 1/sqrt(c). Results handed back to callers are kept
/// inside the shrunken ball ||x||^2 <= (1 - boundary_eps)/c.
template <typename Scalar = double>
class PoincareBall {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using VectorRef = Eigen::Ref<const Vector>;

  explicit PoincareBall(Scalar curvature, Scalar boundary_eps = Scalar(kBoundaryEps))
      : c_(curvature), sqrt_c_(std::sqrt(curvature)), eps_(boundary_eps) {
    if (!(curvature > 0) || !std::isfinite(curvature)) {
      throw DomainError("PoincareBall: curvature must be positive and finite");
    }
    if (!(boundary_eps > 0 && boundary_eps < 1)) {
      throw DomainError("PoincareBall: boundary margin must lie in (0, 1)");
    }
  }

  Scalar curvature() const { return c_; }
  Scalar radius() const { return 1 / sqrt_c_; }
  Scalar boundary_eps() const { return eps_; }
  Scalar max_norm_sq() const { return (1 - eps_) / c_; }

  bool operator==(const PoincareBall& o) const { return c_ == o.c_ && eps_ == o.eps_; }

  /// Conformal factor 2 / (1 - c ||x||^2).
  Scalar lambda(const VectorRef& x) const { return 2 / (1 - c_ * x.squaredNorm()); }

  // --- projection -----------------------------------------------------------

  Vector project(const VectorRef& v) const {
    if (!v.allFinite()) throw DomainError("project_to_ball: non-finite coordinates");
    const Scalar n2 = v.squaredNorm();
    const Scalar bound = max_norm_sq();
    if (n2 < bound) return v;
    return v * std::sqrt(bound / n2);
  }

  Vector project_vjp(const VectorRef& v, const VectorRef& g) const {
    const Scalar n2 = v.squaredNorm();
    if (n2 < max_norm_sq()) return g;
    const Scalar n = std::sqrt(n2);
    const Scalar r = std::sqrt(max_norm_sq());
    const Vector vhat = v / n;
    return (r / n) * (g - vhat * vhat.dot(g));
  }

  // --- Mobius addition --------------------------------------------------------

  /// Closed-form Mobius sum without boundary projection.
  Vector mobius_add_raw(const VectorRef& x, const VectorRef& y) const {
    check_dims(x, y, "mobius_add");
    const Scalar xy = x.dot(y), x2 = x.squaredNorm(), y2 = y.squaredNorm();
    const Scalar num_x = 1 + 2 * c_ * xy + c_ * y2;
    const Scalar num_y = 1 - c_ * x2;
    const Scalar den = 1 + 2 * c_ * xy + c_ * c_ * x2 * y2;
    return (num_x * x + num_y * y) / den;
  }

  Vector mobius_add(const VectorRef& x, const VectorRef& y) const {
    return project(mobius_add_raw(x, y));
  }

  /// Adjoint of mobius_add_raw: returns (dL/dx, dL/dy) given dL/d(out).
  std::pair<Vector, Vector> mobius_add_raw_vjp(const VectorRef& x, const VectorRef& y,
                                               const VectorRef& g) const {
    const Scalar xy = x.dot(y), x2 = x.squaredNorm(), y2 = y.squaredNorm();
    const Scalar alpha = 1 + 2 * c_ * xy + c_ * y2;
    const Scalar beta = 1 - c_ * x2;
    const Scalar den = 1 + 2 * c_ * xy + c_ * c_ * x2 * y2;
    const Vector out = (alpha * x + beta * y) / den;
    const Vector gn = g / den;
    const Scalar gn_x = gn.dot(x), gn_y = gn.dot(y);
    const Scalar s = g.dot(out) / den;  // -dL/dden
    Vector gx = alpha * gn + (2 * c_ * gn_x) * y - (2 * c_ * gn_y) * x;
    Vector gy = beta * gn + (2 * c_ * gn_x) * (x + y);
    gx -= s * (2 * c_ * y + 2 * c_ * c_ * y2 * x);
    gy -= s * (2 * c_ * x + 2 * c_ * c_ * x2 * y);
    return {std::move(gx), std::move(gy)};
  }

  std::pair<Vector, Vector> mobius_add_vjp(const VectorRef& x, const VectorRef& y,
                                           const VectorRef& g) const {
    const Vector raw = mobius_add_raw(x, y);
    return mobius_add_raw_vjp(x, y, project_vjp(raw, g));
  }

  // --- maps at the origin -----------------------------------------------------

  Vector expmap0(const VectorRef& u) const {
    const Scalar t = sqrt_c_ * u.norm();
    return project(detail::tanh_ratio(t).first * u);
  }

  Vector expmap0_vjp(const VectorRef& u, const VectorRef& g) const {
    const Scalar n = u.norm();
    const Scalar t = sqrt_c_ * n;
    const auto [f, df] = detail::tanh_ratio(t);
    const Vector raw = f * u;
    const Vector gr = project_vjp(raw, g);
    Vector gu = f * gr;
    if (n > 0) gu += (df * sqrt_c_ * gr.dot(u) / n) * u;
    return gu;
  }

  Vector logmap0(const VectorRef& x) const {
    const Scalar t = detail::clamp_unit(sqrt_c_ * x.norm());
    return detail::artanh_ratio(t).first * x;
  }

  Vector logmap0_vjp(const VectorRef& x, const VectorRef& g) const {
    const Scalar n = x.norm();
    const Scalar t = detail::clamp_unit(sqrt_c_ * n);
    const auto [h, dh] = detail::artanh_ratio(t);
    Vector gx = h * g;
    if (n > 0) gx += (dh * sqrt_c_ * g.dot(x) / n) * x;
    return gx;
  }

  // --- maps at an arbitrary point ---------------------------------------------

  /// exp_p(u) = p (+) tanh(sqrt(c) lambda_p ||u|| / 2) u / (sqrt(c) ||u||).
  Vector expmap(const VectorRef& p, const VectorRef& u) const {
    check_dims(p, u, "exp_map");
    const Scalar n = u.norm();
    if (n == 0) return project(p);
    const Scalar lam = lambda(p);
    const Scalar a = sqrt_c_ * lam * n / 2;
    const Vector w = (lam / 2) * detail::tanh_ratio(a).first * u;
    return project(mobius_add_raw(p, w));
  }

  std::pair<Vector, Vector> expmap_vjp(const VectorRef& p, const VectorRef& u,
                                       const VectorRef& g) const {
    const Scalar n = u.norm();
    const Scalar lam = lambda(p);
    const Scalar a = sqrt_c_ * lam * n / 2;
    const auto [f, df] = detail::tanh_ratio(a);
    const Scalar phi = lam / 2 * f;
    const Vector w = phi * u;
    const Vector raw = mobius_add_raw(p, w);
    auto [gp, gw] = mobius_add_raw_vjp(p, w, project_vjp(raw, g));
    const Scalar gw_u = gw.dot(u);
    Vector gu = phi * gw;
    if (n > 0) {
      const Scalar dphi_dn = lam / 2 * df * (sqrt_c_ * lam / 2);
      gu += (dphi_dn * gw_u / n) * u;
    }
    const Scalar dphi_dlam = f / 2 + lam / 2 * df * (sqrt_c_ * n / 2);
    // d lambda / dp = c lambda^2 p
    gp += (gw_u * dphi_dlam * c_ * lam * lam) * p;
    return {std::move(gp), std::move(gu)};
  }

  /// log_{p1}(p2) = (2 / (sqrt(c) lambda_{p1})) artanh(sqrt(c) ||m||) m / ||m||,
  /// m = (-p1) (+) p2.
  Vector logmap(const VectorRef& p1, const VectorRef& p2) const {
    check_dims(p1, p2, "log_map");
    const Vector m = mobius_add_raw(-p1, p2);
    const Scalar t = detail::clamp_unit(sqrt_c_ * m.norm());
    const Scalar kappa = 1 - c_ * p1.squaredNorm();
    return kappa * detail::artanh_ratio(t).first * m;
  }

  std::pair<Vector, Vector> logmap_vjp(const VectorRef& p1, const VectorRef& p2,
                                       const VectorRef& g) const {
    const Vector neg = -p1;
    const Vector m = mobius_add_raw(neg, p2);
    const Scalar n = m.norm();
    const Scalar t = detail::clamp_unit(sqrt_c_ * n);
    const auto [h, dh] = detail::artanh_ratio(t);
    const Scalar kappa = 1 - c_ * p1.squaredNorm();
    const Scalar g_m = g.dot(m);
    Vector gm = kappa * h * g;
    if (n > 0) gm += (kappa * dh * sqrt_c_ * g_m / n) * m;
    const Scalar g_kappa = h * g_m;
    auto [gneg, gp2] = mobius_add_raw_vjp(neg, p2, gm);
    Vector gp1 = -gneg - (2 * c_ * g_kappa) * p1;
    return {std::move(gp1), std::move(gp2)};
  }

  // --- distance -------------------------------------------------------------

  Scalar distance_sq(const VectorRef& p1, const VectorRef& p2) const {
    check_dims(p1, p2, "distance_sq");
    const Scalar t = detail::clamp_unit(sqrt_c_ * mobius_add_raw(-p1, p2).norm());
    const Scalar d = 2 / sqrt_c_ * std::atanh(t);
    return d * d;
  }

  std::pair<Vector, Vector> distance_sq_vjp(const VectorRef& p1, const VectorRef& p2,
                                            Scalar g) const {
    const Vector neg = -p1;
    const Vector m = mobius_add_raw(neg, p2);
    const Scalar n = m.norm();
    if (n == 0) return {Vector::Zero(p1.size()), Vector::Zero(p2.size())};
    const Scalar t = detail::clamp_unit(sqrt_c_ * n);
    const Scalar dd_dn = 8 * std::atanh(t) / (sqrt_c_ * (1 - t * t));
    const Vector gm = (g * dd_dn / n) * m;
    auto [gneg, gp2] = mobius_add_raw_vjp(neg, p2, gm);
    return {-gneg, std::move(gp2)};
  }

  // --- gyration and transport -------------------------------------------------

  /// gyr[a,b]u = -(a (+) b) (+) (a (+) (b (+) u)). The map is linear in u, so u
  /// is evaluated at a fixed small scale inside the ball and rescaled.
  Vector gyration(const VectorRef& a, const VectorRef& b, const VectorRef& u) const {
    check_dims(a, b, "gyration");
    check_dims(a, u, "gyration");
    const Scalar n = u.norm();
    if (n == 0) return Vector::Zero(u.size());
    const Scalar scale = Scalar(0.1) / (sqrt_c_ * n);
    const Vector us = scale * u;
    const Vector inner = mobius_add_raw(a, mobius_add_raw(b, us));
    const Vector ab = mobius_add_raw(a, b);
    return mobius_add_raw(-ab, inner) / scale;
  }

  /// PT_{x->y}(u) = gyr[y, -x](u) * lambda_x / lambda_y.
  Vector parallel_transport(const VectorRef& x, const VectorRef& y, const VectorRef& u) const {
    return gyration(y, -x, u) * (lambda(x) / lambda(y));
  }

  /// Adjoint with respect to u. Gyrations are orthogonal, so the transpose of
  /// gyr[y,-x] is gyr[-x,y].
  Vector parallel_transport_vjp(const VectorRef& x, const VectorRef& y, const VectorRef& g) const {
    return gyration(-x, y, g) * (lambda(x) / lambda(y));
  }

  // --- hyperboloid ------------------------------------------------------------

  Vector to_hyperboloid(const VectorRef& x) const {
    const Scalar k = 1 / c_;
    const Scalar s = x.squaredNorm();
    if (!(s < k)) throw DomainError("to_hyperboloid: point is not strictly inside the ball");
    Vector out(x.size() + 1);
    out(0) = (k + s) / (k - s);
    out.tail(x.size()) = (2 * std::sqrt(k) / (k - s)) * x;
    return out;
  }

  Vector to_hyperboloid_vjp(const VectorRef& x, const VectorRef& g) const {
    const Scalar k = 1 / c_;
    const Scalar s = x.squaredNorm();
    const Scalar den = k - s;
    const auto gr = g.tail(x.size());
    return (g(0) * 4 * k / (den * den)) * x +
           (2 * std::sqrt(k)) * (gr / den + (2 * x.dot(gr) / (den * den)) * x);
  }

 private:
  static void check_dims(const VectorRef& a, const VectorRef& b, const char* op) {
    if (a.size() != b.size()) {
      throw ContractError(std::string(op) + ": dimension mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
    }
  }

  Scalar c_;
  Scalar sqrt_c_;
  Scalar eps_;
};

// --- strong types ---------------------------------------------------------------

/// A point guaranteed to sit inside the margin of its ball.
template <typename Scalar = double>
class BallPoint {
 public:
  using Vector = typename PoincareBall<Scalar>::Vector;

  /// Projects `coords` into the ball (throws DomainError on non-finite input).
  BallPoint(const PoincareBall<Scalar>& ball, const Eigen::Ref<const Vector>& coords)
      : ball_(ball), coords_(ball.project(coords)) {}

  const PoincareBall<Scalar>& ball() const { return ball_; }
  const Vector& coords() const { return coords_; }
  Eigen::Index dim() const { return coords_.size(); }

 private:
  PoincareBall<Scalar> ball_;
  Vector coords_;
};

template <typename Scalar = double>
class TangentVector {
 public:
  using Vector = typename PoincareBall<Scalar>::Vector;

  TangentVector(BallPoint<Scalar> base, const Eigen::Ref<const Vector>& coords)
      : base_(std::move(base)), coords_(coords) {
    if (coords_.size() != base_.dim()) {
      throw ContractError("TangentVector: dimension differs from base point");
    }
    if (!coords_.allFinite()) throw DomainError("TangentVector: non-finite coordinates");
  }

  const BallPoint<Scalar>& base() const { return base_; }
  const Vector& coords() const { return coords_; }

 private:
  BallPoint<Scalar> base_;
  Vector coords_;
};

namespace detail {
template <typename Scalar>
void same_ball(const BallPoint<Scalar>& a, const BallPoint<Scalar>& b, const char* op) {
  if (!(a.ball() == b.ball())) throw ContractError(std::string(op) + ": points on different balls");
}
}  // namespace detail

template <typename Scalar>
BallPoint<Scalar> project_to_ball(const Eigen::Ref<const typename PoincareBall<Scalar>::Vector>& v,
                                  const PoincareBall<Scalar>& ball) {
  return BallPoint<Scalar>(ball, v);
}

template <typename Scalar>
BallPoint<Scalar> mobius_add(const BallPoint<Scalar>& x, const BallPoint<Scalar>& y) {
  detail::same_ball(x, y, "mobius_add");
  return BallPoint<Scalar>(x.ball(), x.ball().mobius_add(x.coords(), y.coords()));
}

template <typename Scalar>
Scalar distance_sq(const BallPoint<Scalar>& p1, const BallPoint<Scalar>& p2) {
  detail::same_ball(p1, p2, "distance_sq");
  return p1.ball().distance_sq(p1.coords(), p2.coords());
}

template <typename Scalar>
BallPoint<Scalar> exp_map(const TangentVector<Scalar>& u) {
  const auto& p = u.base();
  return BallPoint<Scalar>(p.ball(), p.ball().expmap(p.coords(), u.coords()));
}

template <typename Scalar>
TangentVector<Scalar> log_map(const BallPoint<Scalar>& p1, const BallPoint<Scalar>& p2) {
  detail::same_ball(p1, p2, "log_map");
  return TangentVector<Scalar>(p1, p1.ball().logmap(p1.coords(), p2.coords()));
}

template <typename Scalar>
TangentVector<Scalar> parallel_transport(const BallPoint<Scalar>& y, const TangentVector<Scalar>& u) {
  const auto& x = u.base();
  detail::same_ball(x, y, "parallel_transport");
  return TangentVector<Scalar>(y, x.ball().parallel_transport(x.coords(), y.coords(), u.coords()));
}

template <typename Scalar>
typename PoincareBall<Scalar>::Vector to_hyperboloid(const BallPoint<Scalar>& x) {
  return x.ball().to_hyperboloid(x.coords());
}

}  // namespace hydro::manifold

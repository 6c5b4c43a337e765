#pragma once

#include <tanglab/core.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace tanglab {

// Rotation number of the inner circle dynamics, in turns.
// Golden/Silver carry exact continued fractions; Decimal is the exact
// dyadic rational of the stored double; Quotients is an explicit finite
// continued fraction [0; a1, a2, ...].
enum class RotKind { Decimal, Golden, Silver, Quotients };

struct RotationNumber {
  RotKind kind{RotKind::Golden};
  double decimal{0};
  std::vector<long long> quotients;

  static RotationNumber golden() { return {RotKind::Golden, 0, {}}; }
  static RotationNumber silver() { return {RotKind::Silver, 0, {}}; }
  static RotationNumber from_value(double v) {
    return {RotKind::Decimal, v, {}};
  }
  static RotationNumber from_quotients(std::vector<long long> a) {
    return {RotKind::Quotients, 0, std::move(a)};
  }

  double value() const {
    switch (kind) {
      case RotKind::Golden:
        return (std::sqrt(5.0) - 1.0) / 2.0;
      case RotKind::Silver:
        return std::sqrt(2.0) - 1.0;
      case RotKind::Decimal:
        return decimal;
      case RotKind::Quotients: {
        long double v = 0;
        for (auto it = quotients.rbegin(); it != quotients.rend(); ++it) {
          if (*it <= 0) input_error("rotation quotients must be positive");
          v = 1.0L / (static_cast<long double>(*it) + v);
        }
        return static_cast<double>(v);
      }
    }
    return 0;
  }
};

// Unit-determinant block mixing the strong coordinates at the tangency
// transition; acts componentwise on (x_i, y_i) pairs.
template <class S>
struct HypBlockT {
  S a{1}, b{1}, c{1}, d{2};
  S det() const { return a * d - b * c; }
};
using HypBlock = HypBlockT<double>;

// Parameters of the annulus-times-saddle model family.
//
// T0 (the return to the inner annulus): twist step on (r, phi), strong
// contraction/expansion by lambda_ss, plus an exact coupling shear.
// T1 (the tangency transition): angle stretch by alpha, radial shear
// g(s) = mu + nu*s + beta*s^{ell+1}, strong block hyp.
template <class S>
struct ModelSpecT {
  int N{2};
  RotationNumber rho{RotationNumber::golden()};
  S alpha{3};
  S beta{1};
  int ell{2};
  S mu{0};
  S nu{0};
  S lambda_ss{S(0.4)};
  HypBlockT<S> hyp{};
  S phi_minus{0};
  S phi_plus{0};
  VecX<S> x_plus{VecX<S>::Zero(1)};
  VecX<S> y_minus{VecX<S>::Zero(1)};
  S couple{0};
  S inner_pert{0};
  int inner_m{3};
  S twist{1};
  S r_max{S(0.5)};
  S xy_max{2};
  S t1_radius{S(0.2)};

  int n_strong() const { return N - 1; }
};
using ModelSpec = ModelSpecT<double>;

template <class S>
void validate(const ModelSpecT<S>& m) {
  if (m.N < 2) input_error("ModelSpec.N must be at least 2");
  if (m.alpha == S(0)) input_error("ModelSpec.alpha must be nonzero");
  if (std::abs(std::abs(m.alpha) - S(1)) == S(0))
    input_error("ModelSpec.alpha must satisfy |alpha| != 1");
  if (m.ell != 1 && m.ell != 2)
    input_error("ModelSpec.ell must be 1 or 2");
  if (!(m.lambda_ss > S(0) && m.lambda_ss < S(1)))
    input_error("ModelSpec.lambda_ss must lie in (0,1)");
  if (std::abs(m.hyp.det() - S(1)) > S(1e-12))
    input_error("ModelSpec.hyp must have unit determinant (|det-1| <= 1e-12)");
  if (m.hyp.d == S(0))
    input_error("ModelSpec.hyp.d must be nonzero");
  if (m.x_plus.size() != m.N - 1)
    input_error("ModelSpec.x_plus must have length N-1");
  if (m.y_minus.size() != m.N - 1)
    input_error("ModelSpec.y_minus must have length N-1");
  if (m.inner_pert < S(0))
    input_error("ModelSpec.inner_pert must be nonnegative");
  if (m.inner_m < 1) input_error("ModelSpec.inner_m must be at least 1");
  if (!(m.r_max > S(0)) || !(m.xy_max > S(0)) || !(m.t1_radius > S(0)))
    input_error("ModelSpec domain radii must be positive");
  double rv = m.rho.value();
  if (!(rv > 0.0 && rv < 1.0))
    input_error("ModelSpec.rho must lie in (0,1)");
}

// Radial shear of the tangency transition.
template <class S>
S shear_g(const ModelSpecT<S>& m, S s) {
  return m.mu + m.nu * s + m.beta * ipow(s, m.ell + 1);
}
template <class S>
S shear_g_prime(const ModelSpecT<S>& m, S s) {
  return m.nu + S(m.ell + 1) * m.beta * ipow(s, m.ell);
}

// One step of the inner annulus map.
template <class S>
void inner_step(const ModelSpecT<S>& m, S& r, S& phi) {
  S xi = S(0);
  if (m.inner_pert != S(0))
    xi = m.inner_pert * ipow(r, m.inner_m) *
         std::sin(S(2) * S(M_PI) * phi);
  S phi1 = wrap_unit(phi + S(m.rho.value()) + m.twist * r);
  r += xi;
  phi = phi1;
}

// k-th iterate of the inner map. The unperturbed map is evaluated in
// closed form with extended precision on the angle sum, which is the
// reference semantics for large k.
template <class S>
void apply_inner(const ModelSpecT<S>& m, S& r, S& phi, long long k) {
  if (k < 0) input_error("apply_inner requires k >= 0");
  if (m.inner_pert == S(0)) {
    long double step = static_cast<long double>(m.rho.value()) +
                       static_cast<long double>(m.twist) *
                           static_cast<long double>(r);
    long double ph = static_cast<long double>(phi) +
                     static_cast<long double>(k) * step;
    phi = static_cast<S>(wrap_unit(ph));
    return;
  }
  for (long long i = 0; i < k; ++i) inner_step(m, r, phi);
}

template <class S>
bool in_T0_domain(const ModelSpecT<S>& m, const PhasePointT<S>& p) {
  return std::abs(p.r) <= m.r_max &&
         p.x.template lpNorm<Eigen::Infinity>() <= m.xy_max &&
         p.y.template lpNorm<Eigen::Infinity>() <= m.xy_max;
}

template <class S>
PhasePointT<S> apply_T0(const ModelSpecT<S>& m, const PhasePointT<S>& p) {
  PhasePointT<S> q = p;
  inner_step(m, q.r, q.phi);
  q.x *= m.lambda_ss;
  q.y /= m.lambda_ss;
  if (m.couple != S(0)) {
    const S ip = p.x.dot(p.y);  // invariant of the coupling flow
    q.phi = wrap_unit(q.phi + m.couple * ip);
    // The angle shift phi += c*(x.y) is symplectic only when paired with
    // x -> x*exp(-c*r), y -> y*exp(+c*r); the cross terms in the pullback
    // of dr^dphi + dx^dy cancel exactly for this orientation.
    const S e = std::exp(m.couple * q.r);
    q.x /= e;
    q.y *= e;
  }
  return q;
}

template <class S>
MatX<S> jacobian_T0(const ModelSpecT<S>& m, const PhasePointT<S>& p) {
  const int n = m.N - 1;
  const int dim = 2 * m.N;
  MatX<S> J = MatX<S>::Zero(dim, dim);
  S fr = S(1), fphi = S(0);
  if (m.inner_pert != S(0)) {
    const S sn = std::sin(S(2) * S(M_PI) * p.phi);
    const S cs = std::cos(S(2) * S(M_PI) * p.phi);
    fr += m.inner_pert * S(m.inner_m) * ipow(p.r, m.inner_m - 1) * sn;
    fphi = m.inner_pert * ipow(p.r, m.inner_m) * S(2) * S(M_PI) * cs;
  }
  J(0, 0) = fr;
  J(0, 1) = fphi;
  J(1, 0) = m.twist;
  J(1, 1) = S(1);
  const S lam = m.lambda_ss;
  if (m.couple == S(0)) {
    for (int i = 0; i < n; ++i) {
      J(2 + i, 2 + i) = lam;
      J(2 + n + i, 2 + n + i) = S(1) / lam;
    }
    return J;
  }
  const S c = m.couple;
  S r1 = p.r, phi1 = p.phi;
  inner_step(m, r1, phi1);
  const S e = std::exp(c * r1);
  for (int i = 0; i < n; ++i) {
    J(1, 2 + i) = c * p.y[i];
    J(1, 2 + n + i) = c * p.x[i];
    J(2 + i, 0) = -c * (lam * p.x[i] / e) * fr;
    J(2 + i, 1) = -c * (lam * p.x[i] / e) * fphi;
    J(2 + i, 2 + i) = lam / e;
    J(2 + n + i, 0) = c * (p.y[i] / lam) * e * fr;
    J(2 + n + i, 1) = c * (p.y[i] / lam) * e * fphi;
    J(2 + n + i, 2 + n + i) = e / lam;
  }
  return J;
}

template <class S>
PhasePointT<S> apply_T0_inverse(const ModelSpecT<S>& m,
                                const PhasePointT<S>& p) {
  PhasePointT<S> q = p;
  if (m.couple != S(0)) {
    const S ip = p.x.dot(p.y);
    q.phi = wrap_unit(q.phi - m.couple * ip);
    const S e = std::exp(m.couple * q.r);
    q.x *= e;
    q.y /= e;
  }
  q.x /= m.lambda_ss;
  q.y *= m.lambda_ss;
  if (m.inner_pert == S(0)) {
    q.phi = wrap_unit(q.phi - S(m.rho.value()) - m.twist * q.r);
    return q;
  }
  // Invert the perturbed inner step by fixed-point iteration.
  S r1 = q.r, phi1 = q.phi;
  S r = r1, phi = wrap_unit(phi1 - S(m.rho.value()) - m.twist * r1);
  for (int it = 0; it < 100; ++it) {
    S xi = m.inner_pert * ipow(r, m.inner_m) *
           std::sin(S(2) * S(M_PI) * phi);
    S rn = r1 - xi;
    S phin = wrap_unit(phi1 - S(m.rho.value()) - m.twist * rn);
    S change = std::abs(rn - r) + std::abs(mod0(phin - phi, S(1)));
    r = rn;
    phi = phin;
    if (change < S(1e-16)) break;
  }
  q.r = r;
  q.phi = phi;
  return q;
}

template <class S>
MatX<S> jacobian_T0_inverse(const ModelSpecT<S>& m, const PhasePointT<S>& p) {
  PhasePointT<S> pre = apply_T0_inverse(m, p);
  MatX<S> J = jacobian_T0(m, pre);
  return J.inverse();
}

template <class S>
bool in_T1_domain(const ModelSpecT<S>& m, const PhasePointT<S>& p) {
  const S w = mod0(p.phi - m.phi_minus, S(1));
  S dist = std::max(std::abs(p.r), std::abs(w));
  dist = std::max(dist, p.x.template lpNorm<Eigen::Infinity>());
  dist = std::max(
      dist, (p.y - m.y_minus).template lpNorm<Eigen::Infinity>());
  return dist <= m.t1_radius;
}

template <class S>
PhasePointT<S> apply_T1(const ModelSpecT<S>& m, const PhasePointT<S>& p) {
  const S w = mod0(p.phi - m.phi_minus, S(1));
  const S s = m.alpha * w;
  PhasePointT<S> q;
  q.r = p.r / m.alpha + shear_g(m, s);
  q.phi = wrap_unit(m.phi_plus + s);
  q.x = m.x_plus + m.hyp.a * p.x + m.hyp.b * (p.y - m.y_minus);
  q.y = m.hyp.c * p.x + m.hyp.d * (p.y - m.y_minus);
  return q;
}

template <class S>
MatX<S> jacobian_T1(const ModelSpecT<S>& m, const PhasePointT<S>& p) {
  const int n = m.N - 1;
  const int dim = 2 * m.N;
  const S w = mod0(p.phi - m.phi_minus, S(1));
  const S s = m.alpha * w;
  MatX<S> J = MatX<S>::Zero(dim, dim);
  J(0, 0) = S(1) / m.alpha;
  J(0, 1) = shear_g_prime(m, s) * m.alpha;
  J(1, 1) = m.alpha;
  for (int i = 0; i < n; ++i) {
    J(2 + i, 2 + i) = m.hyp.a;
    J(2 + i, 2 + n + i) = m.hyp.b;
    J(2 + n + i, 2 + i) = m.hyp.c;
    J(2 + n + i, 2 + n + i) = m.hyp.d;
  }
  return J;
}

template <class S>
PhasePointT<S> apply_T1_inverse(const ModelSpecT<S>& m,
                                const PhasePointT<S>& p) {
  const S s = mod0(p.phi - m.phi_plus, S(1));
  const S w = s / m.alpha;
  PhasePointT<S> q;
  q.r = m.alpha * (p.r - shear_g(m, s));
  q.phi = wrap_unit(m.phi_minus + w);
  VecX<S> dx = p.x - m.x_plus;
  q.x = m.hyp.d * dx - m.hyp.b * p.y;
  q.y = m.y_minus - m.hyp.c * dx + m.hyp.a * p.y;
  return q;
}

template <class S>
MatX<S> jacobian_T1_inverse(const ModelSpecT<S>& m, const PhasePointT<S>& p) {
  const int n = m.N - 1;
  const int dim = 2 * m.N;
  const S s = mod0(p.phi - m.phi_plus, S(1));
  MatX<S> J = MatX<S>::Zero(dim, dim);
  J(0, 0) = m.alpha;
  J(0, 1) = -m.alpha * shear_g_prime(m, s);
  J(1, 1) = S(1) / m.alpha;
  for (int i = 0; i < n; ++i) {
    J(2 + i, 2 + i) = m.hyp.d;
    J(2 + i, 2 + n + i) = -m.hyp.b;
    J(2 + n + i, 2 + i) = -m.hyp.c;
    J(2 + n + i, 2 + n + i) = m.hyp.a;
  }
  return J;
}

// Unfolding generators. Shear and Translate act on the exit radial line,
// AlphaScale rescales the exit angle chart, Rotate shifts the rotation
// number, Twist tilts the inner frequency in r. Each generator is an exact
// symplectic map, and its composition with the base map equals the map of
// the updated parameter set.
enum class PerturbKind { Shear, AlphaScale, Translate, Rotate, Twist };

struct PerturbationSpec {
  PerturbKind kind{PerturbKind::Shear};
  double eps1{0};
  double eps2{0};
};

template <class S>
PhasePointT<S> apply_perturbation(const ModelSpecT<S>& m,
                                  const PerturbationSpec& pert,
                                  const PhasePointT<S>& p) {
  PhasePointT<S> q = p;
  const S e1 = S(pert.eps1), e2 = S(pert.eps2);
  switch (pert.kind) {
    case PerturbKind::Shear:
    case PerturbKind::Translate: {
      const S w = mod0(p.phi - m.phi_plus, S(1));
      q.r += e1 + e2 * w;
      break;
    }
    case PerturbKind::AlphaScale: {
      const S w = mod0(p.phi - m.phi_plus, S(1));
      q.r = p.r * std::exp(e1);
      q.phi = wrap_unit(m.phi_plus + std::exp(-e1) * w);
      break;
    }
    case PerturbKind::Rotate:
      q.phi = wrap_unit(p.phi + e1);
      break;
    case PerturbKind::Twist:
      q.phi = wrap_unit(p.phi + e1 * p.r);
      break;
  }
  return q;
}

template <class S>
MatX<S> jacobian_perturbation(const ModelSpecT<S>& m,
                              const PerturbationSpec& pert,
                              const PhasePointT<S>& p) {
  (void)p;
  const int dim = 2 * m.N;
  MatX<S> J = MatX<S>::Identity(dim, dim);
  const S e1 = S(pert.eps1), e2 = S(pert.eps2);
  switch (pert.kind) {
    case PerturbKind::Shear:
    case PerturbKind::Translate:
      J(0, 1) = e2;
      break;
    case PerturbKind::AlphaScale:
      J(0, 0) = std::exp(e1);
      J(1, 1) = std::exp(-e1);
      break;
    case PerturbKind::Rotate:
      break;
    case PerturbKind::Twist:
      J(1, 0) = e1;
      break;
  }
  return J;
}

template <class S>
ModelSpecT<S> compose_perturbation(const ModelSpecT<S>& m,
                                   const PerturbationSpec& pert) {
  ModelSpecT<S> out = m;
  const S e1 = S(pert.eps1), e2 = S(pert.eps2);
  switch (pert.kind) {
    case PerturbKind::Shear:
    case PerturbKind::Translate:
      out.mu += e1;
      out.nu += e2;
      break;
    case PerturbKind::AlphaScale:
      out.alpha *= std::exp(-e1);
      out.mu *= std::exp(e1);
      out.nu *= std::exp(S(2) * e1);
      out.beta *= std::exp(S(m.ell + 2) * e1);
      break;
    case PerturbKind::Rotate:
      out.rho = RotationNumber::from_value(m.rho.value() + pert.eps1);
      break;
    case PerturbKind::Twist:
      out.twist += e1;
      break;
  }
  return out;
}

// Canonical symplectic form in (r, phi, x, y) coordinate order.
template <class S>
MatX<S> symplectic_form(int N) {
  const int n = N - 1;
  const int dim = 2 * N;
  MatX<S> W = MatX<S>::Zero(dim, dim);
  W(0, 1) = S(1);
  W(1, 0) = S(-1);
  for (int i = 0; i < n; ++i) {
    W(2 + i, 2 + n + i) = S(1);
    W(2 + n + i, 2 + i) = S(-1);
  }
  return W;
}

// Largest entry of J^T W J - W; zero for exactly symplectic maps.
template <class S>
S symplectic_defect(int N, const MatX<S>& J) {
  MatX<S> W = symplectic_form<S>(N);
  return ((J.transpose() * W * J - W).cwiseAbs()).maxCoeff();
}

// Rescaling charts at the two tangency anchors. The strong shear lines
// make the transition exactly block-diagonal in rescaled coordinates:
// the entry y-line is slanted by -(c/d)x, the exit x-line by (b/d)y.
template <class S>
ChartT<S> chart_minus(const ModelSpecT<S>& m, Scheme scheme, S delta) {
  ChartT<S> ch;
  ch.scheme = scheme;
  ch.anchor = Anchor::Minus;
  ch.delta = delta;
  ch.phi_anchor = m.phi_minus;
  ch.x_anchor = VecX<S>::Zero(m.N - 1);
  ch.y_anchor = m.y_minus;
  ch.s_r = VecX<S>::Zero(m.N - 1);
  ch.s_w = VecX<S>::Zero(m.N - 1);
  ch.s_ww = VecX<S>::Zero(m.N - 1);
  ch.s_mix = -m.hyp.c / m.hyp.d;
  return ch;
}

template <class S>
ChartT<S> chart_plus(const ModelSpecT<S>& m, Scheme scheme, S delta) {
  ChartT<S> ch;
  ch.scheme = scheme;
  ch.anchor = Anchor::Plus;
  ch.delta = delta;
  ch.phi_anchor = m.phi_plus;
  ch.x_anchor = m.x_plus;
  ch.y_anchor = VecX<S>::Zero(m.N - 1);
  ch.s_r = VecX<S>::Zero(m.N - 1);
  ch.s_w = VecX<S>::Zero(m.N - 1);
  ch.s_ww = VecX<S>::Zero(m.N - 1);
  ch.s_mix = m.hyp.b / m.hyp.d;
  return ch;
}

}  // namespace tanglab

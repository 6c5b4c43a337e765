#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace tanglab {

inline constexpr const char* kToolVersion = "0.1.0";

// Error taxonomy mirrored by the CLI exit codes:
//   Input -> 2, Certification -> 1, Solver -> 3.
enum class ErrorKind { Input, Certification, Solver };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind(kind) {}
  ErrorKind kind;
};

[[noreturn]] inline void input_error(const std::string& msg) {
  throw Error(ErrorKind::Input, msg);
}
[[noreturn]] inline void certification_error(const std::string& msg) {
  throw Error(ErrorKind::Certification, msg);
}
[[noreturn]] inline void solver_error(const std::string& msg) {
  throw Error(ErrorKind::Solver, msg);
}

template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Centered representative: a mod0 b lies in [-b/2, b/2).
template <class S>
S mod0(S a, S b) {
  S h = b / S(2);
  S t = a + h;
  S u = t - b * std::floor(t / b);
  if (u < S(0)) u += b;
  if (u >= b) u -= b;
  return u - h;
}

// Representative in [0, 1): angles on the circle are stored in turns.
template <class S>
S wrap_unit(S a) {
  S u = a - std::floor(a);
  if (u < S(0)) u += S(1);
  if (u >= S(1)) u -= S(1);
  return u;
}

// Integer power, valid for negative bases.
template <class S>
S ipow(S base, int n) {
  S out = S(1);
  for (int i = 0; i < n; ++i) out *= base;
  return out;
}

// Point of the annulus-times-saddle phase space.
// r: radial coordinate, phi: angle in turns, x/y: strong stable/unstable
// coordinates of dimension N-1 each.
template <class S>
struct PhasePointT {
  S r{0};
  S phi{0};
  VecX<S> x;
  VecX<S> y;

  static PhasePointT Zero(int n_strong) {
    PhasePointT p;
    p.x = VecX<S>::Zero(n_strong);
    p.y = VecX<S>::Zero(n_strong);
    return p;
  }
};
using PhasePoint = PhasePointT<double>;

// Point in the rescaled (blow-up) coordinates attached to a chart.
template <class S>
struct RescaledPointT {
  S R{0};
  S Phi{0};
  VecX<S> X;
  VecX<S> Y;

  static RescaledPointT Zero(int n_strong) {
    RescaledPointT p;
    p.X = VecX<S>::Zero(n_strong);
    p.Y = VecX<S>::Zero(n_strong);
    return p;
  }
};
using RescaledPoint = RescaledPointT<double>;

// Ifs: scales (delta^{5/2}, delta, delta^{11/4}) for (r, angle, strong).
// Cubic: scales (delta^3, delta, delta^{7/2}).
enum class Scheme { Ifs, Cubic };

// Minus: chart at the entry anchor (r=0, phi_minus, x=0, y_minus).
// Plus: chart at the exit anchor (r=0, phi_plus, x_plus, y=0).
enum class Anchor { Minus, Plus };

// Affine chart with a sheared strong coordinate.
//
// Minus chart:  r = central*R,  phi - phi_anchor = delta*Phi,  x = strong*X,
//               y - y_anchor = strong*Y + s_r*r + s_w*w + s_mix*x + s_ww*w^2
// Plus chart:   r = central*R,  phi - phi_anchor = delta*Phi,  y = strong*Y,
//               x - x_anchor = strong*X + s_r*r + s_w*w + s_mix*y + s_ww*w^2
// where w is the centered angle offset in turns.
template <class S>
struct ChartT {
  Scheme scheme{Scheme::Ifs};
  Anchor anchor{Anchor::Minus};
  S delta{0};
  S phi_anchor{0};
  VecX<S> x_anchor;
  VecX<S> y_anchor;
  VecX<S> s_r;
  VecX<S> s_w;
  VecX<S> s_ww;
  S s_mix{0};

  S central() const {
    return scheme == Scheme::Ifs ? std::pow(delta, S(2.5))
                                 : delta * delta * delta;
  }
  S strong() const {
    return scheme == Scheme::Ifs ? std::pow(delta, S(2.75))
                                 : std::pow(delta, S(3.5));
  }
};
using Chart = ChartT<double>;

template <class S>
RescaledPointT<S> to_rescaled(const ChartT<S>& ch, const PhasePointT<S>& p) {
  RescaledPointT<S> q;
  const S w = mod0(p.phi - ch.phi_anchor, S(1));
  const S cen = ch.central();
  const S str = ch.strong();
  q.R = p.r / cen;
  q.Phi = w / ch.delta;
  if (ch.anchor == Anchor::Minus) {
    q.X = p.x / str;
    q.Y = (p.y - ch.y_anchor - ch.s_r * p.r - ch.s_w * w - ch.s_ww * (w * w) -
           ch.s_mix * p.x) /
          str;
  } else {
    q.Y = p.y / str;
    q.X = (p.x - ch.x_anchor - ch.s_r * p.r - ch.s_w * w - ch.s_ww * (w * w) -
           ch.s_mix * p.y) /
          str;
  }
  return q;
}

template <class S>
PhasePointT<S> from_rescaled(const ChartT<S>& ch, const RescaledPointT<S>& q) {
  PhasePointT<S> p;
  const S cen = ch.central();
  const S str = ch.strong();
  const S w = ch.delta * q.Phi;
  p.r = cen * q.R;
  p.phi = wrap_unit(ch.phi_anchor + w);
  if (ch.anchor == Anchor::Minus) {
    p.x = str * q.X;
    p.y = ch.y_anchor + str * q.Y + ch.s_r * p.r + ch.s_w * w +
          ch.s_ww * (w * w) + ch.s_mix * p.x;
  } else {
    p.y = str * q.Y;
    p.x = ch.x_anchor + str * q.X + ch.s_r * p.r + ch.s_w * w +
          ch.s_ww * (w * w) + ch.s_mix * p.y;
  }
  return p;
}

// Centered box in rescaled coordinates; half-widths per axis group,
// strong coordinates measured componentwise.
struct Box {
  double hR{1};
  double hPhi{1};
  double hX{1};
  double hY{1};

  // Unit verification box.
  static Box Pi() { return Box{1, 1, 1, 1}; }
  // Angle axis narrowed to the covering width d.
  static Box Pi_d(double d) { return Box{1, d, 1, 1}; }
  // Strict subbox targeted by one covering step.
  static Box Pi_d_inner(double d, double kappa) {
    return Box{1 - kappa, d * (1 - kappa), 0.5, 1};
  }

  // Smallest slack over all faces; >0 means strictly inside.
  double margin(const RescaledPoint& q) const {
    double m = hR - std::abs(q.R);
    m = std::min(m, hPhi - std::abs(q.Phi));
    for (int i = 0; i < q.X.size(); ++i)
      m = std::min(m, hX - std::abs(q.X[i]));
    for (int i = 0; i < q.Y.size(); ++i)
      m = std::min(m, hY - std::abs(q.Y[i]));
    return m;
  }
  bool contains(const RescaledPoint& q, bool strict = false) const {
    double m = margin(q);
    return strict ? m > 0 : m >= 0;
  }
};

}  // namespace tanglab

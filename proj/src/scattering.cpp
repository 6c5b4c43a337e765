#include <tanglab/scattering.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

namespace tanglab {

namespace {

double wrap_pi(double x) {
  double y = std::fmod(x, M_PI);
  if (y < 0) y += M_PI;
  return y;
}

double axis_distance(double theta) {
  const double d0 = std::min(theta, M_PI - theta);
  const double d1 = std::abs(theta - M_PI / 2.0);
  return std::min(d0, d1);
}

}  // namespace

Eigen::Matrix2d ScatLinear::L() const {
  Eigen::Matrix2d m;
  m << b11, b12, b21, b22;
  return m;
}

ScatLinear ScatLinear::from(const Eigen::Matrix2d& L, double mu, double nu) {
  ScatLinear s;
  s.b11 = L(0, 0);
  s.b12 = L(0, 1);
  s.b21 = L(1, 0);
  s.b22 = L(1, 1);
  s.mu = mu;
  s.nu = nu;
  return s;
}

void validate(const ScatLinear& s) {
  const double det = s.b11 * s.b22 - s.b12 * s.b21;
  if (std::abs(det - 1.0) > 1e-12)
    input_error("ScatLinear.b11..b22: determinant must be 1 (got " +
                std::to_string(det) + ")");
}

double g0(const ScatLinear& s, double phi) {
  const double c = std::cos(phi), sn = std::sin(phi);
  const double u = s.b11 * c + s.b12 * sn;
  const double v = s.b21 * c + s.b22 * sn;
  return u * u + v * v;
}

ScatSpectrum scat_spectrum(const ScatLinear& s) {
  validate(s);
  const double T = s.b11 * s.b11 + s.b12 * s.b12 + s.b21 * s.b21 +
                   s.b22 * s.b22;
  const double P =
      0.5 * (s.b11 * s.b11 + s.b21 * s.b21 - s.b12 * s.b12 - s.b22 * s.b22);
  const double Q = s.b11 * s.b12 + s.b21 * s.b22;
  const double amp = std::hypot(P, Q);
  ScatSpectrum out;
  out.lambda = T / 2.0 + amp;
  out.phi_plus = wrap_pi(0.5 * std::atan2(Q, P));
  out.phi_minus = wrap_pi(out.phi_plus + M_PI / 2.0);
  return out;
}

bool c3_check(const ScatLinear& s, double tol) {
  return scat_spectrum(s).lambda > 1.0 + tol;
}

double normalize_rows(const ScatLinear& s) {
  if (!c3_check(s))
    input_error(
        "normalize_rows: the map is a rotation, rows cannot be separated");
  const ScatSpectrum sp = scat_spectrum(s);
  // Row norms of R L R^{-1} probe the form L L^T along orthogonal
  // directions; aligning the first row with its top eigenvector gives the
  // full spread lambda - 1/lambda.
  const Eigen::Matrix2d M = s.L() * s.L().transpose();
  const double Pp = 0.5 * (M(0, 0) - M(1, 1));
  const double Qp = M(0, 1);
  const double psi = 0.5 * std::atan2(Qp, Pp);
  const double theta = wrap_pi(-psi);
  const double ct = std::cos(theta), st = std::sin(theta);
  Eigen::Matrix2d R;
  R << ct, -st, st, ct;
  const Eigen::Matrix2d C = R * s.L() * R.transpose();
  const double gap = std::abs(C.row(0).squaredNorm() - C.row(1).squaredNorm());
  const double need = (sp.lambda - 1.0 / sp.lambda) / 4.0;
  if (gap < need)
    solver_error("normalize_rows: row separation fell below the spread bound");
  return theta;
}

TangencyRadii tangency_radii(const ScatLinear& s, double r) {
  if (!(r > 0.0) || r >= 0.1)
    input_error("tangency_radii: r must lie in (0, 0.1)");
  const ScatSpectrum sp = scat_spectrum(s);
  TangencyRadii out;
  out.degenerate = sp.lambda <= 1.0 + 1e-10;
  out.r_plus = sp.lambda * r;
  out.r_minus = r / sp.lambda;
  return out;
}

double tangency_radius_nl(const ScatLinear& s, double shear, double r,
                          bool maximize) {
  validate(s);
  if (!(r > 0.0)) input_error("tangency_radius_nl: r must be positive");
  auto value = [&](double phi) {
    const double rt = std::sqrt(2.0 * r);
    const double u = rt * std::cos(phi);
    const double v = rt * std::sin(phi) + shear * u * u;
    const double w1 = s.b11 * u + s.b12 * v;
    const double w2 = s.b21 * u + s.b22 * v;
    const double val = 0.5 * (w1 * w1 + w2 * w2);
    return maximize ? val : -val;
  };
  const int n = 1024;
  double best = -1e300, best_phi = 0;
  for (int i = 0; i < n; ++i) {
    const double phi = 2.0 * M_PI * static_cast<double>(i) / n;
    const double v = value(phi);
    if (v > best) {
      best = v;
      best_phi = phi;
    }
  }
  double a = best_phi - 2.0 * M_PI / n;
  double b = best_phi + 2.0 * M_PI / n;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = value(c), fd = value(d);
  for (int it = 0; it < 90; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = value(d);
    }
  }
  const double v = std::max(fc, fd);
  return maximize ? v : -v;
}

double radii_deviation_exponent(const ScatLinear& s, double shear,
                                const std::vector<double>& r_list) {
  const ScatSpectrum sp = scat_spectrum(s);
  std::vector<double> lx, ly;
  for (double r : r_list) {
    const double dev = std::abs(tangency_radius_nl(s, shear, r, true) -
                                sp.lambda * r);
    if (dev > 0) {
      lx.push_back(std::log(r));
      ly.push_back(std::log(dev));
    }
  }
  if (lx.size() < 2)
    input_error("radii_deviation_exponent: need at least two usable radii");
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

KamRadiiSet make_geometric_radii(double r_lo, double r_hi, double ratio,
                                 double c, double tau) {
  if (!(r_lo > 0) || !(r_hi > r_lo) || !(ratio > 1))
    input_error("make_geometric_radii: need 0 < r_lo < r_hi and ratio > 1");
  KamRadiiSet G;
  G.c = c;
  G.tau = tau;
  for (double r = r_lo; r <= r_hi * (1 + 1e-12); r *= ratio)
    G.radii.push_back(r);
  return G;
}

std::vector<double> hetero_chain(const KamRadiiSet& G, const ScatLinear& s,
                                 double r_start, double r_end, double eta) {
  if (G.radii.empty()) input_error("hetero_chain: empty radii set");
  for (size_t i = 0; i + 1 < G.radii.size(); ++i)
    if (!(G.radii[i] < G.radii[i + 1]))
      input_error("hetero_chain: radii must be strictly increasing");
  if (G.radii.front() <= 0)
    input_error("hetero_chain: radii must be positive");
  auto find_member = [&](double r, const char* name) -> size_t {
    for (size_t i = 0; i < G.radii.size(); ++i)
      if (std::abs(G.radii[i] - r) <= 1e-12 * std::max(1.0, std::abs(r)))
        return i;
    input_error(std::string("hetero_chain: ") + name +
                " is not a member of the radii set");
  };
  const size_t i0 = find_member(r_start, "r_start");
  const size_t i1 = find_member(r_end, "r_end");
  const ScatSpectrum sp = scat_spectrum(s);
  if (!(sp.lambda > 1))
    input_error("hetero_chain: the scattering map must expand (lambda > 1)");
  const double lo = (1.0 + eta) / sp.lambda;
  const double hi = sp.lambda * (1.0 - eta);
  if (i0 == i1) return {G.radii[i0]};
  // BFS, scanning candidate successors in increasing index so the first
  // chain found is the shortest and lexicographically smallest.
  std::vector<int> parent(G.radii.size(), -1);
  std::vector<int> depth(G.radii.size(), -1);
  std::deque<size_t> queue;
  depth[i0] = 0;
  queue.push_back(i0);
  while (!queue.empty()) {
    const size_t cur = queue.front();
    queue.pop_front();
    if (cur == i1) break;
    if (depth[cur] + 1 >= 64) continue;
    for (size_t nxt = 0; nxt < G.radii.size(); ++nxt) {
      if (depth[nxt] >= 0) continue;
      const double ratio = G.radii[nxt] / G.radii[cur];
      if (ratio > lo && ratio < hi) {
        depth[nxt] = depth[cur] + 1;
        parent[nxt] = static_cast<int>(cur);
        queue.push_back(nxt);
      }
    }
  }
  if (depth[i1] < 0)
    solver_error("hetero_chain: no chain of length <= 64 connects the radii");
  std::vector<double> chain;
  for (int at = static_cast<int>(i1); at >= 0; at = parent[at])
    chain.push_back(G.radii[static_cast<size_t>(at)]);
  std::reverse(chain.begin(), chain.end());
  return chain;
}

ConnectResult connect_saddle_center(const ScatLinear& s, double r_target) {
  validate(s);
  if (!(r_target > 0) || !(r_target < 0.01))
    input_error("connect_saddle_center: r_target must lie in (0, 0.01)");
  const double T = s.b11 * s.b11 + s.b12 * s.b12 + s.b21 * s.b21 +
                   s.b22 * s.b22;
  if (!(T - 2.0 > 1e-12))
    input_error(
        "connect_saddle_center: infeasible, tr(L^T L) must exceed 2");
  // Forward radius r^u = r_target is automatic; matching the backward
  // radius reduces to A cos 2t + B sin 2t = C below.
  const double A =
      0.5 * (s.b22 * s.b22 + s.b21 * s.b21 - s.b12 * s.b12 - s.b11 * s.b11);
  const double B = -(s.b12 * s.b22 + s.b21 * s.b11);
  const double C = 1.0 - T / 2.0;
  const double amp = std::hypot(A, B);
  if (amp < std::abs(C))
    input_error("connect_saddle_center: no direction matches the radii");
  const double gamma = std::atan2(B, A);
  const double dlt = std::acos(std::clamp(C / amp, -1.0, 1.0));
  const double cand[2] = {wrap_pi((gamma + dlt) / 2.0),
                          wrap_pi((gamma - dlt) / 2.0)};
  double theta = cand[0];
  if (axis_distance(cand[1]) > axis_distance(theta) + 1e-15 ||
      (std::abs(axis_distance(cand[1]) - axis_distance(theta)) <= 1e-15 &&
       cand[1] < theta))
    theta = cand[1];
  ConnectResult out;
  out.theta = theta;
  const double rt = std::sqrt(2.0 * r_target);
  out.mu = rt * std::cos(theta);
  out.nu = rt * std::sin(theta);
  const double w1 = s.b22 * out.mu - s.b12 * out.nu;
  const double w2 = -s.b21 * out.mu + s.b11 * out.nu;
  const double r_s = 0.5 * (w1 * w1 + w2 * w2);
  out.residual = std::abs(r_s - r_target);
  return out;
}

PairRadii pair_radii_two_quadratics(const KamRadiiSet& G_plus,
                                    const KamRadiiSet& G_minus, double alpha,
                                    double mu_hint) {
  if (alpha == 0) input_error("pair_radii: alpha must be nonzero");
  if (G_plus.radii.empty() || G_minus.radii.empty())
    input_error("pair_radii: empty radii set");
  for (double r : G_plus.radii)
    if (!(r > 0)) input_error("pair_radii: G_plus must be positive");
  for (double r : G_minus.radii)
    if (!(r < 0)) input_error("pair_radii: G_minus must be negative");
  const double tol = 1e-3;
  bool found = false;
  PairRadii best;
  double best_rank = 1e300;
  for (double rp : G_plus.radii) {
    // target entry of G_minus for this r+
    const double target = alpha > 0 ? -alpha * rp : alpha * rp;
    double rm = G_minus.radii.front();
    double gap = std::abs(rm - target);
    for (double cand : G_minus.radii) {
      const double g2 = std::abs(cand - target);
      if (g2 < gap) {
        gap = g2;
        rm = cand;
      }
    }
    const double resid = alpha > 0 ? std::abs(rp + rm / alpha)
                                   : std::abs(rp - rm / alpha);
    if (resid <= tol * rp) {
      const double mu = alpha > 0 ? rp : 0.0;
      const double rank = std::abs(mu - mu_hint);
      if (!found || rank < best_rank) {
        found = true;
        best_rank = rank;
        best.r_plus = rp;
        best.r_minus = rm;
        best.mu = mu;
      }
    }
  }
  if (!found)
    solver_error("pair_radii: no matching pair within 0.1% on these grids");
  return best;
}

CubicTangency cubic_from_two_quadratics(double B, std::optional<long long> k) {
  if (B == 0)
    input_error("cubic_from_two_quadratics: B = 0 is degenerate");
  CubicTangency out;
  const double Phi = (std::cbrt(-B) - 1.0) / 2.0;
  const double den = 1.0 + 2.0 * Phi;
  double mu1 = -((1.0 + B) * Phi + 3.0 * Phi * Phi + 2.0 * Phi * Phi * Phi) /
               den;
  double mu2 = -(B * mu1 + mu1 * mu1 + 2.0 * mu1 * Phi +
                 (1.0 + B + 2.0 * mu1) * Phi * Phi +
                 2.0 * Phi * Phi * Phi + Phi * Phi * Phi * Phi);
  double P = Phi;
  if (k) {
    if (*k < 1) input_error("cubic_from_two_quadratics: k must be positive");
    // The finite-k system keeps the limit polynomials and adds an
    // explicit 1/k forcing standing in for the bounded remainder.
    const double eps = 1.0 / static_cast<double>(*k);
    Eigen::Vector3d z(P, mu1, mu2);
    auto F = [&](const Eigen::Vector3d& v) {
      const double ph = v[0], m1 = v[1], m2 = v[2];
      Eigen::Vector3d f;
      f[0] = m2 + B * m1 + m1 * m1 + 2.0 * m1 * ph +
             (1.0 + B + 2.0 * m1) * ph * ph + 2.0 * ph * ph * ph +
             ph * ph * ph * ph + eps;
      f[1] = m1 + (1.0 + B + 2.0 * m1) * ph + 3.0 * ph * ph +
             2.0 * ph * ph * ph + eps;
      f[2] = 1.0 + B + 2.0 * m1 + 6.0 * ph + 6.0 * ph * ph + eps;
      return f;
    };
    const double ftol = 1e-13 * std::max(1.0, std::abs(B));
    int it = 0;
    for (it = 0; it < 60; ++it) {
      Eigen::Vector3d f = F(z);
      if (f.lpNorm<Eigen::Infinity>() < ftol) break;
      const double ph = z[0], m1 = z[1];
      Eigen::Matrix3d Jm;
      Jm << 2.0 * m1 + 2.0 * (1.0 + B + 2.0 * m1) * ph +
                6.0 * ph * ph + 4.0 * ph * ph * ph,
          B + 2.0 * m1 + 2.0 * ph + 2.0 * ph * ph, 1.0,
          (1.0 + B + 2.0 * m1) + 6.0 * ph + 6.0 * ph * ph, 1.0 + 2.0 * ph,
          0.0, 6.0 + 12.0 * ph, 2.0, 0.0;
      z -= Jm.fullPivLu().solve(f);
    }
    if (F(z).lpNorm<Eigen::Infinity>() >= ftol)
      solver_error("cubic_from_two_quadratics: refinement diverged");
    P = z[0];
    mu1 = z[1];
    mu2 = z[2];
    out.iters = it;
  }
  out.Phi_t = P;
  out.mu1 = mu1;
  out.mu2 = mu2;
  const double cube = (2.0 * P + 1.0) * (2.0 * P + 1.0) * (2.0 * P + 1.0);
  out.root_residual = std::abs(cube + B);
  out.genericity = 1.0 + 2.0 * P;
  if (std::abs(out.genericity) < 1e-10)
    certification_error(
        "cubic_from_two_quadratics: genericity 1 + 2 Phi vanished");
  return out;
}

SecondaryCubic secondary_cubic_params(double b, double a12, long long k) {
  if (b == 0 || a12 == 0)
    input_error("secondary_cubic_params: b and a12 must be nonzero");
  if (k < 10) input_error("secondary_cubic_params: k must be at least 10");
  SecondaryCubic out;
  const double kd = static_cast<double>(k);
  out.mu_order = 1.0 / (kd * kd);
  out.nu = -b * b / kd;
  out.alpha_new = -kd / (b * a12);
  return out;
}

SecondaryCubicSolve secondary_cubic_solve(double alpha, double beta,
                                          double m12, double m22,
                                          double Theta, long long k) {
  if (alpha == 0 || beta == 0 || !(m12 > 0))
    input_error(
        "secondary_cubic_solve: need alpha, beta nonzero and m12 > 0");
  if (k < 10) input_error("secondary_cubic_solve: k must be at least 10");
  const double D = alpha * (m22 + static_cast<double>(k) * m12);
  if (D == 0) input_error("secondary_cubic_solve: degenerate slope m22 + k m12");
  SecondaryCubicSolve out;
  // Seeds from the leading-order solution at s = 0.
  double w = -Theta / (m22 + static_cast<double>(k) * m12);
  double nu = -m12 / (alpha * D);
  double mu = -m12 * w / alpha;
  auto system = [&](double wv, double muv, double nuv) {
    const double sv = alpha * (Theta + (m22 + static_cast<double>(k) * m12) *
                                           wv);
    Eigen::Vector3d f;
    f[0] = muv + m12 * wv / alpha + nuv * sv + beta * sv * sv * sv;
    f[1] = m12 / alpha + (nuv + 3.0 * beta * sv * sv) * D;
    f[2] = 6.0 * beta * sv * D * D;
    return std::pair<Eigen::Vector3d, double>(f, sv);
  };
  int it = 0;
  for (it = 0; it < 50; ++it) {
    auto [f, sv] = system(w, mu, nu);
    if (f.lpNorm<Eigen::Infinity>() < 1e-14 * std::max(1.0, std::abs(D)))
      break;
    Eigen::Matrix3d Jm;
    Jm << f[1], 1.0, sv,                       // d f0 / d(w, mu, nu)
        6.0 * beta * sv * D * D, 0.0, D,       // d f1
        6.0 * beta * D * D * D, 0.0, 0.0;      // d f2
    Eigen::Vector3d step = Jm.fullPivLu().solve(f);
    w -= step[0];
    mu -= step[1];
    nu -= step[2];
  }
  auto [f, sv] = system(w, mu, nu);
  (void)sv;
  if (f.lpNorm<Eigen::Infinity>() >= 1e-12 * std::max(1.0, std::abs(D)))
    solver_error("secondary_cubic_solve: Newton did not converge");
  out.w0 = w;
  out.mu = mu;
  out.nu = nu;
  out.nu_leading = -m12 / (alpha * alpha * static_cast<double>(k));
  out.iters = it;
  return out;
}

double unfold_two_tangencies_det(double lambda0, double A, double r_star) {
  if (!(lambda0 > 1))
    input_error("unfold_two_tangencies_det: lambda0 must exceed 1");
  if (A == 0) input_error("unfold_two_tangencies_det: A must be nonzero");
  if (!(r_star > 0))
    input_error("unfold_two_tangencies_det: r_star must be positive");
  const double ratio = (lambda0 - 1.0) / lambda0;
  return -ratio * ratio * A * r_star;
}

Eigen::Matrix2d random_shear_symplectic(std::mt19937_64& rng, int n_factors) {
  std::uniform_real_distribution<double> uni(-1.5, 1.5);
  Eigen::Matrix2d M = Eigen::Matrix2d::Identity();
  for (int i = 0; i < n_factors; ++i) {
    Eigen::Matrix2d S = Eigen::Matrix2d::Identity();
    if (i % 2 == 0)
      S(0, 1) = uni(rng);
    else
      S(1, 0) = uni(rng);
    M = (S * M).eval();
  }
  return M;
}

}  // namespace tanglab

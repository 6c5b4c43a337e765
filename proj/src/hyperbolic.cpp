#include <tanglab/hyperbolic.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace tanglab {

namespace {

double wide_norm(ConeKind kind, const Eigen::VectorXd& v, int n) {
  const double dR = std::abs(v[0]);
  const double dPhi = std::abs(v[1]);
  const double dX = v.segment(2, n).norm();
  const double dY = v.segment(2 + n, n).norm();
  switch (kind) {
    case ConeKind::U:
      return dPhi + dY;
    case ConeKind::UU:
      return dY;
    case ConeKind::S:
      return dR + dX;
    case ConeKind::SS:
      return dX;
  }
  return 0;
}

double narrow_norm(ConeKind kind, const Eigen::VectorXd& v, int n) {
  const double dR = std::abs(v[0]);
  const double dPhi = std::abs(v[1]);
  const double dX = v.segment(2, n).norm();
  const double dY = v.segment(2 + n, n).norm();
  switch (kind) {
    case ConeKind::U:
      return std::max(dR, dX);
    case ConeKind::UU:
      return std::max({dR, dPhi, dX});
    case ConeKind::S:
      return std::max(dPhi, dY);
    case ConeKind::SS:
      return std::max({dR, dPhi, dY});
  }
  return 0;
}

// Signed log-scale scalar for overflow-free 2x2 products.
struct SL {
  int s{0};        // sign in {-1, 0, 1}
  double l{-1e300};  // log magnitude

  static SL from(double v) {
    if (v == 0.0) return {0, -1e300};
    return {v > 0 ? 1 : -1, std::log(std::abs(v))};
  }
  static SL from_log(int sign, double lg) { return {sign, lg}; }
  double value() const { return s == 0 ? 0.0 : s * std::exp(l); }
};

SL sl_mul(SL a, SL b) {
  if (a.s == 0 || b.s == 0) return {0, -1e300};
  return {a.s * b.s, a.l + b.l};
}

SL sl_add(SL a, SL b) {
  if (a.s == 0) return b;
  if (b.s == 0) return a;
  double L = std::max(a.l, b.l);
  double v = a.s * std::exp(a.l - L) + b.s * std::exp(b.l - L);
  if (v == 0.0) return {0, -1e300};
  return {v > 0 ? 1 : -1, L + std::log(std::abs(v))};
}

struct LogMat2 {
  SL m[2][2];
};

LogMat2 logmat_mul(const LogMat2& A, const LogMat2& B) {
  LogMat2 C;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      C.m[i][j] =
          sl_add(sl_mul(A.m[i][0], B.m[0][j]), sl_mul(A.m[i][1], B.m[1][j]));
  return C;
}

// Log-moduli of a 2x2 with unit determinant.
std::pair<double, double> logmat_moduli(const LogMat2& A) {
  SL tr = sl_add(A.m[0][0], A.m[1][1]);
  if (tr.s != 0 && tr.l > 40.0) {
    // |eig| = |tr| (1 + O(e^{-2 l})); the cofactor eigenvalue is 1/|tr|.
    return {tr.l, -tr.l};
  }
  double a = A.m[0][0].value(), b = A.m[0][1].value();
  double c = A.m[1][0].value(), d = A.m[1][1].value();
  double t = a + d, det = a * d - b * c;
  double disc = t * t - 4.0 * det;
  double m1, m2;
  if (disc >= 0) {
    double r1 = (t + std::sqrt(disc)) / 2.0;
    double r2 = (t - std::sqrt(disc)) / 2.0;
    m1 = std::abs(r1);
    m2 = std::abs(r2);
  } else {
    m1 = m2 = std::sqrt(std::abs(det));
  }
  if (m1 < m2) std::swap(m1, m2);
  return {std::log(std::max(m1, 1e-300)), std::log(std::max(m2, 1e-300))};
}

// Factored forward derivative of one rescaled return at a point of the
// decoupled family. The central block is finite; the strong block of
// each (X_i, Y_i) pair is applied with explicit scale factors so that a
// clamped lambda^k or an overflowing lambda^{-k} never poisons a zero
// component.
struct ReturnDeriv {
  Eigen::Matrix2d central;
  double lamk{0};
  double log_inv_lamk{0};
  double a{0}, b{0}, c{0}, d{1};
};

ReturnDeriv make_return_deriv(const ReturnFamily& fam, long long k,
                              double Phi_entry) {
  const ModelSpec& m = fam.m;
  const Chart& ch = fam.entry_chart;
  const double cen = ch.central();
  const double dlt = fam.delta;
  const double s = m.alpha * dlt * Phi_entry;
  const double gp = shear_g_prime(m, s);
  ReturnDeriv f;
  f.central(0, 0) = 1.0 / m.alpha;
  f.central(0, 1) = gp * m.alpha * dlt / cen;
  f.central(1, 0) = static_cast<double>(k) * m.twist * cen / (m.alpha * dlt);
  f.central(1, 1) = m.alpha * (1.0 + static_cast<double>(k) * m.twist * gp);
  f.lamk = std::pow(m.lambda_ss, static_cast<double>(k));
  if (f.lamk < 1e-300) f.lamk = 0.0;
  f.log_inv_lamk = static_cast<double>(k) * std::log(1.0 / m.lambda_ss);
  f.a = m.hyp.a;
  f.b = m.hyp.b;
  f.c = m.hyp.c;
  f.d = m.hyp.d;
  return f;
}

double inv_lamk_value(const ReturnDeriv& f) {
  return std::exp(f.log_inv_lamk);  // +inf for very long chains
}

Eigen::VectorXd apply_forward(const ReturnDeriv& f, const Eigen::VectorXd& v,
                              int n) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(v.size());
  w.head<2>() = f.central * v.head<2>();
  const double inv = inv_lamk_value(f);
  for (int i = 0; i < n; ++i) {
    const double dX = v[2 + i], dY = v[2 + n + i];
    const double dXo = f.lamk * (dX / f.d + f.b * dY);
    const double grow = dY == 0.0 ? 0.0 : f.d * dY * inv;
    w[2 + i] = dXo;
    w[2 + n + i] = grow + (f.c / f.d) * dXo;
  }
  return w;
}

Eigen::VectorXd apply_backward(const ReturnDeriv& f, const Eigen::VectorXd& w,
                               int n) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(w.size());
  const Eigen::Matrix2d C = f.central;
  const double det = C(0, 0) * C(1, 1) - C(0, 1) * C(1, 0);
  v[0] = (C(1, 1) * w[0] - C(0, 1) * w[1]) / det;
  v[1] = (-C(1, 0) * w[0] + C(0, 0) * w[1]) / det;
  const double inv = inv_lamk_value(f);
  for (int i = 0; i < n; ++i) {
    const double dXb = w[2 + i], dYb = w[2 + n + i];
    const double dY = f.lamk * (dYb - (f.c / f.d) * dXb) / f.d;
    const double shrunk = dXb == 0.0 ? 0.0 : f.d * dXb * inv;
    v[2 + n + i] = dY;
    v[2 + i] = shrunk - f.d * f.b * dY;
  }
  return v;
}

// Strong-pair forward block of one return in log scale:
//   [[ lam^k/d,            lam^k b                ],
//    [ c lam^k / d^2,      lam^{-k} d + (c/d) lam^k b ]]
LogMat2 strong_forward_logmat(const ReturnDeriv& f) {
  const double lk = -f.log_inv_lamk;  // log(lam^k)
  LogMat2 M;
  auto term = [](double coef, double lg) {
    if (coef == 0.0) return SL{0, -1e300};
    return SL::from_log(coef > 0 ? 1 : -1, lg + std::log(std::abs(coef)));
  };
  M.m[0][0] = term(1.0 / f.d, lk);
  M.m[0][1] = term(f.b, lk);
  M.m[1][0] = term(f.c / (f.d * f.d), lk);
  M.m[1][1] = sl_add(term(f.d, f.log_inv_lamk), term(f.c * f.b / f.d, lk));
  return M;
}

// Full-matrix forward derivative (chart-conjugated) for coupled models.
Eigen::MatrixXd forward_matrix(const ReturnFamily& fam, long long k,
                               const PhasePoint& entry) {
  const ModelSpec& m = fam.m;
  const int n = m.N - 1;
  const int dim = 2 * m.N;
  const Chart& ch = fam.entry_chart;
  const double cen = ch.central();
  const double str = ch.strong();
  Eigen::MatrixXd Pin = Eigen::MatrixXd::Zero(dim, dim);
  Pin(0, 0) = cen;
  Pin(1, 1) = fam.delta;
  for (int i = 0; i < n; ++i) {
    Pin(2 + i, 2 + i) = str;
    Pin(2 + n + i, 2 + n + i) = str;
    Pin(2 + n + i, 2 + i) = ch.s_mix * str;
  }
  Eigen::MatrixXd Pout = Eigen::MatrixXd::Zero(dim, dim);
  Pout(0, 0) = 1.0 / cen;
  Pout(1, 1) = 1.0 / fam.delta;
  for (int i = 0; i < n; ++i) {
    Pout(2 + i, 2 + i) = 1.0 / str;
    Pout(2 + n + i, 2 + n + i) = 1.0 / str;
    Pout(2 + n + i, 2 + i) = -ch.s_mix / str;
  }
  Eigen::MatrixXd J = jacobian_T1(m, entry);
  PhasePoint p = apply_T1(m, entry);
  for (long long j = 0; j < k; ++j) {
    J = (jacobian_T0(m, p) * J).eval();
    p = apply_T0(m, p);
  }
  return Pout * J * Pin;
}

void record_witness(ConeReport& rep, long long k, double R, double Phi,
                    ConeKind kind, double margin) {
  if (rep.witnesses.size() < 8) {
    rep.witnesses.push_back({k, R, Phi, kind, margin});
    return;
  }
  auto worst = std::max_element(
      rep.witnesses.begin(), rep.witnesses.end(),
      [](const ConeWitness& a, const ConeWitness& b) {
        return a.margin < b.margin;
      });
  if (margin < worst->margin) *worst = {k, R, Phi, kind, margin};
}

// Central 2x2 of the rescaled return at X = Ybar = 0.
Eigen::Vector2d central_F(const ReturnFamily& fam, long long k,
                          const Eigen::Vector2d& z) {
  const int n = fam.m.N - 1;
  CrossResult cr = cross_return(fam, k, z[0], z[1], Eigen::VectorXd::Zero(n),
                                Eigen::VectorXd::Zero(n), false);
  return {cr.out.R, cr.out.Phi};
}

Eigen::Matrix2d central_JF(const ReturnFamily& fam, long long k,
                           const Eigen::Vector2d& z) {
  const int n = fam.m.N - 1;
  CrossResult cr = cross_return(fam, k, z[0], z[1], Eigen::VectorXd::Zero(n),
                                Eigen::VectorXd::Zero(n), true);
  return cr.jac.topLeftCorner<2, 2>();
}

Eigen::Vector2d central_Finv(const ReturnFamily& fam, long long k,
                             const Eigen::Vector2d& zbar) {
  const ModelSpec& m = fam.m;
  const double A = fam.rset.A_of(k);
  Eigen::Vector2d z;
  z[1] = (zbar[1] - A) / m.alpha;
  const double scale =
      fam.scheme == Scheme::Cubic ? 1.0 : std::sqrt(fam.delta);
  z[0] = m.alpha *
         (zbar[0] - m.beta * ipow(m.alpha, 3) * scale * ipow(z[1], 3));
  for (int it = 0; it < 50; ++it) {
    Eigen::Vector2d r = central_F(fam, k, z) - zbar;
    if (r.lpNorm<Eigen::Infinity>() < 1e-14) break;
    Eigen::Matrix2d J = central_JF(fam, k, z);
    z -= J.inverse() * r;
  }
  return z;
}

// Real roots of c3 t^3 + c2 t^2 + c1 t + c0.
std::vector<double> cubic_real_roots(const std::array<double, 4>& c) {
  std::vector<double> roots;
  const double c3 = c[3];
  if (std::abs(c3) < 1e-300) {
    // quadratic fallback
    const double a = c[2], b = c[1], cc = c[0];
    if (std::abs(a) < 1e-300) {
      if (std::abs(b) > 1e-300) roots.push_back(-cc / b);
      return roots;
    }
    const double disc = b * b - 4 * a * cc;
    if (disc >= 0) {
      roots.push_back((-b + std::sqrt(disc)) / (2 * a));
      roots.push_back((-b - std::sqrt(disc)) / (2 * a));
    }
    return roots;
  }
  const double p2 = c[2] / c3, p1 = c[1] / c3, p0 = c[0] / c3;
  // depressed cubic t = u - p2/3: u^3 + p u + q
  const double p = p1 - p2 * p2 / 3.0;
  const double q = 2.0 * p2 * p2 * p2 / 27.0 - p2 * p1 / 3.0 + p0;
  const double shift = -p2 / 3.0;
  const double disc = q * q / 4.0 + p * p * p / 27.0;
  if (disc > 0) {
    const double sq = std::sqrt(disc);
    const double u = std::cbrt(-q / 2.0 + sq) + std::cbrt(-q / 2.0 - sq);
    roots.push_back(u + shift);
  } else if (disc == 0) {
    const double u = std::cbrt(-q / 2.0);
    roots.push_back(2 * u + shift);
    roots.push_back(-u + shift);
  } else {
    const double rr = std::sqrt(-p * p * p / 27.0);
    const double phi = std::acos(std::clamp(-q / (2.0 * rr), -1.0, 1.0));
    const double mag = 2.0 * std::sqrt(-p / 3.0);
    for (int i = 0; i < 3; ++i)
      roots.push_back(mag * std::cos((phi + 2.0 * M_PI * i) / 3.0) + shift);
  }
  return roots;
}

// Least-squares cubic fit through (t_i, v_i).
std::array<double, 4> fit_cubic(const Eigen::VectorXd& t,
                                const Eigen::VectorXd& v, double* rms) {
  const Eigen::Index m = t.size();
  Eigen::MatrixXd V(m, 4);
  for (Eigen::Index i = 0; i < m; ++i) {
    V(i, 0) = 1.0;
    V(i, 1) = t[i];
    V(i, 2) = t[i] * t[i];
    V(i, 3) = t[i] * t[i] * t[i];
  }
  Eigen::Vector4d sol = V.colPivHouseholderQr().solve(v);
  if (rms) *rms = std::sqrt((V * sol - v).squaredNorm() /
                            static_cast<double>(m));
  return {sol[0], sol[1], sol[2], sol[3]};
}

// Sorted-by-node resample of a graph onto uniform nodes in [lo, hi].
void resample_graph(std::vector<std::pair<double, double>>& pts, double lo,
                    double hi, int n_nodes) {
  std::sort(pts.begin(), pts.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<size_t>(n_nodes));
  size_t j = 0;
  for (int i = 0; i < n_nodes; ++i) {
    const double t =
        lo + (hi - lo) * static_cast<double>(i) / (n_nodes - 1);
    while (j + 1 < pts.size() && pts[j + 1].first < t) ++j;
    const size_t j2 = std::min(j + 1, pts.size() - 1);
    const double t0 = pts[j].first, t1 = pts[j2].first;
    const double v0 = pts[j].second, v1 = pts[j2].second;
    const double u = t1 > t0 ? (t - t0) / (t1 - t0) : 0.0;
    out.emplace_back(t, v0 + u * (v1 - v0));
  }
  pts.swap(out);
}

ManifoldGraph build_graph(const ReturnFamily& fam, long long k, char side,
                          int n_nodes, int iters) {
  FixedPointResult fp = rescaled_fixed_point(fam, k);
  Eigen::Vector2d z_star(fp.R, fp.Phi);
  Eigen::Matrix2d J = central_JF(fam, k, z_star);
  Eigen::EigenSolver<Eigen::Matrix2d> es(J);
  int iu = std::abs(es.eigenvalues()[0]) > std::abs(es.eigenvalues()[1]) ? 0
                                                                         : 1;
  const int want = side == 'u' ? iu : 1 - iu;
  Eigen::Vector2d dir = es.eigenvectors().col(want).real().normalized();
  // graph coordinate: Phi for the unstable side, R for the stable side
  const int ci = side == 'u' ? 1 : 0;  // independent coordinate index
  const int vi = 1 - ci;
  const double center = z_star[ci];
  const double lo = center - 0.9, hi = center + 0.9;
  std::vector<std::pair<double, double>> pts;
  const int n_seed = 257;
  for (int i = 0; i < n_seed; ++i) {
    const double t = -1e-3 + 2e-3 * static_cast<double>(i) / (n_seed - 1);
    Eigen::Vector2d z = z_star + t * dir;
    pts.emplace_back(z[ci], z[vi]);
  }
  for (int it = 0; it < iters; ++it) {
    std::vector<std::pair<double, double>> mapped;
    mapped.reserve(pts.size());
    for (const auto& pr : pts) {
      Eigen::Vector2d z;
      z[ci] = pr.first;
      z[vi] = pr.second;
      Eigen::Vector2d w = side == 'u' ? central_F(fam, k, z)
                                      : central_Finv(fam, k, z);
      mapped.emplace_back(w[ci], w[vi]);
    }
    std::sort(mapped.begin(), mapped.end());
    const bool covered =
        mapped.front().first <= lo && mapped.back().first >= hi;
    if (covered) {
      resample_graph(mapped, lo, hi, n_nodes);
    }
    pts.swap(mapped);
  }
  if (!(pts.front().first <= lo + 1e-9 && pts.back().first >= hi - 1e-9))
    solver_error("manifold graph did not reach the fitting window");
  ManifoldGraph g;
  g.side = side;
  g.window_lo = lo;
  g.window_hi = hi;
  g.nodes.resize(static_cast<Eigen::Index>(pts.size()));
  g.values.resize(static_cast<Eigen::Index>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) {
    g.nodes[static_cast<Eigen::Index>(i)] = pts[i].first;
    g.values[static_cast<Eigen::Index>(i)] = pts[i].second;
  }
  g.coef = fit_cubic(g.nodes, g.values, &g.fit_rms);
  return g;
}

}  // namespace

double ConeReport::margin_min() const {
  return std::min(std::min(margin_u, margin_uu), std::min(margin_s, margin_ss));
}

double cone_margin(ConeKind kind, double L, const Eigen::VectorXd& v, int n) {
  const double wide = wide_norm(kind, v, n);
  const double narrow = narrow_norm(kind, v, n);
  if (std::isnan(wide) || std::isnan(narrow)) return -1e300;
  if (std::isinf(wide) && std::isinf(narrow)) return -1e300;
  return L * wide - narrow;
}

std::vector<Eigen::VectorXd> cone_boundary_vectors(ConeKind kind, double L,
                                                   int n) {
  const int dim = 2 + 2 * n;
  std::vector<Eigen::VectorXd> wides, narrows;
  auto unit = [dim](int i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
    e[i] = 1.0;
    return e;
  };
  switch (kind) {
    case ConeKind::U: {
      wides.push_back(unit(1));
      for (int i = 0; i < n; ++i) wides.push_back(unit(2 + n + i));
      // balanced mixture with wide norm |dPhi| + |dY| = 1
      Eigen::VectorXd mix = 0.5 * unit(1);
      mix += (0.5 / std::sqrt(static_cast<double>(n))) *
             [&] {
               Eigen::VectorXd s = Eigen::VectorXd::Zero(dim);
               for (int i = 0; i < n; ++i) s += unit(2 + n + i);
               return s;
             }();
      wides.push_back(mix);
      narrows.push_back(unit(0));
      for (int i = 0; i < n; ++i) narrows.push_back(unit(2 + i));
      Eigen::VectorXd nm = unit(0);
      for (int i = 0; i < n; ++i)
        nm += unit(2 + i) / std::sqrt(static_cast<double>(n));
      narrows.push_back(nm);  // max-norm 1 mixture
      break;
    }
    case ConeKind::UU: {
      for (int i = 0; i < n; ++i) wides.push_back(unit(2 + n + i));
      narrows.push_back(unit(0));
      narrows.push_back(unit(1));
      for (int i = 0; i < n; ++i) narrows.push_back(unit(2 + i));
      Eigen::VectorXd nm = unit(0) + unit(1);
      for (int i = 0; i < n; ++i)
        nm += unit(2 + i) / std::sqrt(static_cast<double>(n));
      narrows.push_back(nm);
      break;
    }
    case ConeKind::S: {
      wides.push_back(unit(0));
      for (int i = 0; i < n; ++i) wides.push_back(unit(2 + i));
      Eigen::VectorXd mix = 0.5 * unit(0);
      for (int i = 0; i < n; ++i)
        mix += (0.5 / std::sqrt(static_cast<double>(n))) * unit(2 + i);
      wides.push_back(mix);
      narrows.push_back(unit(1));
      for (int i = 0; i < n; ++i) narrows.push_back(unit(2 + n + i));
      Eigen::VectorXd nm = unit(1);
      for (int i = 0; i < n; ++i)
        nm += unit(2 + n + i) / std::sqrt(static_cast<double>(n));
      narrows.push_back(nm);
      break;
    }
    case ConeKind::SS: {
      for (int i = 0; i < n; ++i) wides.push_back(unit(2 + i));
      narrows.push_back(unit(0));
      narrows.push_back(unit(1));
      for (int i = 0; i < n; ++i) narrows.push_back(unit(2 + n + i));
      Eigen::VectorXd nm = unit(0) + unit(1);
      for (int i = 0; i < n; ++i)
        nm += unit(2 + n + i) / std::sqrt(static_cast<double>(n));
      narrows.push_back(nm);
      break;
    }
  }
  std::vector<Eigen::VectorXd> out;
  for (const auto& w : wides)
    for (const auto& m : narrows) {
      out.push_back(w + L * m);
      out.push_back(w - L * m);
    }
  return out;
}

ConeReport verify_cones(const ReturnFamily& fam, double L,
                        std::array<int, 4> grid) {
  if (!(L > 0.0)) input_error("cone aperture L must be positive");
  const ModelSpec& m = fam.m;
  const int n = m.N - 1;
  ConeReport rep;
  rep.L = L;
  const auto bnd_u = cone_boundary_vectors(ConeKind::U, L, n);
  const auto bnd_uu = cone_boundary_vectors(ConeKind::UU, L, n);
  const auto bnd_s = cone_boundary_vectors(ConeKind::S, L, n);
  const auto bnd_ss = cone_boundary_vectors(ConeKind::SS, L, n);
  const Box box = Box::Pi();
  std::vector<int> dims;
  dims.push_back(grid[0]);
  dims.push_back(grid[1]);
  for (int i = 0; i < n; ++i) dims.push_back(grid[2]);
  for (int i = 0; i < n; ++i) dims.push_back(grid[3]);
  auto node = [](int i, int g) {
    return g == 1 ? 0.0
                  : -1.0 + 2.0 * static_cast<double>(i) /
                               static_cast<double>(g - 1);
  };
  for (long long k : fam.rset.K) {
    std::vector<int> idx(dims.size(), 0);
    bool done = false;
    while (!done) {
      const double R = node(idx[0], dims[0]);
      const double Phi = node(idx[1], dims[1]);
      Eigen::VectorXd X(n), Y(n);
      for (int i = 0; i < n; ++i) X[i] = node(idx[2 + i], dims[2 + i]);
      for (int i = 0; i < n; ++i)
        Y[i] = node(idx[2 + n + i], dims[2 + n + i]);
      CrossResult cr = cross_return(fam, k, R, Phi, X, Y, false);
      if (box.contains(cr.in) && box.contains(cr.out)) {
        rep.n_points += 1;
        ReturnDeriv f;
        Eigen::MatrixXd Jf, Jb;
        const bool fast = fam.decoupled();
        if (fast) {
          f = make_return_deriv(fam, k, Phi);
        } else {
          Jf = forward_matrix(fam, k, cr.entry);
          Jb = Jf.inverse();
        }
        auto push = [&](ConeKind kind, double margin) {
          if (margin < 0) record_witness(rep, k, R, Phi, kind, margin);
        };
        for (const auto& v : bnd_u) {
          Eigen::VectorXd w = fast ? apply_forward(f, v, n)
                                   : Eigen::VectorXd(Jf * v);
          const double mg = cone_margin(ConeKind::U, L, w, n);
          rep.margin_u = std::min(rep.margin_u, mg);
          push(ConeKind::U, mg);
          const double den = wide_norm(ConeKind::U, v, n);
          const double num = wide_norm(ConeKind::U, w, n);
          if (den > 0)
            rep.expansion_min = std::min(rep.expansion_min, num / den);
          rep.n_vectors += 1;
        }
        for (const auto& v : bnd_uu) {
          Eigen::VectorXd w = fast ? apply_forward(f, v, n)
                                   : Eigen::VectorXd(Jf * v);
          const double mg = cone_margin(ConeKind::UU, L, w, n);
          rep.margin_uu = std::min(rep.margin_uu, mg);
          push(ConeKind::UU, mg);
          rep.n_vectors += 1;
        }
        for (const auto& w : bnd_s) {
          Eigen::VectorXd v = fast ? apply_backward(f, w, n)
                                   : Eigen::VectorXd(Jb * w);
          const double mg = cone_margin(ConeKind::S, L, v, n);
          rep.margin_s = std::min(rep.margin_s, mg);
          push(ConeKind::S, mg);
          const double num = wide_norm(ConeKind::S, w, n);
          const double den = wide_norm(ConeKind::S, v, n);
          if (std::isfinite(den) && den > 0)
            rep.contraction_max = std::max(rep.contraction_max, num / den);
          rep.n_vectors += 1;
        }
        for (const auto& w : bnd_ss) {
          Eigen::VectorXd v = fast ? apply_backward(f, w, n)
                                   : Eigen::VectorXd(Jb * w);
          const double mg = cone_margin(ConeKind::SS, L, v, n);
          rep.margin_ss = std::min(rep.margin_ss, mg);
          push(ConeKind::SS, mg);
          rep.n_vectors += 1;
        }
      }
      size_t pos = 0;
      while (pos < dims.size()) {
        if (++idx[pos] < dims[pos]) break;
        idx[pos] = 0;
        ++pos;
      }
      done = pos == dims.size();
    }
  }
  rep.pass = rep.n_points > 0 && rep.margin_min() > 0 &&
             rep.expansion_min > 1.0 && rep.contraction_max < 1.0;
  return rep;
}

CodingResult coding_orbit(const ReturnFamily& fam,
                          const std::vector<long long>& word, double tol) {
  const ModelSpec& m = fam.m;
  const int n = m.N - 1;
  const int dim = 2 * m.N;
  const int J = static_cast<int>(word.size());
  if (J < 1) input_error("coding_orbit needs a nonempty word");
  for (long long k : word)
    if (!fam.rset.contains(k))
      input_error("coding_orbit: word symbol " + std::to_string(k) +
                  " is not an admissible return index");
  CodingResult res;
  res.word = word;
  std::vector<double> A(J);
  for (int i = 0; i < J; ++i) A[i] = fam.rset.A_of(word[i]);
  // Affine skeleton seed: the angle recurrence Phi_{i+1} = A_i + a Phi_i
  // closes at Phi_0 = sum a^{J-1-i} A_i / (1 - a^J).
  std::vector<Eigen::VectorXd> Xs(J, Eigen::VectorXd::Zero(n));
  std::vector<Eigen::VectorXd> Ys(J, Eigen::VectorXd::Zero(n));
  std::vector<double> R(J, 0.0), Phi(J, 0.0);
  {
    double num = 0.0;
    for (int i = 0; i < J; ++i) num = m.alpha * num + A[i];
    Phi[0] = num / (1.0 - ipow(m.alpha, J));
    for (int i = 0; i + 1 < J; ++i) Phi[i + 1] = A[i] + m.alpha * Phi[i];
  }
  auto residual = [&](Eigen::VectorXd* Fout,
                      Eigen::MatrixXd* Jout) -> double {
    if (Fout) Fout->setZero(dim * J);
    if (Jout) Jout->setZero(dim * J, dim * J);
    double worst = 0;
    for (int i = 0; i < J; ++i) {
      const int inext = (i + 1) % J;
      CrossResult cr = cross_return(fam, word[i], R[i], Phi[i], Xs[i],
                                    Ys[inext], Jout != nullptr);
      Eigen::VectorXd Fi(dim);
      Fi[0] = R[inext] - cr.out.R;
      Fi[1] = Phi[inext] - cr.out.Phi;
      Fi.segment(2, n) = Xs[inext] - cr.out.X;
      Fi.segment(2 + n, n) = Ys[i] - cr.in.Y;
      worst = std::max(worst, Fi.lpNorm<Eigen::Infinity>());
      if (Fout) Fout->segment(i * dim, dim) = Fi;
      if (Jout) {
        Eigen::MatrixXd& Jm = *Jout;
        const int rb = i * dim;
        const int cb = i * dim;
        const int cb1 = inext * dim;
        // derivative wrt (R_i, Phi_i, X_i)
        for (int rr = 0; rr < dim; ++rr)
          for (int cc2 = 0; cc2 < 2 + n; ++cc2)
            Jm(rb + rr, cb + cc2) -= cr.jac(rr, cc2);
        // identity on Y_i
        for (int i2 = 0; i2 < n; ++i2)
          Jm(rb + 2 + n + i2, cb + 2 + n + i2) += 1.0;
        // derivative wrt Y_{i+1} (the prescribed exit data)
        for (int rr = 0; rr < dim; ++rr)
          for (int i2 = 0; i2 < n; ++i2)
            Jm(rb + rr, cb1 + 2 + n + i2) -= cr.jac(rr, 2 + n + i2);
        // identity on (R, Phi, X)_{i+1}
        Jm(rb + 0, cb1 + 0) += 1.0;
        Jm(rb + 1, cb1 + 1) += 1.0;
        for (int i2 = 0; i2 < n; ++i2)
          Jm(rb + 2 + i2, cb1 + 2 + i2) += 1.0;
      }
    }
    return worst;
  };
  // Picard warm start: sweep the contractive directions.
  int iters = 0;
  for (int it = 0; it < 20; ++it) {
    ++iters;
    for (int i = 0; i < J; ++i) {
      const int inext = (i + 1) % J;
      // invert the angle output onto the target of the next state
      double target = Phi[inext];
      for (int nit = 0; nit < 4; ++nit) {
        CrossResult cr =
            cross_return(fam, word[i], R[i], Phi[i], Xs[i], Ys[inext], true);
        const double err = cr.out.Phi - target;
        const double dd = cr.jac(1, 1);
        Phi[i] -= err / dd;
        if (std::abs(err) < 1e-13) break;
      }
      CrossResult cr =
          cross_return(fam, word[i], R[i], Phi[i], Xs[i], Ys[inext], false);
      R[inext] = cr.out.R;
      Xs[inext] = cr.out.X;
      Ys[i] = cr.in.Y;
    }
    if (residual(nullptr, nullptr) < tol) break;
  }
  // Newton on the stacked cross equations.
  Eigen::VectorXd F(dim * J);
  Eigen::MatrixXd Jm(dim * J, dim * J);
  double worst = residual(&F, &Jm);
  for (int it = 0; it < 50 && worst > tol; ++it) {
    ++iters;
    Eigen::VectorXd step = Jm.fullPivLu().solve(F);
    double scale = 1.0;
    std::vector<double> R0 = R, P0 = Phi;
    auto X0 = Xs;
    auto Y0 = Ys;
    for (int ls = 0; ls < 10; ++ls) {
      for (int i = 0; i < J; ++i) {
        R[i] = R0[i] - scale * step[i * dim + 0];
        Phi[i] = P0[i] - scale * step[i * dim + 1];
        for (int i2 = 0; i2 < n; ++i2) {
          Xs[i][i2] = X0[i][i2] - scale * step[i * dim + 2 + i2];
          Ys[i][i2] = Y0[i][i2] - scale * step[i * dim + 2 + n + i2];
        }
      }
      const double now = residual(nullptr, nullptr);
      if (now < worst || now < tol) break;
      scale *= 0.5;
    }
    worst = residual(&F, &Jm);
  }
  res.iters = iters;
  res.closure_residual = worst;
  res.converged = worst <= tol;
  if (!res.converged)
    solver_error("coding_orbit did not converge; closure residual " +
                 std::to_string(worst));
  res.states.resize(static_cast<size_t>(J));
  for (int i = 0; i < J; ++i) {
    res.states[static_cast<size_t>(i)].R = R[i];
    res.states[static_cast<size_t>(i)].Phi = Phi[i];
    res.states[static_cast<size_t>(i)].X = Xs[i];
    res.states[static_cast<size_t>(i)].Y = Ys[i];
  }
  // Multipliers of the period map, factored into the central product and
  // one log-scale 2x2 product per strong pair.
  if (fam.decoupled()) {
    Eigen::Matrix2d C = Eigen::Matrix2d::Identity();
    LogMat2 Sxy;
    Sxy.m[0][0] = SL::from(1.0);
    Sxy.m[0][1] = SL{0, -1e300};
    Sxy.m[1][0] = SL{0, -1e300};
    Sxy.m[1][1] = SL::from(1.0);
    for (int i = 0; i < J; ++i) {
      ReturnDeriv f = make_return_deriv(fam, word[i], Phi[i]);
      C = (f.central * C).eval();
      Sxy = logmat_mul(strong_forward_logmat(f), Sxy);
    }
    Eigen::EigenSolver<Eigen::Matrix2d> es(C);
    std::vector<double> lg;
    lg.push_back(std::log10(std::max(std::abs(es.eigenvalues()[0]), 1e-300)));
    lg.push_back(std::log10(std::max(std::abs(es.eigenvalues()[1]), 1e-300)));
    auto mods = logmat_moduli(Sxy);
    for (int i2 = 0; i2 < n; ++i2) {
      lg.push_back(mods.first / std::log(10.0));
      lg.push_back(mods.second / std::log(10.0));
    }
    std::sort(lg.rbegin(), lg.rend());
    res.log10_moduli = lg;
    res.n_expanding =
        static_cast<int>(std::count_if(lg.begin(), lg.end(),
                                       [](double v) { return v > 0.0; }));
  } else {
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(dim, dim);
    for (int i = 0; i < J; ++i) {
      PhasePoint entry = from_rescaled(fam.entry_chart,
                                       res.states[static_cast<size_t>(i)]);
      P = (forward_matrix(fam, word[i], entry) * P).eval();
    }
    if (P.allFinite()) {
      Eigen::EigenSolver<Eigen::MatrixXd> es(P);
      std::vector<double> lg;
      for (int i = 0; i < dim; ++i)
        lg.push_back(
            std::log10(std::max(std::abs(es.eigenvalues()[i]), 1e-300)));
      std::sort(lg.rbegin(), lg.rend());
      res.log10_moduli = lg;
      res.n_expanding =
          static_cast<int>(std::count_if(lg.begin(), lg.end(),
                                         [](double v) { return v > 0.0; }));
    } else {
      res.n_expanding = -1;  // period map overflows; factored form needed
    }
  }
  return res;
}

double orbit_distance(const CodingResult& A, const CodingResult& B) {
  const size_t la = A.states.size(), lb = B.states.size();
  const size_t L = std::lcm(la, lb);
  auto state_dist = [](const RescaledPoint& a, const RescaledPoint& b) {
    double d = std::abs(a.R - b.R);
    d = std::max(d, std::abs(a.Phi - b.Phi));
    d = std::max(d, (a.X - b.X).lpNorm<Eigen::Infinity>());
    d = std::max(d, (a.Y - b.Y).lpNorm<Eigen::Infinity>());
    return d;
  };
  double best = 1e300;
  for (size_t shift = 0; shift < L; ++shift) {
    double worst = 0;
    for (size_t i = 0; i < L; ++i) {
      worst = std::max(worst, state_dist(A.states[i % la],
                                         B.states[(i + shift) % lb]));
    }
    best = std::min(best, worst);
  }
  return best;
}

FixedPointResult rescaled_fixed_point(const ReturnFamily& fam, long long k) {
  const ModelSpec& m = fam.m;
  const double A = fam.rset.A_of(k);
  FixedPointResult out;
  out.formula_Phi = A / (1.0 - m.alpha);
  const double scale =
      fam.scheme == Scheme::Cubic ? 1.0 : std::sqrt(fam.delta);
  out.formula_R = -m.beta * ipow(m.alpha, 4) * scale * ipow(A, 3) /
                  ipow(1.0 - m.alpha, 4);
  Eigen::Vector2d z(out.formula_R, out.formula_Phi);
  int it = 0;
  for (it = 0; it < 50; ++it) {
    Eigen::Vector2d r = central_F(fam, k, z) - z;
    if (r.lpNorm<Eigen::Infinity>() < 1e-13) break;
    Eigen::Matrix2d Jm = central_JF(fam, k, z) - Eigen::Matrix2d::Identity();
    z -= Jm.inverse() * r;
  }
  out.R = z[0];
  out.Phi = z[1];
  out.iters = it;
  out.gap = std::max(std::abs(out.R - out.formula_R),
                     std::abs(out.Phi - out.formula_Phi));
  out.in_box = std::abs(out.R) <= 1.0 && std::abs(out.Phi) <= 1.0;
  return out;
}

ManifoldGraph unstable_graph(const ReturnFamily& fam, long long k,
                             int n_nodes, int iters) {
  return build_graph(fam, k, 'u', n_nodes, iters);
}

ManifoldGraph stable_graph(const ReturnFamily& fam, long long k, int n_nodes,
                           int iters) {
  return build_graph(fam, k, 's', n_nodes, iters);
}

TransversalityReport transverse_heteroclinic_check(const ReturnFamily& fam,
                                                   long long k,
                                                   const ManifoldGraph& gu) {
  if (gu.side != 'u')
    input_error("transversality check needs the unstable graph");
  TransversalityReport rep;
  std::vector<std::pair<double, double>> img;
  img.reserve(static_cast<size_t>(gu.nodes.size()));
  for (Eigen::Index i = 0; i < gu.nodes.size(); ++i) {
    Eigen::Vector2d z(gu.values[i], gu.nodes[i]);
    Eigen::Vector2d w = central_F(fam, k, z);
    img.emplace_back(w[1], w[0]);  // (Phi-image, R-image)
  }
  std::sort(img.begin(), img.end());
  Eigen::VectorXd t(static_cast<Eigen::Index>(img.size()));
  Eigen::VectorXd v(static_cast<Eigen::Index>(img.size()));
  for (size_t i = 0; i < img.size(); ++i) {
    t[static_cast<Eigen::Index>(i)] = img[i].first;
    v[static_cast<Eigen::Index>(i)] = img[i].second;
  }
  rep.image_coef = fit_cubic(t, v, nullptr);
  const auto& c = rep.image_coef;
  rep.cube_defect_c1 = c[1] - c[2] * c[2] / (3.0 * c[3]);
  rep.cube_defect_c0 =
      c[0] - c[2] * c[2] * c[2] / (27.0 * c[3] * c[3]);
  const double A = fam.rset.A_of(k);
  const double tolc = 1e-6 * std::max(1.0, std::abs(c[3]));
  if (std::abs(A) < 5e-3) {
    rep.status = CrossingStatus::Inconclusive;
  } else if (std::abs(rep.cube_defect_c0) < tolc &&
             std::abs(rep.cube_defect_c1) < tolc) {
    rep.status = CrossingStatus::Coincident;
  } else {
    double min_angle = 1e300;
    for (double root : cubic_real_roots(c)) {
      const double slope =
          c[1] + 2.0 * c[2] * root + 3.0 * c[3] * root * root;
      min_angle = std::min(min_angle, std::atan(std::abs(slope)));
    }
    rep.min_angle = min_angle;
    rep.status = min_angle > 1e-4 ? CrossingStatus::Transversal
                                  : CrossingStatus::Inconclusive;
  }
  return rep;
}

}  // namespace tanglab

#include <tanglab/returns.hpp>

#include <cmath>
#include <string>

namespace tanglab {

namespace {

// lambda^k with the documented underflow clamp to exact zero.
double pow_lambda(double lam, long long k) {
  double v = std::pow(lam, static_cast<double>(k));
  if (v < 1e-300) return 0.0;
  return v;
}

// Unwrapped exit angle offset of T_k in units of delta:
//   A(k) + (s + k*twist*r_exit)/delta.
// The k*rho fold is reused from the return set, where it was reduced once
// with exact integer arithmetic; refolding the ~k-sized total here would
// quantize the angle at ulp(k)/delta and stall orbit solvers at deep
// scales. All remaining terms live at box scale, so no wrap is needed.
double cross_exit_angle(const ModelSpec& m, double delta, long long k,
                        double A, double s, double r_exit) {
  const long double small =
      static_cast<long double>(s) +
      static_cast<long double>(k) * static_cast<long double>(m.twist) *
          static_cast<long double>(r_exit);
  return A + static_cast<double>(small) / delta;
}

}  // namespace

ReturnFamily make_return_family(const ModelSpec& m, const RationalApprox& ap,
                                Scheme scheme, std::optional<double> d) {
  validate(m);
  if (m.ell != 2)
    input_error(
        "rescaling charts require the cubic tangency family (ell = 2); "
        "the quadratic family has no common rescaling exponent");
  ReturnFamily fam;
  fam.m = m;
  fam.approx = ap;
  fam.scheme = scheme;
  fam.d = d ? *d : default_angle_width(m.alpha);
  if (!(fam.d > 0.0 && fam.d < 1.0))
    input_error("angle width d must lie in (0,1)");
  fam.rset = build_return_set(m, ap, fam.d);
  fam.delta = fam.rset.delta;
  fam.entry_chart = chart_minus(m, scheme, fam.delta);
  fam.exit_chart = chart_plus(m, scheme, fam.delta);
  return fam;
}

Trajectory iterate_T0(const ModelSpec& m, const PhasePoint& p0, long long k) {
  Trajectory tr;
  tr.pts.reserve(static_cast<size_t>(k) + 1);
  tr.pts.push_back(p0);
  if (!in_T0_domain(m, p0)) {
    tr.exit_index = 0;
    return tr;
  }
  for (long long j = 0; j < k; ++j) {
    PhasePoint next = apply_T0(m, tr.pts.back());
    tr.pts.push_back(next);
    if (!in_T0_domain(m, next)) {
      tr.exit_index = j + 1;
      return tr;
    }
  }
  return tr;
}

BvpResult solve_T0_bvp(const ModelSpec& m, double r0, double phi0,
                       const Eigen::VectorXd& x0, const Eigen::VectorXd& y_k,
                       long long k, double tol, int max_iter) {
  const int n = m.N - 1;
  if (x0.size() != n || y_k.size() != n)
    input_error("solve_T0_bvp: boundary vectors must have length N-1");
  if (k < 0) input_error("solve_T0_bvp requires k >= 0");
  BvpResult out;
  if (m.couple == 0.0) {
    // x runs forward and y runs backward as exact geometric chains;
    // the central pair never feels them.
    double r = r0, phi = phi0;
    apply_inner(m, r, phi, k);
    const double lamk = pow_lambda(m.lambda_ss, k);
    out.r_k = r;
    out.phi_k = phi;
    out.x_k = lamk * x0;
    out.y_0 = lamk * y_k;
    out.iters = 0;
    out.residual = 0;
    return out;
  }
  const double lam = m.lambda_ss;
  const double c = m.couple;
  const size_t len = static_cast<size_t>(k) + 1;
  std::vector<double> r(len), phi(len);
  Eigen::MatrixXd xs(n, static_cast<Eigen::Index>(len));
  Eigen::MatrixXd ys(n, static_cast<Eigen::Index>(len));
  for (size_t j = 0; j < len; ++j)
    ys.col(static_cast<Eigen::Index>(j)) =
        pow_lambda(lam, k - static_cast<long long>(j)) * y_k;
  double prev_change = 1e300;
  bool converged = false;
  int it = 0;
  Eigen::MatrixXd ys_old = ys;
  for (it = 1; it <= max_iter; ++it) {
    r[0] = r0;
    phi[0] = phi0;
    xs.col(0) = x0;
    for (long long j = 0; j < k; ++j) {
      double rr = r[j], pp = phi[j];
      inner_step(m, rr, pp);
      const double ip = xs.col(j).dot(ys.col(j));
      pp = wrap_unit(pp + c * ip);
      const double e = std::exp(c * rr);
      r[j + 1] = rr;
      phi[j + 1] = pp;
      xs.col(j + 1) = (lam / e) * xs.col(j);
    }
    ys_old = ys;
    ys.col(static_cast<Eigen::Index>(k)) = y_k;
    double change = 0;
    for (long long j = k - 1; j >= 0; --j) {
      Eigen::VectorXd ynew = lam * std::exp(-c * r[j + 1]) * ys.col(j + 1);
      change = std::max(
          change, (ynew - ys_old.col(j)).lpNorm<Eigen::Infinity>());
      ys.col(j) = ynew;
    }
    if (change <= tol) {
      converged = true;
      out.residual = change;
      break;
    }
    if (change > prev_change) {
      // non-monotone sweep; damp the y-stream update
      ys = 0.5 * (ys + ys_old);
      change = 0.5 * change;
    }
    prev_change = change;
    out.residual = change;
  }
  if (!converged)
    solver_error("T0 boundary solver did not converge; last sweep change " +
                 std::to_string(out.residual));
  out.r_k = r[static_cast<size_t>(k)];
  out.phi_k = phi[static_cast<size_t>(k)];
  out.x_k = xs.col(static_cast<Eigen::Index>(k));
  out.y_0 = ys.col(0);
  out.iters = it;
  return out;
}

PhasePoint return_map(const ReturnFamily& fam, long long k,
                      const PhasePoint& p) {
  const ModelSpec& m = fam.m;
  if (!fam.rset.contains(k))
    input_error("return index k = " + std::to_string(k) +
                " is not admissible for q = " + std::to_string(fam.rset.q));
  if (!in_T1_domain(m, p))
    input_error("return_map: point outside the transition domain ball");
  PhasePoint pt = apply_T1(m, p);
  if (!in_T0_domain(m, pt))
    input_error("return_map: transition image outside the T0 domain");
  if (fam.decoupled()) {
    PhasePoint q = pt;
    apply_inner(m, q.r, q.phi, k);
    const double lamk = pow_lambda(m.lambda_ss, k);
    q.x = lamk * pt.x;
    const double ymax = pt.y.lpNorm<Eigen::Infinity>();
    if (ymax > 0.0) {
      const double steps =
          std::log(m.xy_max / ymax) / std::log(1.0 / m.lambda_ss);
      long long exit = static_cast<long long>(std::floor(steps)) + 1;
      if (exit <= k)
        input_error("return_map: strong unstable blowup at chain index " +
                    std::to_string(exit) + " of " + std::to_string(k));
      q.y = pt.y / lamk;
    } else {
      q.y = Eigen::VectorXd::Zero(m.N - 1);
    }
    return q;
  }
  Trajectory tr = iterate_T0(m, pt, k);
  if (tr.exit_index)
    input_error("return_map: domain exit at chain index " +
                std::to_string(*tr.exit_index) + " of " + std::to_string(k));
  return tr.pts.back();
}

RescaledPoint rescaled_return(const ReturnFamily& fam, long long k,
                              const RescaledPoint& rp) {
  PhasePoint p = from_rescaled(fam.entry_chart, rp);
  PhasePoint q = return_map(fam, k, p);
  return to_rescaled(fam.entry_chart, q);
}

CrossResult cross_return(const ReturnFamily& fam, long long k, double R,
                         double Phi, const Eigen::VectorXd& X,
                         const Eigen::VectorXd& Ybar, bool want_jac) {
  const ModelSpec& m = fam.m;
  const int n = m.N - 1;
  if (X.size() != n || Ybar.size() != n)
    input_error("cross_return: strong vectors must have length N-1");
  if (!fam.rset.contains(k))
    input_error("cross_return: return index k = " + std::to_string(k) +
                " is not admissible for q = " + std::to_string(fam.rset.q));
  const Chart& ch = fam.entry_chart;
  const double cen = ch.central();
  const double str = ch.strong();
  const double dlt = fam.delta;
  const double a = m.hyp.a, b = m.hyp.b, c = m.hyp.c, d = m.hyp.d;
  const double lam = m.lambda_ss;
  const int dim = 2 * m.N;

  const double r_in = cen * R;
  const double w = dlt * Phi;
  const double s = m.alpha * w;
  const Eigen::VectorXd x_in = str * X;

  CrossResult res;
  res.k = k;

  if (fam.decoupled()) {
    const double r_t = r_in / m.alpha + shear_g(m, s);
    const double lamk = pow_lambda(lam, k);
    const double D = 1.0 + lamk * lamk * b * c / (d * d);
    // Exit x and transition-exit y solve as one linear block:
    //   x_tilde = x_plus + x_in/d + (b/d) y_tilde
    //   y_tilde = lam^k (y_minus + str*Ybar - (c/d) x_k),  x_k = lam^k x_tilde
    Eigen::VectorXd x_tilde =
        (m.x_plus + x_in / d + (b / d) * lamk * (m.y_minus + str * Ybar)) / D;
    Eigen::VectorXd x_k = lamk * x_tilde;
    Eigen::VectorXd y_tilde =
        lamk * (m.y_minus + str * Ybar - (c / d) * x_k);
    Eigen::VectorXd y_e = m.y_minus + (y_tilde - c * x_in) / d;

    res.entry.r = r_in;
    res.entry.phi = wrap_unit(m.phi_minus + w);
    res.entry.x = x_in;
    res.entry.y = y_e;
    res.in = to_rescaled(ch, res.entry);
    res.in.R = R;
    res.in.Phi = Phi;

    res.out.R = r_t / cen;
    res.out.Phi = cross_exit_angle(m, dlt, k, fam.rset.A_of(k), s, r_t);
    res.out.X = x_k / str;
    res.out.Y = Ybar;
    res.exit.r = r_t;
    res.exit.phi = wrap_unit(m.phi_minus + dlt * res.out.Phi);
    res.exit.x = x_k;
    res.exit.y = m.y_minus + str * Ybar + ch.s_mix * x_k;
    res.iters = 0;
    res.residual = 0;

    if (want_jac) {
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim, dim);
      const double gp = shear_g_prime(m, s);
      J(0, 0) = 1.0 / m.alpha;
      J(0, 1) = gp * m.alpha * dlt / cen;
      J(1, 0) = static_cast<double>(k) * m.twist * (cen / m.alpha) / dlt;
      J(1, 1) = m.alpha * (1.0 + static_cast<double>(k) * m.twist * gp);
      const double jxx = lamk / d / D;
      const double jxy = lamk * lamk * (b / d) / D;
      const double jyy = lamk / (d * D);
      const double jyx = -lamk * lamk * c / (d * d * D);
      for (int i = 0; i < n; ++i) {
        J(2 + i, 2 + i) = jxx;
        J(2 + i, 2 + n + i) = jxy;
        J(2 + n + i, 2 + i) = jyx;
        J(2 + n + i, 2 + n + i) = jyy;
      }
      res.jac = J;
      res.has_jac = true;
    }
    return res;
  }

  // Coupled or perturbed model: sweep iteration on the transition-exit y
  // and the chain y-stream, with sensitivity sweeps for the Jacobian.
  const double cc = m.couple;
  const size_t len = static_cast<size_t>(k) + 1;
  std::vector<double> rj(len), pj(len);
  Eigen::MatrixXd xs(n, static_cast<Eigen::Index>(len));
  Eigen::MatrixXd ys(n, static_cast<Eigen::Index>(len));
  Eigen::VectorXd y_t = Eigen::VectorXd::Zero(n);
  for (size_t j = 0; j < len; ++j)
    ys.col(static_cast<Eigen::Index>(j)) =
        pow_lambda(lam, k - static_cast<long long>(j)) *
        (m.y_minus + str * Ybar);
  const double phi_in = wrap_unit(m.phi_minus + w);
  double r_t = 0;
  Eigen::VectorXd x_t(n), y_e(n), x_k(n);
  bool converged = false;
  int it = 0;
  double change = 0;
  for (it = 1; it <= 200; ++it) {
    y_e = m.y_minus + (y_t - c * x_in) / d;
    x_t = m.x_plus + a * x_in + b * (y_e - m.y_minus);
    r_t = r_in / m.alpha + shear_g(m, s);
    rj[0] = r_t;
    pj[0] = wrap_unit(m.phi_plus + s);
    xs.col(0) = x_t;
    for (long long j = 0; j < k; ++j) {
      double rr = rj[j], pp = pj[j];
      inner_step(m, rr, pp);
      const double ip = xs.col(j).dot(ys.col(j));
      pp = wrap_unit(pp + cc * ip);
      const double e = std::exp(cc * rr);
      rj[j + 1] = rr;
      pj[j + 1] = pp;
      xs.col(j + 1) = (lam / e) * xs.col(j);
    }
    x_k = xs.col(static_cast<Eigen::Index>(k));
    Eigen::MatrixXd ys_old = ys;
    ys.col(static_cast<Eigen::Index>(k)) =
        m.y_minus + str * Ybar + ch.s_mix * x_k;
    for (long long j = k - 1; j >= 0; --j)
      ys.col(j) = lam * std::exp(-cc * rj[j + 1]) * ys.col(j + 1);
    change = (ys - ys_old).cwiseAbs().maxCoeff();
    const double tchange = (ys.col(0) - y_t).lpNorm<Eigen::Infinity>();
    change = std::max(change, tchange);
    y_t = ys.col(0);
    if (change <= 1e-14 * (1.0 + str)) {
      converged = true;
      break;
    }
  }
  if (!converged)
    solver_error("cross_return sweep did not converge; last change " +
                 std::to_string(change));

  res.entry.r = r_in;
  res.entry.phi = phi_in;
  res.entry.x = x_in;
  res.entry.y = y_e;
  res.in = to_rescaled(ch, res.entry);
  res.in.R = R;
  res.in.Phi = Phi;
  res.exit.r = rj[static_cast<size_t>(k)];
  res.exit.phi = pj[static_cast<size_t>(k)];
  res.exit.x = x_k;
  res.exit.y = ys.col(static_cast<Eigen::Index>(k));
  res.out = to_rescaled(ch, res.exit);
  res.out.Y = Ybar;
  res.iters = it;
  res.residual = change;

  if (want_jac) {
    // Sensitivity sweeps over the converged orbit. Differential streams
    // are with respect to the inputs (R, Phi, X, Ybar) in that order.
    using RowMat = Eigen::MatrixXd;
    std::vector<RowMat> Dx(len, RowMat::Zero(n, dim));
    std::vector<RowMat> Dy(len, RowMat::Zero(n, dim));
    std::vector<Eigen::RowVectorXd> Dr(len, Eigen::RowVectorXd::Zero(dim));
    std::vector<Eigen::RowVectorXd> Dp(len, Eigen::RowVectorXd::Zero(dim));
    Eigen::RowVectorXd Dr_in = Eigen::RowVectorXd::Zero(dim);
    Dr_in(0) = cen;
    Eigen::RowVectorXd Dw = Eigen::RowVectorXd::Zero(dim);
    Dw(1) = dlt;
    RowMat Dx_in = RowMat::Zero(n, dim);
    for (int i = 0; i < n; ++i) Dx_in(i, 2 + i) = str;
    RowMat DYbar = RowMat::Zero(n, dim);
    for (int i = 0; i < n; ++i) DYbar(i, 2 + n + i) = str;
    RowMat Dy_t = RowMat::Zero(n, dim);
    const double gp = shear_g_prime(m, s);
    for (int sweep = 0; sweep < 8; ++sweep) {
      RowMat Dy_e = (Dy_t - c * Dx_in) / d;
      RowMat Dx_t = a * Dx_in + b * Dy_e;
      Dr[0] = Dr_in / m.alpha + gp * m.alpha * Dw;
      Dp[0] = m.alpha * Dw;
      Dx[0] = Dx_t;
      for (long long j = 0; j < k; ++j) {
        double fr = 1.0, fphi = 0.0;
        if (m.inner_pert != 0.0) {
          const double sn = std::sin(2.0 * M_PI * pj[j]);
          const double csn = std::cos(2.0 * M_PI * pj[j]);
          fr += m.inner_pert * m.inner_m * ipow(rj[j], m.inner_m - 1) * sn;
          fphi = m.inner_pert * ipow(rj[j], m.inner_m) * 2.0 * M_PI * csn;
        }
        Eigen::RowVectorXd Drr = fr * Dr[j] + fphi * Dp[j];
        Eigen::RowVectorXd Dpp = Dp[j] + m.twist * Dr[j];
        Eigen::RowVectorXd Dip =
            xs.col(j).transpose() * Dy[j] + ys.col(j).transpose() * Dx[j];
        Dpp += cc * Dip;
        const double e = std::exp(-cc * rj[j + 1]);
        Dx[j + 1] = lam * e * Dx[j] - lam * e * cc * xs.col(j) * Drr;
        Dr[j + 1] = Drr;
        Dp[j + 1] = Dpp;
      }
      Dy[len - 1] = DYbar + ch.s_mix * Dx[len - 1];
      for (long long j = k - 1; j >= 0; --j) {
        const double e = std::exp(-cc * rj[j + 1]);
        Dy[j] = lam * e * Dy[j + 1] -
                lam * e * cc * ys.col(j + 1) * Dr[j + 1];
      }
      Dy_t = Dy[0];
    }
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim, dim);
    J.row(0) = Dr[len - 1] / cen;
    J.row(1) = Dp[len - 1] / dlt;
    J.block(2, 0, n, dim) = Dx[len - 1] / str;
    J.block(2 + n, 0, n, dim) = Dy[0] / (d * str);
    res.jac = J;
    res.has_jac = true;
  }
  return res;
}

Eigen::MatrixXd affine_cross_jacobian(const ReturnFamily& fam) {
  const int dim = 2 * fam.m.N;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim, dim);
  J(0, 0) = 1.0 / fam.m.alpha;
  J(1, 1) = fam.m.alpha;
  return J;
}

DeviationReport deviation_from_affine(const ReturnFamily& fam, long long k,
                                      std::array<int, 4> grid) {
  const ModelSpec& m = fam.m;
  const int n = m.N - 1;
  const double A = fam.rset.A_of(k);
  const Eigen::MatrixXd Jaff = affine_cross_jacobian(fam);
  std::vector<int> dims;
  dims.push_back(grid[0]);
  dims.push_back(grid[1]);
  for (int i = 0; i < n; ++i) dims.push_back(grid[2]);
  for (int i = 0; i < n; ++i) dims.push_back(grid[3]);
  for (int g : dims)
    if (g < 2) input_error("deviation grid needs at least 2 nodes per axis");
  std::vector<int> idx(dims.size(), 0);
  DeviationReport rep;
  auto node = [](int i, int g) {
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(g - 1);
  };
  bool done = false;
  while (!done) {
    const double R = node(idx[0], dims[0]);
    const double Phi = node(idx[1], dims[1]);
    Eigen::VectorXd X(n), Y(n);
    for (int i = 0; i < n; ++i) X[i] = node(idx[2 + i], dims[2 + i]);
    for (int i = 0; i < n; ++i)
      Y[i] = node(idx[2 + n + i], dims[2 + n + i]);
    CrossResult cr = cross_return(fam, k, R, Phi, X, Y, true);
    double c0 = std::abs(cr.out.R - R / m.alpha);
    c0 = std::max(c0, std::abs(cr.out.Phi - (A + m.alpha * Phi)));
    c0 = std::max(c0, cr.out.X.lpNorm<Eigen::Infinity>());
    c0 = std::max(c0, cr.in.Y.lpNorm<Eigen::Infinity>());
    rep.dev_c0 = std::max(rep.dev_c0, c0);
    rep.dev_c1 =
        std::max(rep.dev_c1, (cr.jac - Jaff).cwiseAbs().maxCoeff());
    rep.n_points += 1;
    // odometer
    size_t pos = 0;
    while (pos < dims.size()) {
      if (++idx[pos] < dims[pos]) break;
      idx[pos] = 0;
      ++pos;
    }
    done = pos == dims.size();
  }
  return rep;
}

long long growth_k_rule(double r0, int m) {
  return static_cast<long long>(
      std::floor(std::pow(r0, 1.0 - static_cast<double>(m)) / 10.0));
}

GrowthReport verify_inner_growth(const ModelSpec& m,
                                 const std::vector<double>& r0_list,
                                 double phi0) {
  if (m.inner_pert <= 0.0)
    input_error("verify_inner_growth requires inner_pert > 0");
  GrowthReport rep;
  std::vector<double> lx, ly;
  for (double r0 : r0_list) {
    GrowthSample gs;
    gs.r0 = r0;
    gs.k = growth_k_rule(r0, m.inner_m);
    gs.predicted = static_cast<double>(gs.k) * m.inner_pert *
                   std::pow(r0, static_cast<double>(m.inner_m));
    double r = r0;
    double phi = phi0;
    long double phi_unwrapped = phi0;
    const long double rigid_step =
        static_cast<long double>(m.rho.value()) +
        static_cast<long double>(m.twist) * static_cast<long double>(r0);
    for (long long j = 1; j <= gs.k; ++j) {
      const double xi = m.inner_pert * ipow(r, m.inner_m) *
                        std::sin(2.0 * M_PI * phi);
      phi_unwrapped += static_cast<long double>(m.rho.value()) +
                       static_cast<long double>(m.twist) *
                           static_cast<long double>(r);
      r += xi;
      phi = wrap_unit(static_cast<double>(phi_unwrapped));
      gs.max_r_dev = std::max(gs.max_r_dev, std::abs(r - r0));
      const long double rigid = static_cast<long double>(phi0) +
                                static_cast<long double>(j) * rigid_step;
      gs.phi_dev = std::max(
          gs.phi_dev, std::abs(static_cast<double>(phi_unwrapped - rigid)));
    }
    rep.max_ratio = std::max(rep.max_ratio, gs.max_r_dev / gs.predicted);
    lx.push_back(std::log(gs.predicted));
    ly.push_back(std::log(std::max(gs.max_r_dev, 1e-300)));
    rep.samples.push_back(gs);
  }
  // least-squares slope of log(dev) against log(prediction)
  const double nn = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double denom = nn * sxx - sx * sx;
  rep.slope = denom != 0.0 ? (nn * sxy - sx * sy) / denom : 0.0;
  return rep;
}

}  // namespace tanglab

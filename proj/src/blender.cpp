#include <tanglab/blender.hpp>

#include <algorithm>
#include <cmath>
#include <thread>

namespace tanglab {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Eigen::Index ipow_index(int g, int n) {
  Eigen::Index t = 1;
  for (int i = 0; i < n; ++i) t *= g;
  return t;
}

}  // namespace

Eigen::Index Disc::total() const { return ipow_index(nodes_per_axis, n); }

double Disc::node(int i) const {
  return -1.0 + 2.0 * static_cast<double>(i) /
                    static_cast<double>(nodes_per_axis - 1);
}

void Disc::interpolate(const Eigen::VectorXd& y, double& R_out,
                       double& Phi_out, Eigen::VectorXd& X_out) const {
  const int g = nodes_per_axis;
  std::vector<int> base(static_cast<size_t>(n));
  std::vector<double> frac(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    double u = (y[j] + 1.0) / 2.0 * static_cast<double>(g - 1);
    int i0 = static_cast<int>(std::floor(u));
    i0 = std::clamp(i0, 0, g - 2);
    base[static_cast<size_t>(j)] = i0;
    frac[static_cast<size_t>(j)] = u - static_cast<double>(i0);
  }
  R_out = 0;
  Phi_out = 0;
  X_out = Eigen::VectorXd::Zero(n);
  for (int corner = 0; corner < (1 << n); ++corner) {
    double w = 1.0;
    Eigen::Index idx = 0;
    Eigen::Index stride = 1;
    for (int j = 0; j < n; ++j) {
      const int bit = (corner >> j) & 1;
      w *= bit ? frac[static_cast<size_t>(j)]
               : 1.0 - frac[static_cast<size_t>(j)];
      idx += stride * (base[static_cast<size_t>(j)] + bit);
      stride *= g;
    }
    R_out += w * R[idx];
    Phi_out += w * Phi[idx];
    X_out += w * X.row(idx).transpose();
  }
}

double Disc::lipschitz_estimate() const {
  const int g = nodes_per_axis;
  const double du = 2.0 / static_cast<double>(g - 1);
  double worst = 0;
  Eigen::Index stride = 1;
  for (int axis = 0; axis < n; ++axis) {
    for (Eigen::Index idx = 0; idx < total(); ++idx) {
      const Eigen::Index along = (idx / stride) % g;
      if (along + 1 >= g) continue;
      const Eigen::Index jdx = idx + stride;
      double dv = std::abs(R[jdx] - R[idx]);
      dv = std::max(dv, std::abs(Phi[jdx] - Phi[idx]));
      dv = std::max(dv, (X.row(jdx) - X.row(idx)).norm());
      worst = std::max(worst, dv / du);
    }
    stride *= g;
  }
  return worst;
}

Disc make_seed_disc(int n, double d, double L, int nodes_per_axis,
                    std::mt19937_64& rng) {
  if (nodes_per_axis < 8)
    input_error("make_seed_disc: nodes_per_axis must be at least 8");
  if (!(L > 0) || !(L < d))
    input_error("make_seed_disc: need 0 < L < d for an admissible anchor");
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Disc disc;
  disc.n = n;
  disc.nodes_per_axis = nodes_per_axis;
  disc.lip = L;
  const double R0 = (1.0 - L) * uni(rng);
  const double P0 = (d - L) * uni(rng);
  Eigen::VectorXd X0(n);
  const double xbud = std::max(0.0, 0.45 - 0.9 * L);
  for (int j = 0; j < n; ++j) X0[j] = xbud * uni(rng);
  const double smax = 0.9 * L;
  Eigen::VectorXd sR(n), sP(n);
  Eigen::MatrixXd sX(n, n);
  for (int j = 0; j < n; ++j) {
    sR[j] = smax * uni(rng);
    sP[j] = smax * uni(rng);
    for (int i = 0; i < n; ++i)
      sX(i, j) = smax / std::sqrt(static_cast<double>(n)) * uni(rng);
  }
  const Eigen::Index tot = disc.total();
  disc.R.resize(tot);
  disc.Phi.resize(tot);
  disc.X.resize(tot, n);
  for (Eigen::Index idx = 0; idx < tot; ++idx) {
    Eigen::Index rem = idx;
    Eigen::VectorXd y(n);
    for (int j = 0; j < n; ++j) {
      y[j] = disc.node(static_cast<int>(rem % nodes_per_axis));
      rem /= nodes_per_axis;
    }
    disc.R[idx] = R0 + sR.dot(y);
    disc.Phi[idx] = P0 + sP.dot(y);
    disc.X.row(idx) = (X0 + sX * y).transpose();
  }
  return disc;
}

CoverStep covering_step(const ReturnFamily& fam, double kappa,
                        const Disc& disc) {
  if (!(kappa > 0) || !(kappa < 1))
    input_error("covering_step: kappa must lie in (0, 1)");
  const int n = disc.n;
  const double d = fam.d;
  CoverStep best;
  for (long long k : fam.rset.K) {
    Disc image;
    image.n = n;
    image.nodes_per_axis = disc.nodes_per_axis;
    image.lip = disc.lip;
    const Eigen::Index tot = disc.total();
    image.R.resize(tot);
    image.Phi.resize(tot);
    image.X.resize(tot, n);
    double margin = 1e300;
    bool feasible = true;
    for (Eigen::Index idx = 0; idx < tot && feasible; ++idx) {
      Eigen::Index rem = idx;
      Eigen::VectorXd Ybar(n);
      for (int j = 0; j < n; ++j) {
        Ybar[j] = disc.node(static_cast<int>(rem % disc.nodes_per_axis));
        rem /= disc.nodes_per_axis;
      }
      // Solve for the entry point on the disc whose return exits at Ybar:
      // the entry Y is a strong contraction of the disc data, so a short
      // fixed-point sweep converges.
      Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
      double Rv = 0, Pv = 0;
      Eigen::VectorXd Xv(n);
      CrossResult cr;
      bool solved = false;
      for (int it = 0; it < 50; ++it) {
        disc.interpolate(y, Rv, Pv, Xv);
        cr = cross_return(fam, k, Rv, Pv, Xv, Ybar, false);
        const Eigen::VectorXd ynew = cr.in.Y;
        if (ynew.lpNorm<Eigen::Infinity>() > 1.0) break;
        const double gap = (ynew - y).lpNorm<Eigen::Infinity>();
        y = ynew;
        if (gap < 1e-12) {
          solved = true;
          break;
        }
      }
      if (!solved) {
        feasible = false;
        break;
      }
      image.R[idx] = cr.out.R;
      image.Phi[idx] = cr.out.Phi;
      image.X.row(idx) = cr.out.X.transpose();
      double mg = (1.0 - kappa) - std::abs(cr.out.R);
      mg = std::min(mg, d * (1.0 - kappa) - std::abs(cr.out.Phi));
      for (int j = 0; j < n; ++j)
        mg = std::min(mg, 0.5 - std::abs(cr.out.X[j]));
      margin = std::min(margin, mg);
      if (margin <= 0) feasible = false;
    }
    if (!feasible || margin <= 0) continue;
    const double lip_est = image.lipschitz_estimate();
    if (lip_est > disc.lip + 1e-12) continue;
    if (margin > best.margin) {
      best.ok = true;
      best.k = k;
      best.margin = margin;
      best.image_lipschitz = lip_est;
      best.image = std::move(image);
    }
  }
  if (!best.ok)
    best.reason = "no admissible return index crosses the shrunk box";
  return best;
}

CoverReport covering_sweep(const ReturnFamily& fam, double kappa, double L,
                           int n_discs, int n_steps, std::uint64_t seed,
                           int threads) {
  if (n_discs < 1 || n_steps < 1)
    input_error("covering_sweep: n_discs and n_steps must be positive");
  threads = std::max(1, threads);
  const int n = fam.m.N - 1;
  std::vector<ChainRecord> records(static_cast<size_t>(n_discs));
  auto run_chain = [&](int i) {
    ChainRecord rec;
    rec.disc_index = i;
    std::mt19937_64 rng(splitmix64(seed ^ static_cast<std::uint64_t>(i)));
    Disc disc = make_seed_disc(n, fam.d, L, 33, rng);
    rec.ok = true;
    for (int s = 0; s < n_steps; ++s) {
      CoverStep cs = covering_step(fam, kappa, disc);
      if (!cs.ok) {
        rec.ok = false;
        rec.reason = cs.reason;
        break;
      }
      rec.steps_done += 1;
      rec.margin = std::min(rec.margin, cs.margin);
      rec.ks.push_back(cs.k);
      disc = std::move(cs.image);
    }
    records[static_cast<size_t>(i)] = std::move(rec);
  };
  if (threads == 1) {
    for (int i = 0; i < n_discs; ++i) run_chain(i);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n_discs + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int lo = t * chunk;
      const int hi = std::min(n_discs, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        for (int i = lo; i < hi; ++i) run_chain(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  CoverReport rep;
  rep.n_discs = n_discs;
  rep.n_steps = n_steps;
  int ok_count = 0;
  for (const auto& rec : records) {
    if (rec.ok) {
      ++ok_count;
      rep.margin_min = std::min(rep.margin_min, rec.margin);
    } else if (rep.failures.size() < 8) {
      rep.failures.push_back(rec);
    }
  }
  rep.success_rate =
      static_cast<double>(ok_count) / static_cast<double>(n_discs);
  if (ok_count == 0) rep.margin_min = 0;
  rep.pass = ok_count == n_discs && rep.margin_min > 0;
  return rep;
}

nlohmann::json blender_certificate(const ReturnFamily& fam, double kappa,
                                   const ConeReport& cones,
                                   const CoverReport& covering,
                                   const std::vector<CodingResult>& codings) {
  nlohmann::json j;
  j["model"] = {
      {"N", fam.m.N},
      {"alpha", fam.m.alpha},
      {"beta", fam.m.beta},
      {"ell", fam.m.ell},
      {"lambda_ss", fam.m.lambda_ss},
      {"twist", fam.m.twist},
      {"rho", fam.m.rho.value()},
      {"scheme", fam.scheme == Scheme::Cubic ? "cubic" : "ifs"},
  };
  j["p"] = fam.approx.p;
  j["q"] = fam.approx.q;
  j["delta"] = fam.delta;
  j["d"] = fam.d;
  j["kappa"] = kappa;
  j["K"] = fam.rset.K;
  j["cone"] = {
      {"L", cones.L},
      {"margin_min", cones.margin_min()},
      {"expansion_min", cones.expansion_min},
      {"contraction_max", cones.contraction_max},
      {"pass", cones.pass},
  };
  j["covering"] = {
      {"n_discs", covering.n_discs},
      {"n_steps", covering.n_steps},
      {"margin_min", covering.margin_min},
      {"success_rate", covering.success_rate},
      {"pass", covering.pass},
  };
  bool codings_pass = true;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : codings) {
    arr.push_back({
        {"word", c.word},
        {"closure", c.closure_residual},
        {"expanding_moduli", c.n_expanding},
    });
    codings_pass = codings_pass && c.converged && c.n_expanding == fam.m.N;
  }
  j["codings"] = arr;
  j["pass"] = cones.pass && covering.pass && codings_pass;
  return j;
}

}  // namespace tanglab

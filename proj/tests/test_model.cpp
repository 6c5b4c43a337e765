#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <tanglab/model.hpp>

#include <random>

using namespace tanglab;

namespace {

PhasePoint random_point(std::mt19937_64& rng, int n, double scale) {
  std::uniform_real_distribution<double> U(-scale, scale);
  PhasePoint p;
  p.r = 0.3 * U(rng);
  p.phi = wrap_unit(U(rng));
  p.x = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return U(rng); });
  p.y = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return U(rng); });
  return p;
}

Eigen::VectorXd pack(const PhasePoint& p) {
  Eigen::VectorXd v(2 + p.x.size() + p.y.size());
  v[0] = p.r;
  v[1] = p.phi;
  v.segment(2, p.x.size()) = p.x;
  v.tail(p.y.size()) = p.y;
  return v;
}

PhasePoint unpack(const Eigen::VectorXd& v, int n) {
  PhasePoint p;
  p.r = v[0];
  p.phi = v[1];
  p.x = v.segment(2, n);
  p.y = v.tail(n);
  return p;
}

// Central-difference Jacobian; the angle difference is reduced mod 1.
template <class F>
Eigen::MatrixXd fd_jacobian(F&& f, const PhasePoint& p, int n, double h) {
  const int dim = 2 + 2 * n;
  Eigen::MatrixXd J(dim, dim);
  const Eigen::VectorXd v0 = pack(p);
  for (int j = 0; j < dim; ++j) {
    Eigen::VectorXd vp = v0, vm = v0;
    vp[j] += h;
    vm[j] -= h;
    const Eigen::VectorXd fp = pack(f(unpack(vp, n)));
    const Eigen::VectorXd fm = pack(f(unpack(vm, n)));
    Eigen::VectorXd diff = fp - fm;
    diff[1] = mod0(diff[1], 1.0);
    J.col(j) = diff / (2 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("validate rejects out-of-contract parameter sets") {
  ModelSpec m;
  CHECK_NOTHROW(validate(m));

  ModelSpec bad = m;
  bad.alpha = 1.0;
  CHECK_THROWS_WITH_AS(validate(bad),
                       "ModelSpec.alpha must satisfy |alpha| != 1", Error);
  bad.alpha = -1.0;
  CHECK_THROWS_AS(validate(bad), Error);

  bad = m;
  bad.hyp.d = 2.5;  // det = 2.5 - 1
  CHECK_THROWS_AS(validate(bad), Error);

  bad = m;
  bad.N = 1;
  CHECK_THROWS_AS(validate(bad), Error);

  bad = m;
  bad.lambda_ss = 1.0;
  CHECK_THROWS_AS(validate(bad), Error);

  bad = m;
  bad.ell = 3;
  CHECK_THROWS_AS(validate(bad), Error);

  bad = m;
  bad.y_minus = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(validate(bad), Error);
}

TEST_CASE("radial shear polynomial and derivative") {
  ModelSpec m;  // mu = nu = 0, beta = 1, ell = 2
  CHECK(shear_g(m, 0.2) == doctest::Approx(0.008).epsilon(1e-14));
  CHECK(shear_g_prime(m, 0.2) == doctest::Approx(0.12).epsilon(1e-14));
  m.mu = 0.3;
  m.nu = -0.5;
  CHECK(shear_g(m, 0.1) == doctest::Approx(0.3 - 0.05 + 1e-3).epsilon(1e-13));
  CHECK(shear_g_prime(m, 0.1) == doctest::Approx(-0.5 + 0.03).epsilon(1e-13));
}

TEST_CASE("transition map values and inverse round trip") {
  ModelSpec m;
  PhasePoint p;
  p.r = 0.01;
  p.phi = 0.02;
  p.x = Eigen::VectorXd::Constant(1, 0.03);
  p.y = Eigen::VectorXd::Constant(1, 0.05);
  CHECK(in_T1_domain(m, p));

  PhasePoint q = apply_T1(m, p);
  CHECK(q.r == doctest::Approx(0.01 / 3 + std::pow(0.06, 3)).epsilon(1e-14));
  CHECK(q.phi == doctest::Approx(0.06).epsilon(1e-14));
  CHECK(q.x[0] == doctest::Approx(0.08).epsilon(1e-14));
  CHECK(q.y[0] == doctest::Approx(0.13).epsilon(1e-14));

  PhasePoint back = apply_T1_inverse(m, q);
  CHECK(back.r == doctest::Approx(p.r).epsilon(1e-12));
  CHECK(back.phi == doctest::Approx(p.phi).epsilon(1e-12));
  CHECK(back.x[0] == doctest::Approx(p.x[0]).epsilon(1e-12));
  CHECK(back.y[0] == doctest::Approx(p.y[0]).epsilon(1e-12));
}

TEST_CASE("inner map round trip and closed form") {
  ModelSpec m;
  double r = 0.05, phi = 0.3;
  apply_inner(m, r, phi, 10);
  double r2 = 0.05, phi2 = 0.3;
  for (int i = 0; i < 10; ++i) inner_step(m, r2, phi2);
  CHECK(r == doctest::Approx(r2));
  CHECK(mod0(phi - phi2, 1.0) == doctest::Approx(0.0).epsilon(1e-12));

  ModelSpec mp = m;
  mp.inner_pert = 1e-4;
  double rp = 0.05, php = 0.3;
  apply_inner(mp, rp, php, 7);
  double rq = 0.05, phq = 0.3;
  for (int i = 0; i < 7; ++i) inner_step(mp, rq, phq);
  CHECK(rp == doctest::Approx(rq).epsilon(1e-14));
  CHECK(mod0(php - phq, 1.0) == doctest::Approx(0.0).epsilon(1e-13));

  PhasePoint p = PhasePoint::Zero(1);
  p.r = 0.02;
  p.phi = 0.9;
  PhasePoint fwd = apply_T0(mp, p);
  PhasePoint back = apply_T0_inverse(mp, fwd);
  CHECK(back.r == doctest::Approx(p.r).epsilon(1e-12));
  CHECK(mod0(back.phi - p.phi, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("jacobians agree with finite differences") {
  std::mt19937_64 rng(31);
  ModelSpec m;
  m.couple = 0.3;
  m.inner_pert = 2e-3;
  for (int trial = 0; trial < 20; ++trial) {
    PhasePoint p = random_point(rng, 1, 0.4);
    Eigen::MatrixXd J = jacobian_T0(m, p);
    Eigen::MatrixXd Jfd = fd_jacobian(
        [&](const PhasePoint& z) { return apply_T0(m, z); }, p, 1, 1e-6);
    CHECK((J - Jfd).cwiseAbs().maxCoeff() < 2e-6 * std::max(1.0, J.norm()));
  }
  for (int trial = 0; trial < 20; ++trial) {
    PhasePoint p = random_point(rng, 1, 0.1);
    p.phi = wrap_unit(m.phi_minus + 0.1 * (p.r - 0.05));
    Eigen::MatrixXd J = jacobian_T1(m, p);
    Eigen::MatrixXd Jfd = fd_jacobian(
        [&](const PhasePoint& z) { return apply_T1(m, z); }, p, 1, 1e-6);
    CHECK((J - Jfd).cwiseAbs().maxCoeff() < 2e-6 * std::max(1.0, J.norm()));
  }
  // Inverse jacobian really is the inverse.
  PhasePoint p = random_point(rng, 1, 0.3);
  Eigen::MatrixXd Ji = jacobian_T0_inverse(m, apply_T0(m, p));
  Eigen::MatrixXd J = jacobian_T0(m, p);
  CHECK((Ji * J - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <
        1e-9);
}

TEST_CASE("all map families are exactly symplectic") {
  std::mt19937_64 rng(41);
  ModelSpec plain;
  ModelSpec coupled;
  coupled.couple = 0.7;
  for (int trial = 0; trial < 200; ++trial) {
    PhasePoint p = random_point(rng, 1, 0.8);
    CHECK(symplectic_defect(2, jacobian_T0(plain, p)) == 0.0);
    CHECK(symplectic_defect(2, jacobian_T0(coupled, p)) < 1e-12);
    CHECK(symplectic_defect(2, jacobian_T1(plain, p)) < 1e-12);
    CHECK(symplectic_defect(2, jacobian_T1_inverse(plain, p)) < 1e-12);
  }
  for (PerturbKind kind :
       {PerturbKind::Shear, PerturbKind::AlphaScale, PerturbKind::Translate,
        PerturbKind::Rotate, PerturbKind::Twist}) {
    PerturbationSpec pert{kind, 0.13, -0.07};
    PhasePoint p = random_point(rng, 1, 0.5);
    CHECK(symplectic_defect(2, jacobian_perturbation(plain, pert, p)) < 1e-12);
  }
  // N = 3 strong blocks as well.
  ModelSpec wide;
  wide.N = 3;
  wide.x_plus = Eigen::VectorXd::Zero(2);
  wide.y_minus = Eigen::VectorXd::Zero(2);
  wide.couple = 0.4;
  PhasePoint p = random_point(rng, 2, 0.5);
  CHECK(symplectic_defect(3, jacobian_T0(wide, p)) < 1e-12);
  CHECK(symplectic_defect(3, jacobian_T1(wide, p)) < 1e-12);
}

TEST_CASE("perturbation generators compose into parameter updates") {
  std::mt19937_64 rng(51);
  ModelSpec m;
  m.mu = 0.01;
  m.nu = -0.02;
  // Exit-line generators against T1.
  for (PerturbKind kind :
       {PerturbKind::Shear, PerturbKind::Translate, PerturbKind::AlphaScale}) {
    PerturbationSpec pert{kind, 0.05, kind == PerturbKind::AlphaScale ? 0.0 : 0.03};
    ModelSpec m2 = compose_perturbation(m, pert);
    for (int trial = 0; trial < 40; ++trial) {
      PhasePoint p = random_point(rng, 1, 0.08);
      PhasePoint a = apply_perturbation(m, pert, apply_T1(m, p));
      PhasePoint b = apply_T1(m2, p);
      CHECK(a.r == doctest::Approx(b.r).epsilon(1e-12));
      CHECK(mod0(a.phi - b.phi, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
      CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() < 1e-12);
      CHECK((a.y - b.y).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
  // Inner generators against T0.
  for (PerturbKind kind : {PerturbKind::Rotate, PerturbKind::Twist}) {
    PerturbationSpec pert{kind, 0.013, 0.0};
    ModelSpec m2 = compose_perturbation(m, pert);
    for (int trial = 0; trial < 40; ++trial) {
      PhasePoint p = random_point(rng, 1, 0.3);
      PhasePoint a = apply_perturbation(m, pert, apply_T0(m, p));
      PhasePoint b = apply_T0(m2, p);
      CHECK(a.r == doctest::Approx(b.r).epsilon(1e-12));
      CHECK(mod0(a.phi - b.phi, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("anchor charts diagonalize the strong transition") {
  ModelSpec m;  // hyp = (1,1;1,2)
  const double delta = 0.05;
  Chart cm = chart_minus(m, Scheme::Ifs, delta);
  Chart cp = chart_plus(m, Scheme::Ifs, delta);
  CHECK(cm.s_mix == doctest::Approx(-0.5));
  CHECK(cp.s_mix == doctest::Approx(0.5));

  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    RescaledPoint q;
    q.R = U(rng);
    q.Phi = U(rng);
    q.X = Eigen::VectorXd::Constant(1, U(rng));
    q.Y = Eigen::VectorXd::Constant(1, U(rng));
    RescaledPoint out = to_rescaled(cp, apply_T1(m, from_rescaled(cm, q)));
    // Slanted strong lines make the block exactly diagonal: X/d and d*Y.
    CHECK(out.X[0] == doctest::Approx(q.X[0] / m.hyp.d).epsilon(1e-9));
    CHECK(out.Y[0] == doctest::Approx(m.hyp.d * q.Y[0]).epsilon(1e-9));
  }
}

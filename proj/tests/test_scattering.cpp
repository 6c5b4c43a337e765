#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <tanglab/scattering.hpp>

#include <cmath>
#include <random>

using namespace tanglab;

namespace {

ScatLinear diag_map(double a) {
  Eigen::Matrix2d L;
  L << a, 0, 0, 1.0 / a;
  return ScatLinear::from(L);
}

ScatLinear rotation_map(double t) {
  Eigen::Matrix2d L;
  L << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  return ScatLinear::from(L);
}

ScatLinear upper_shear() {
  Eigen::Matrix2d L;
  L << 1, 1, 0, 1;
  return ScatLinear::from(L);
}

}  // namespace

TEST_CASE("linear scattering data round-trips and validates") {
  Eigen::Matrix2d M;
  M << 2, 3, 0.5, 1.25;  // det = 1
  ScatLinear s = ScatLinear::from(M, 0.1, -0.2);
  CHECK(s.L() == M);
  CHECK(s.mu == 0.1);
  CHECK(s.nu == -0.2);
  CHECK_NOTHROW(validate(s));

  ScatLinear bad;
  bad.b11 = 2;  // det = 2
  bool threw = false;
  try {
    validate(bad);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.kind == ErrorKind::Input);
  }
  CHECK(threw);
}

TEST_CASE("direction energy extrema equal the singular spectrum") {
  ScatSpectrum d = scat_spectrum(diag_map(2.0));
  CHECK(d.lambda == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(d.phi_plus == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(d.phi_minus == doctest::Approx(M_PI / 2).epsilon(1e-9));

  ScatSpectrum sh = scat_spectrum(upper_shear());
  CHECK(sh.lambda ==
        doctest::Approx((3.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-12));
  CHECK(sh.phi_plus == doctest::Approx(1.017222).epsilon(1e-5));
  CHECK(sh.phi_minus == doctest::Approx(2.588018).epsilon(1e-5));
  // The extremal directions of a symmetric form are orthogonal.
  CHECK(std::abs(sh.phi_minus - sh.phi_plus) ==
        doctest::Approx(M_PI / 2).epsilon(1e-9));

  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    ScatLinear s = ScatLinear::from(random_shear_symplectic(rng));
    ScatSpectrum sp = scat_spectrum(s);
    CHECK(sp.lambda >= 1.0);
    CHECK(sp.phi_plus >= 0.0);
    CHECK(sp.phi_plus < M_PI);
    CHECK(sp.phi_minus >= 0.0);
    CHECK(sp.phi_minus < M_PI);
    // g0 at the reported extrema equals the exact eigenvalues of L^T L.
    Eigen::Matrix2d G = s.L().transpose() * s.L();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(G);
    const double lam_min = es.eigenvalues()[0];
    const double lam_max = es.eigenvalues()[1];
    CHECK(std::abs(sp.lambda - lam_max) <= 1e-12 * lam_max);
    CHECK(std::abs(g0(s, sp.phi_plus) - lam_max) <= 1e-12 * lam_max);
    CHECK(std::abs(g0(s, sp.phi_minus) - lam_min) <= 1e-12);
    // Unit determinant: the extremes are reciprocal.
    CHECK(sp.lambda * lam_min == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("expansion test and row normalization") {
  CHECK(c3_check(diag_map(2.0)));
  CHECK(c3_check(upper_shear()));
  CHECK(!c3_check(ScatLinear{}));
  CHECK(!c3_check(rotation_map(0.7)));

  // The rotated matrix separates its row norms by the promised spread.
  for (ScatLinear s : {diag_map(2.0), upper_shear()}) {
    const double theta = normalize_rows(s);
    Eigen::Matrix2d R;
    R << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    Eigen::Matrix2d C = R * s.L() * R.transpose();
    const double gap =
        std::abs(C.row(0).squaredNorm() - C.row(1).squaredNorm());
    const ScatSpectrum sp = scat_spectrum(s);
    CHECK(gap >= (sp.lambda - 1.0 / sp.lambda) / 4.0);
  }
  CHECK(normalize_rows(upper_shear()) ==
        doctest::Approx(2.588018).epsilon(1e-5));
  CHECK_THROWS_AS(normalize_rows(rotation_map(0.3)), Error);
}

TEST_CASE("tangency radii scale by the spectrum at leading order") {
  TangencyRadii tr = tangency_radii(diag_map(2.0), 1e-3);
  CHECK(!tr.degenerate);
  CHECK(tr.r_plus == doctest::Approx(4e-3).epsilon(1e-12));
  CHECK(tr.r_minus == doctest::Approx(2.5e-4).epsilon(1e-12));

  TangencyRadii rot = tangency_radii(rotation_map(0.5), 1e-3);
  CHECK(rot.degenerate);
  CHECK(rot.r_plus == doctest::Approx(1e-3).epsilon(1e-10));
  CHECK(rot.r_minus == doctest::Approx(1e-3).epsilon(1e-10));

  CHECK_THROWS_AS(tangency_radii(diag_map(2.0), 0.0), Error);
  CHECK_THROWS_AS(tangency_radii(diag_map(2.0), 0.2), Error);
}

TEST_CASE("nonlinear tangency radii and their deviation exponent") {
  ScatLinear s = diag_map(2.0);
  // Quadratic shear 0.25 at r = 1e-3: outer radius gains the square of
  // the shear displacement; the inner radius is untouched at this order.
  CHECK(tangency_radius_nl(s, 0.25, 1e-3, true) ==
        doctest::Approx(0.0040000333333).epsilon(1e-9));
  CHECK(tangency_radius_nl(s, 0.25, 1e-3, false) ==
        doctest::Approx(0.00025).epsilon(1e-10));
  // Shear off reduces to the linear radii.
  CHECK(tangency_radius_nl(s, 0.0, 1e-3, true) ==
        doctest::Approx(0.004).epsilon(1e-10));

  std::vector<double> rs;
  for (int j = 0; j <= 6; ++j)
    rs.push_back(std::pow(10.0, -5.0 + 2.0 * j / 6.0));
  const double expo = radii_deviation_exponent(s, 0.25, rs);
  CHECK(expo >= 1.4);
  CHECK(expo > 1.9);
  CHECK(expo < 2.1);

  CHECK_THROWS_AS(radii_deviation_exponent(s, 0.25, {1e-3}), Error);
  CHECK_THROWS_AS(tangency_radius_nl(s, 0.25, -1e-3, true), Error);
}

TEST_CASE("geometric radii sets and shortest admissible chains") {
  KamRadiiSet G = make_geometric_radii(0.01, 0.05, 1.1);
  REQUIRE(G.radii.size() == 17);
  CHECK(G.radii.front() == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(G.radii.back() == doctest::Approx(0.0459497).epsilon(1e-6));
  for (size_t i = 0; i + 1 < G.radii.size(); ++i)
    CHECK(G.radii[i] < G.radii[i + 1]);
  CHECK(G.c == 0.38);
  CHECK(G.tau == 1.2);

  // lambda = 4 map: one intermediate hop suffices, smallest index wins.
  ScatLinear s = diag_map(2.0);
  std::vector<double> chain = hetero_chain(G, s, 0.01, G.radii.back());
  REQUIRE(chain.size() == 3);
  CHECK(chain[0] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(chain[1] == doctest::Approx(0.0121).epsilon(1e-9));
  CHECK(chain[2] == doctest::Approx(G.radii.back()).epsilon(1e-12));
  // Every hop obeys the expansion window.
  const double lam = 4.0;
  for (size_t i = 0; i + 1 < chain.size(); ++i) {
    const double ratio = chain[i + 1] / chain[i];
    CHECK(ratio > (1.0 + 0.05) / lam);
    CHECK(ratio < lam * (1.0 - 0.05));
  }

  CHECK(hetero_chain(G, s, 0.01, 0.01).size() == 1);
  // 0.0105 falls strictly between the first two radii (0.01 and 0.011).
  CHECK_THROWS_AS(hetero_chain(G, s, 0.0105, G.radii.back()), Error);
  CHECK_THROWS_AS(hetero_chain(G, rotation_map(0.4), 0.01, 0.0121), Error);
  // Expansion window empty: no chain can exist.
  KamRadiiSet far = make_geometric_radii(0.01, 0.05, 5.0);
  ScatLinear weak = diag_map(1.02);
  CHECK_THROWS_AS(hetero_chain(far, weak, far.radii[0], far.radii[1]), Error);
  CHECK_THROWS_AS(make_geometric_radii(0.05, 0.01, 1.1), Error);
}

TEST_CASE("center connections place both images on the target radius") {
  ScatLinear s = diag_map(2.0);
  ConnectResult c = connect_saddle_center(s, 1e-3);
  CHECK(c.theta == doctest::Approx(std::atan(0.5)).epsilon(1e-12));
  CHECK(c.mu == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(c.nu == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(c.residual <= 1e-12);
  // The offset sits on the energy shell of the target radius.
  CHECK(c.mu * c.mu + c.nu * c.nu == doctest::Approx(2e-3).epsilon(1e-13));

  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    ScatLinear m = ScatLinear::from(random_shear_symplectic(rng));
    if (!c3_check(m)) continue;
    ConnectResult cc = connect_saddle_center(m, 1e-3);
    CHECK(cc.residual <= 1e-10);
    CHECK(cc.mu * cc.mu + cc.nu * cc.nu ==
          doctest::Approx(2e-3).epsilon(1e-12));
  }

  bool threw = false;
  try {
    connect_saddle_center(rotation_map(1.1), 1e-3);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.kind == ErrorKind::Input);
    CHECK(std::string(e.what()).find("must exceed 2") != std::string::npos);
  }
  CHECK(threw);
  CHECK_THROWS_AS(connect_saddle_center(s, 0.02), Error);
  CHECK_THROWS_AS(connect_saddle_center(s, 0.0), Error);
}

TEST_CASE("radius pairing matches the two-sided quadratic tangencies") {
  KamRadiiSet Gp;
  Gp.radii = {0.005, 0.01, 0.02};
  KamRadiiSet Gm;
  Gm.radii = {-0.04, -0.02, -0.011};

  PairRadii pos = pair_radii_two_quadratics(Gp, Gm, 2.0, 0.0);
  CHECK(pos.r_plus == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(pos.r_minus == doctest::Approx(-0.02).epsilon(1e-12));
  CHECK(pos.mu == doctest::Approx(0.01).epsilon(1e-12));  // mu = r+

  PairRadii neg = pair_radii_two_quadratics(Gp, Gm, -2.0, 0.0);
  CHECK(neg.r_plus == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(neg.r_minus == doctest::Approx(-0.02).epsilon(1e-12));
  CHECK(neg.mu == 0.0);

  KamRadiiSet one_p;
  one_p.radii = {0.005};
  KamRadiiSet one_m;
  one_m.radii = {-0.04};
  CHECK_THROWS_AS(pair_radii_two_quadratics(one_p, one_m, 2.0, 0.0), Error);
  CHECK_THROWS_AS(pair_radii_two_quadratics(Gm, Gm, 2.0, 0.0), Error);
  CHECK_THROWS_AS(pair_radii_two_quadratics(Gp, Gm, 0.0, 0.0), Error);
}

TEST_CASE("cubic merge of two quadratic tangencies: exact limit triples") {
  CubicTangency a = cubic_from_two_quadratics(1.0);
  CHECK(a.Phi_t == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(a.mu1 == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(a.mu2 == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(a.root_residual <= 1e-12);
  CHECK(a.genericity == doctest::Approx(-1.0).epsilon(1e-12));

  CubicTangency b = cubic_from_two_quadratics(-1.0);
  CHECK(b.Phi_t == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(b.mu1 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(b.mu2 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(b.genericity == doctest::Approx(1.0).epsilon(1e-12));

  CubicTangency c = cubic_from_two_quadratics(8.0);
  CHECK(c.Phi_t == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(c.mu1 == doctest::Approx(-6.75).epsilon(1e-12));
  CHECK(c.mu2 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c.root_residual <= 1e-12);
  CHECK(c.genericity == doctest::Approx(-2.0).epsilon(1e-12));

  CHECK_THROWS_AS(cubic_from_two_quadratics(0.0), Error);
}

TEST_CASE("cubic merge at finite order tracks the 1/k forcing") {
  CubicTangency fine = cubic_from_two_quadratics(1.0, 1000);
  CHECK(fine.Phi_t == doctest::Approx(-0.999499666).epsilon(1e-8));
  CHECK(fine.mu1 == doctest::Approx(-0.998999750).epsilon(1e-8));
  CHECK(fine.mu2 == doctest::Approx(-0.999999750).epsilon(1e-8));
  CHECK(fine.iters >= 1);
  // The solution sits O(1/k) away from the limit cube equation.
  CHECK(fine.root_residual > 0.002);
  CHECK(fine.root_residual < 0.004);

  CubicTangency coarse = cubic_from_two_quadratics(8.0, 10);
  CHECK(coarse.Phi_t == doctest::Approx(-1.483192).epsilon(1e-5));
  CHECK(coarse.mu1 == doctest::Approx(-6.700002).epsilon(1e-5));
  CHECK(coarse.mu2 == doctest::Approx(0.100843).epsilon(1e-4));

  CHECK_THROWS_AS(cubic_from_two_quadratics(1.0, 0), Error);
}

TEST_CASE("secondary cubic family: leading parameters and full solve") {
  SecondaryCubic p = secondary_cubic_params(0.5, 1.0, 100);
  CHECK(p.mu_order == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(p.nu == doctest::Approx(-0.0025).epsilon(1e-15));
  CHECK(p.alpha_new == doctest::Approx(-200.0).epsilon(1e-15));
  CHECK_THROWS_AS(secondary_cubic_params(0.0, 1.0, 100), Error);
  CHECK_THROWS_AS(secondary_cubic_params(0.5, 1.0, 9), Error);

  const double rho = (std::sqrt(5.0) - 1.0) / 2.0;
  const double Theta = mod0(100.0 * rho, 1.0);
  SecondaryCubicSolve sol = secondary_cubic_solve(3.0, 1.0, 1.0, 2.0,
                                                  Theta, 100);
  CHECK(sol.nu_leading == doctest::Approx(-1.0 / 900.0).epsilon(1e-15));
  CHECK(sol.w0 == doctest::Approx(0.00192746200990696).epsilon(1e-10));
  CHECK(sol.nu == doctest::Approx(-0.00108932461873638).epsilon(1e-10));
  // Finite-k slope correction: nu / nu_leading = k m12 / (m22 + k m12).
  CHECK(sol.nu / sol.nu_leading ==
        doctest::Approx(100.0 / 102.0).epsilon(1e-9));
}

TEST_CASE("two-tangency unfolding determinant") {
  CHECK(unfold_two_tangencies_det(4.0, 1.0, 0.01) ==
        doctest::Approx(-0.005625).epsilon(1e-15));
  // Sign flips with either factor; magnitude dies as lambda0 -> 1.
  CHECK(unfold_two_tangencies_det(4.0, -1.0, 0.01) ==
        doctest::Approx(0.005625).epsilon(1e-15));
  CHECK(std::abs(unfold_two_tangencies_det(1.0001, 1.0, 1.0)) < 1e-7);
  CHECK(std::abs(unfold_two_tangencies_det(1.01, 1.0, 1.0)) <
        std::abs(unfold_two_tangencies_det(1.1, 1.0, 1.0)));
  CHECK(std::abs(unfold_two_tangencies_det(1.1, 1.0, 1.0)) <
        std::abs(unfold_two_tangencies_det(2.0, 1.0, 1.0)));
}

TEST_CASE("random shear products are symplectic to rounding") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Matrix2d M = random_shear_symplectic(rng);
    CHECK(std::abs(M.determinant() - 1.0) <= 1e-12);
    CHECK_NOTHROW(validate(ScatLinear::from(M)));
  }
  Eigen::Matrix2d M2 = random_shear_symplectic(rng, 8);
  CHECK(std::abs(M2.determinant() - 1.0) <= 1e-12);
}

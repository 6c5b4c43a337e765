#pragma once

#include <tanglab/core.hpp>

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <vector>

namespace tanglab {

// Saddle-center scattering geometry. Unlike the rest of the library,
// angles in this module are radians, with directions reduced to [0, pi).

// Linear scattering data: the 2x2 symplectic block L = [[b11, b12],
// [b21, b22]] and the image offset (mu, nu) of the center point.
struct ScatLinear {
  double b11{1}, b12{0}, b21{0}, b22{1};
  double mu{0}, nu{0};

  Eigen::Matrix2d L() const;
  static ScatLinear from(const Eigen::Matrix2d& L, double mu = 0,
                         double nu = 0);
};

// |det L - 1| <= 1e-12 or an input error naming the offending entry set.
void validate(const ScatLinear& s);

// Squared norm of L applied to the unit direction at angle phi.
double g0(const ScatLinear& s, double phi);

struct ScatSpectrum {
  double lambda{1};    // max eigenvalue of L^T L; min is 1/lambda
  double phi_plus{0};  // argmax of g0 on [0, pi)
  double phi_minus{0};  // argmin of g0 on [0, pi)
};
ScatSpectrum scat_spectrum(const ScatLinear& s);

// True iff the direction energy actually expands: lambda > 1 + tol.
bool c3_check(const ScatLinear& s, double tol = 1e-10);

// Rotation angle theta such that R L R^{-1} has squared row norms
// separated by at least (lambda - 1/lambda)/4. Errors when L is a
// rotation (no such angle exists).
double normalize_rows(const ScatLinear& s);

struct TangencyRadii {
  double r_plus{0};
  double r_minus{0};
  bool degenerate{false};  // lambda == 1: both radii collapse to r
};
// Leading-order radii (lambda r, r / lambda) of the two circles tangent
// to the image of the circle of radius r. Requires r in (0, 0.1).
TangencyRadii tangency_radii(const ScatLinear& s, double r);

// Extremal image radius of the circle of radius r under the nonlinear
// map (u, v) -> L (u, v + shear u^2); grid scan plus golden refinement.
double tangency_radius_nl(const ScatLinear& s, double shear, double r,
                          bool maximize);
// Least-squares slope of log|r+_nl(r) - lambda r| against log r; the
// quadratic correction enters at exponent 3/2.
double radii_deviation_exponent(const ScatLinear& s, double shear,
                                const std::vector<double>& r_list);

// Synthetic Cantor proxy: a finite set of circle radii carrying a
// (c, tau) Diophantine label. Only density matters to the chain logic.
struct KamRadiiSet {
  std::vector<double> radii;  // strictly increasing, nonzero
  double c{0.38};
  double tau{1.2};
};
KamRadiiSet make_geometric_radii(double r_lo, double r_hi, double ratio,
                                 double c = 0.38, double tau = 1.2);

// Shortest chain r_start = s_0, ..., s_m = r_end inside G with every
// consecutive ratio in (lambda^{-1}(1+eta), lambda(1-eta)); BFS with
// smallest-index tie-breaking, length capped at 64.
std::vector<double> hetero_chain(const KamRadiiSet& G, const ScatLinear& s,
                                 double r_start, double r_end,
                                 double eta = 0.05);

struct ConnectResult {
  double theta{0};
  double mu{0};
  double nu{0};
  double residual{0};  // |r^s - r_target| at leading order
};
// Places the center image on the ray at angle theta with
// mu = sqrt(2 r) cos theta, nu = sqrt(2 r) sin theta so that the forward
// and backward images land on the same radius. Feasible iff
// tr(L^T L) > 2. Requires r_target in (0, 0.01).
ConnectResult connect_saddle_center(const ScatLinear& s, double r_target);

struct PairRadii {
  double r_plus{0};
  double r_minus{0};
  double mu{0};
};
// Matches one radius from each grid so that two quadratic tangencies
// occur at the same parameter: r+ = -r-/alpha at mu = r+ when alpha > 0,
// and r+ = r-/alpha at mu = 0 when alpha < 0. Tolerance 1e-3 relative.
PairRadii pair_radii_two_quadratics(const KamRadiiSet& G_plus,
                                    const KamRadiiSet& G_minus, double alpha,
                                    double mu_hint);

struct CubicTangency {
  double Phi_t{0};
  double mu1{0};
  double mu2{0};
  double root_residual{0};  // |(2 Phi_t + 1)^3 + B|
  double genericity{0};     // 1 + 2 Phi_t, must be nonzero
  int iters{0};
};
// Merges two quadratic tangencies into a cubic one. k omitted solves the
// limit system exactly through the real cube root; finite k runs Newton
// on the system perturbed by an explicit 1/k forcing, seeded by the
// limit solution.
CubicTangency cubic_from_two_quadratics(double B,
                                        std::optional<long long> k =
                                            std::nullopt);

struct SecondaryCubic {
  double mu_order{0};   // k^{-2}, the predicted size scale of mu
  double nu{0};         // -b^2 / k
  double alpha_new{0};  // -k / (b a12), growing linearly in k
};
// Leading-order parameters of the secondary cubic tangency family.
SecondaryCubic secondary_cubic_params(double b, double a12, long long k);

struct SecondaryCubicSolve {
  double w0{0};
  double mu{0};
  double nu{0};
  double nu_leading{0};  // -m12 / (alpha^2 k)
  int iters{0};
};
// Full solve of the composed one-dimensional return
//   rbar(w) = mu + m12 w / alpha + nu s + beta s^3,
//   s = alpha (Theta + (m22 + k m12) w),
// for the parameters killing value, slope, and curvature at once.
SecondaryCubicSolve secondary_cubic_solve(double alpha, double beta,
                                          double m12, double m22,
                                          double Theta, long long k);

// Leading determinant of the two-tangency unfolding,
// -(lambda0 - 1)^2 / lambda0^2 * A * r_star.
double unfold_two_tangencies_det(double lambda0, double A, double r_star);

// Product of n alternating random shears: symplectic to rounding error.
Eigen::Matrix2d random_shear_symplectic(std::mt19937_64& rng,
                                        int n_factors = 4);

}  // namespace tanglab

#pragma once

#include <tanglab/diophantine.hpp>

#include <array>
#include <optional>
#include <vector>

namespace tanglab {

// A family of first-return maps T_k = T0^k o T1 for the admissible
// indices k of one convergent p/q, together with the rescaling charts
// at box size delta = 5/(2q).
struct ReturnFamily {
  ModelSpec m;
  RationalApprox approx;
  Scheme scheme{Scheme::Ifs};
  double d{0};
  double delta{0};
  ReturnSet rset;
  Chart entry_chart;  // minus-anchor chart; domain and range of T_k
  Chart exit_chart;   // plus-anchor chart; used across the transition

  bool decoupled() const { return m.couple == 0.0 && m.inner_pert == 0.0; }
};

// d defaults to (|alpha|-1)/(|alpha|+1). Both rescaling schemes require
// the cubic tangency (ell = 2); the quadratic family rescales at
// incompatible exponents and is rejected.
ReturnFamily make_return_family(const ModelSpec& m, const RationalApprox& ap,
                                Scheme scheme,
                                std::optional<double> d = std::nullopt);

// Forward orbit of T0 with domain guards; stops at the first point
// outside the domain and records its index.
struct Trajectory {
  std::vector<PhasePoint> pts;
  std::optional<long long> exit_index;
};
Trajectory iterate_T0(const ModelSpec& m, const PhasePoint& p0, long long k);

// Two-point problem along a T0 chain: entry (r0, phi0, x0) and exit y_k
// are prescribed; the solver returns the complementary boundary data.
// Decoupled models are closed form; coupled models iterate
// forward/backward sweeps on the y-stream.
struct BvpResult {
  double r_k{0}, phi_k{0};
  Eigen::VectorXd x_k, y_0;
  int iters{0};
  double residual{0};
};
BvpResult solve_T0_bvp(const ModelSpec& m, double r0, double phi0,
                       const Eigen::VectorXd& x0, const Eigen::VectorXd& y_k,
                       long long k, double tol = 1e-13, int max_iter = 200);

// Full return map on phase points. Requires k admissible and the point
// inside the transition domain; a strong-coordinate blowup along the
// chain aborts with the first exit index.
PhasePoint return_map(const ReturnFamily& fam, long long k,
                      const PhasePoint& p);

// Return map conjugated by the entry chart (forward form).
RescaledPoint rescaled_return(const ReturnFamily& fam, long long k,
                              const RescaledPoint& rp);

// Cross form of the rescaled return: inputs are the entry-side
// (R, Phi, X) and the exit-side Ybar; outputs the exit-side
// (Rb, Phib, Xb) and the entry-side Y. This is the contractive
// formulation: the forward map expands Y by lambda_ss^{-k}.
struct CrossResult {
  RescaledPoint in;   // entry point, Y solved
  RescaledPoint out;  // exit point, Y prescribed
  PhasePoint entry, exit;
  long long k{0};
  Eigen::MatrixXd jac;  // d(Rb,Phib,Xb,Y)/d(R,Phi,X,Ybar)
  bool has_jac{false};
  int iters{0};
  double residual{0};
};
CrossResult cross_return(const ReturnFamily& fam, long long k, double R,
                         double Phi, const Eigen::VectorXd& X,
                         const Eigen::VectorXd& Ybar, bool want_jac = false);

// Affine model the cross form converges to as delta -> 0:
// (Rb, Phib) = (R/alpha, A(k) + alpha*Phi), strong components zero.
Eigen::MatrixXd affine_cross_jacobian(const ReturnFamily& fam);

// Sup-norm distance of the cross form from its affine model over a
// product grid on the unit box; C1 distance uses analytic Jacobians.
struct DeviationReport {
  double dev_c0{0};
  double dev_c1{0};
  long long n_points{0};
};
DeviationReport deviation_from_affine(const ReturnFamily& fam, long long k,
                                      std::array<int, 4> grid = {16, 16, 4,
                                                                 4});

// Drift of the perturbed inner map against the rigid prediction.
// k_rule: floor(r0^{1-m} / 10).
long long growth_k_rule(double r0, int m);
struct GrowthSample {
  double r0{0};
  long long k{0};
  double max_r_dev{0};     // max_j |r_j - r0|
  double predicted{0};     // k * eps * r0^m
  double phi_dev{0};       // max_j |phi_j - phi0 - j(rho + twist r0)|, unwrapped
};
struct GrowthReport {
  std::vector<GrowthSample> samples;
  double slope{0};       // LS slope of log(max_r_dev) vs log(predicted)
  double max_ratio{0};   // max of max_r_dev / predicted
};
GrowthReport verify_inner_growth(const ModelSpec& m,
                                 const std::vector<double>& r0_list,
                                 double phi0 = 0.0);

}  // namespace tanglab

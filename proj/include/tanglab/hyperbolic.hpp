#pragma once

#include <tanglab/returns.hpp>

#include <array>
#include <vector>

namespace tanglab {

// Cone families in rescaled tangent coordinates (dR, dPhi, dX, dY):
//   U:  max(|dR|, |dX|)        <= L (|dPhi| + |dY|)   (center-unstable)
//   UU: max(|dR|, |dPhi|, |dX|) <= L |dY|             (strong unstable)
//   S:  max(|dPhi|, |dY|)      <= L (|dR| + |dX|)     (center-stable)
//   SS: max(|dR|, |dPhi|, |dY|) <= L |dX|             (strong stable)
// Vector norms on the strong coordinates are Euclidean.
enum class ConeKind { U, UU, S, SS };

// Slack of the cone inequality at v; positive strictly inside.
double cone_margin(ConeKind kind, double L, const Eigen::VectorXd& v, int n);

// Deterministic set of vectors on the cone boundary, 16 directions per
// two-plane section spanned by one wide axis and one narrow axis.
std::vector<Eigen::VectorXd> cone_boundary_vectors(ConeKind kind, double L,
                                                   int n);

struct ConeWitness {
  long long k{0};
  double R{0}, Phi{0};
  ConeKind kind{ConeKind::U};
  double margin{0};
};

struct ConeReport {
  double L{0};
  double margin_u{1e300}, margin_uu{1e300};
  double margin_s{1e300}, margin_ss{1e300};
  double expansion_min{1e300};   // u-norm growth of U-boundary vectors
  double contraction_max{0};     // s-norm decay onto S-boundary vectors
  long long n_points{0};
  long long n_vectors{0};
  std::vector<ConeWitness> witnesses;
  bool pass{false};

  double margin_min() const;
};

// Checks forward invariance of U/UU and backward invariance of S/SS on
// a grid of cross states whose entry and exit both lie in the unit box,
// over every admissible return index.
ConeReport verify_cones(const ReturnFamily& fam, double L,
                        std::array<int, 4> grid = {9, 9, 3, 3});

// Periodic orbit with a prescribed itinerary of return indices.
// Solved on the cross form (Newton after a Picard warm start); the
// closure residual is the sup-norm cross-equation defect.
struct CodingResult {
  std::vector<long long> word;
  std::vector<RescaledPoint> states;
  double closure_residual{0};
  int iters{0};
  bool converged{false};
  std::vector<double> log10_moduli;  // descending, one per tangent direction
  int n_expanding{0};
};
CodingResult coding_orbit(const ReturnFamily& fam,
                          const std::vector<long long>& word,
                          double tol = 1e-12);

// Distance between two periodic itineraries as orbit sets: best cyclic
// alignment of the state sequences (lifted to a common period).
double orbit_distance(const CodingResult& A, const CodingResult& B);

// Central fixed point of one rescaled return, against its small-box
// limit formulas Phi* = A/(1-alpha), R* = -beta alpha^4 A^3 / (1-alpha)^4
// (the radial formula carries the scheme's residual shear scale).
struct FixedPointResult {
  double R{0}, Phi{0};
  double formula_R{0}, formula_Phi{0};
  double gap{0};  // sup-distance of the solved point from the formulas
  int iters{0};
  bool in_box{false};
};
FixedPointResult rescaled_fixed_point(const ReturnFamily& fam, long long k);

// Local invariant manifold of the central fixed point as a polynomial
// graph: side 'u' is R = g(Phi), side 's' is Phi = h(R).
struct ManifoldGraph {
  char side{'u'};
  double window_lo{0}, window_hi{0};
  Eigen::VectorXd nodes;
  Eigen::VectorXd values;
  std::array<double, 4> coef{};  // a0 + a1 t + a2 t^2 + a3 t^3
  double fit_rms{0};
};
ManifoldGraph unstable_graph(const ReturnFamily& fam, long long k,
                             int n_nodes = 200, int iters = 40);
ManifoldGraph stable_graph(const ReturnFamily& fam, long long k,
                           int n_nodes = 200, int iters = 40);

// Degeneracy test for the image of the unstable graph: a perfect-cube
// image cubic is a coincident (fully tangent) crossing of the R = 0 slab;
// otherwise the crossing angles at the real roots certify transversality.
enum class CrossingStatus { Transversal, Inconclusive, Coincident };
struct TransversalityReport {
  CrossingStatus status{CrossingStatus::Inconclusive};
  double min_angle{0};                  // atan |dR/dPhi| at the real roots
  std::array<double, 4> image_coef{};   // fitted image cubic
  double cube_defect_c1{0};             // c1 - c2^2/(3 c3)
  double cube_defect_c0{0};             // c0 - c2^3/(27 c3^2)
};
TransversalityReport transverse_heteroclinic_check(const ReturnFamily& fam,
                                                   long long k,
                                                   const ManifoldGraph& gu);

}  // namespace tanglab

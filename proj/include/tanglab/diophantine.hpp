#pragma once

#include <tanglab/model.hpp>

#include <vector>

namespace tanglab {

// Continued-fraction convergent p/q of a rotation number;
// C = (rho - p/q) * q^2 is the normalized approximation error, |C| < 1.
struct RationalApprox {
  long long p{0};
  long long q{1};
  double C{0};
};

// All convergents with 1 <= q <= q_max.
// A rotation number whose continued fraction is exhausted, or hits a
// partial quotient larger than q_max, while q <= q_max is rejected:
// it is rational at every scale the caller can certify.
std::vector<RationalApprox> convergents(const RotationNumber& rho,
                                        long long q_max);

// Solution of k*p = -s (mod q) with k in [q, 2q-1]; n = (k*p + s)/q.
struct CongruenceSolution {
  long long k{0};
  long long n{0};
};
CongruenceSolution solve_covering_congruence(long long p, long long q,
                                             long long s);

// Shift index selecting the return whose angle offset lands nearest a
// target leaf: s = round(q * ((phi_gap + delta*alpha*Phi) mod0 1)),
// ties toward zero.
long long covering_shift(long long q, double phi_gap, double delta,
                         double alpha, double Phi);

// Admissible return indices k in [q, 2q-1]: those whose angle offset
// (phi_plus - phi_minus + k*rho) mod0 1 is smaller than d*(1+|alpha|)*delta.
struct ReturnSet {
  long long p{0};
  long long q{1};
  double delta{0};      // 5/(2q)
  double d{0};          // angle half-width of the covering box
  double phi_gap{0};    // (phi_plus - phi_minus) mod0 1
  std::vector<long long> K;
  std::vector<double> offsets;  // aligned with K
  bool has_wide_offset{false};  // some |offset|/delta >= 3/5

  bool contains(long long k) const;
  // Rescaled offset A(k) = offset/delta for k in K.
  double A_of(long long k) const;
};

ReturnSet build_return_set(const ModelSpec& m, const RationalApprox& ap,
                           double d);

// Default angle half-width (|alpha|-1)/(|alpha|+1); requires |alpha| > 1.
double default_angle_width(double alpha);

// Best admissible return for a leaf at rescaled angle Phi:
// maximizes d - |A(k) + alpha*Phi| (ties to the smaller k).
struct CoverResult {
  bool holds{false};
  long long k{0};
  double margin{0};
};
CoverResult coverp_best(const ReturnSet& rs, double alpha, double Phi);

// Checks |rho - p/q| > c / q^tau over all convergents with q <= q_max.
struct DiophantineReport {
  bool ok{false};
  long long worst_q{0};
  double worst_ratio{0};  // min over convergents of |rho-p/q| q^tau / c
};
DiophantineReport check_diophantine(const RotationNumber& rho, double c,
                                    double tau, long long q_max);

}  // namespace tanglab

#include <tanglab/diophantine.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

namespace tanglab {

namespace {

using i128 = __int128;

// Stream of partial quotients [0; a1, a2, ...] for rho in (0,1).
class QuotientStream {
 public:
  explicit QuotientStream(const RotationNumber& rho) : kind_(rho.kind) {
    switch (rho.kind) {
      case RotKind::Golden:
      case RotKind::Silver:
        break;
      case RotKind::Quotients:
        list_ = rho.quotients;
        break;
      case RotKind::Decimal: {
        double v = rho.decimal;
        if (!(v > 0.0 && v < 1.0))
          input_error("decimal rotation number must lie in (0,1)");
        int e;
        double f = std::frexp(v, &e);  // v = f * 2^e, f in [0.5, 1)
        i128 num = static_cast<i128>(std::ldexp(f, 53));
        int shift = 53 - e;
        if (shift < 0 || shift > 120)
          input_error("decimal rotation number out of representable range");
        i128 den = i128(1) << shift;
        num_ = num;
        den_ = den;
        break;
      }
    }
  }

  // Next quotient, or false when the expansion is exhausted.
  bool next(long long& a) {
    ++idx_;
    switch (kind_) {
      case RotKind::Golden:
        a = 1;
        return true;
      case RotKind::Silver:
        a = 2;
        return true;
      case RotKind::Quotients:
        if (idx_ > static_cast<long long>(list_.size())) return false;
        a = list_[idx_ - 1];
        return true;
      case RotKind::Decimal: {
        // Euclid on the exact dyadic fraction num_/den_ (inverted each step).
        if (num_ == 0) return false;
        i128 quot = den_ / num_;
        i128 rem = den_ - quot * num_;
        den_ = num_;
        num_ = rem;
        if (quot > i128(1) << 62) return false;  // effectively terminated
        a = static_cast<long long>(quot);
        return true;
      }
    }
    return false;
  }

 private:
  RotKind kind_;
  std::vector<long long> list_;
  i128 num_{0}, den_{1};
  long long idx_{0};
};

// Extended Euclid: returns g = gcd(a,b) and u with u*a = g (mod b).
long long inverse_mod(long long a, long long b) {
  i128 old_r = a, r = b;
  i128 old_s = 1, s = 0;
  while (r != 0) {
    i128 q = old_r / r;
    i128 t = old_r - q * r;
    old_r = r;
    r = t;
    t = old_s - q * s;
    old_s = s;
    s = t;
  }
  if (old_r != 1)
    input_error("covering congruence requires gcd(p, q) = 1");
  i128 u = old_s % b;
  if (u < 0) u += b;
  return static_cast<long long>(u);
}

}  // namespace

std::vector<RationalApprox> convergents(const RotationNumber& rho,
                                        long long q_max) {
  if (q_max < 1) input_error("convergents require q_max >= 1");
  const long double value = static_cast<long double>(rho.value());
  QuotientStream stream(rho);
  std::vector<RationalApprox> out;
  i128 p_prev = 1, q_prev = 0;  // p_{-1}/q_{-1}
  i128 p_cur = 0, q_cur = 1;    // p_0/q_0 = 0/1
  long long a = 0;
  while (true) {
    bool have = stream.next(a);
    if (!have) {
      input_error(
          "rotation number is rational below q_max; "
          "supply more precision or an exact quotient list");
    }
    if (a <= 0) input_error("rotation quotients must be positive");
    if (a > q_max && q_cur <= q_max) {
      if (out.empty())
        input_error("rotation number too close to an integer for q_max");
      input_error(
          "decimal rotation number is rational at scale q_max "
          "(giant partial quotient); supply more precision");
    }
    i128 p_next = i128(a) * p_cur + p_prev;
    i128 q_next = i128(a) * q_cur + q_prev;
    if (q_next > q_max) break;
    p_prev = p_cur;
    q_prev = q_cur;
    p_cur = p_next;
    q_cur = q_next;
    RationalApprox ap;
    ap.p = static_cast<long long>(p_cur);
    ap.q = static_cast<long long>(q_cur);
    long double err = value - static_cast<long double>(ap.p) /
                                  static_cast<long double>(ap.q);
    ap.C = static_cast<double>(err * ap.q * ap.q);
    out.push_back(ap);
  }
  if (out.empty())
    input_error("no convergents with q <= q_max");
  return out;
}

CongruenceSolution solve_covering_congruence(long long p, long long q,
                                             long long s) {
  if (q < 1 || p < 0) input_error("covering congruence requires q >= 1, p >= 0");
  long long pinv = inverse_mod(((p % q) + q) % q, q);
  i128 rhs = i128(-s) % q;
  if (rhs < 0) rhs += q;
  i128 k0 = (rhs * pinv) % q;
  long long k = static_cast<long long>(k0) + q;
  i128 numer = i128(k) * p + s;
  if (numer % q != 0)
    solver_error("covering congruence arithmetic inconsistency");
  CongruenceSolution sol;
  sol.k = k;
  sol.n = static_cast<long long>(numer / q);
  return sol;
}

long long covering_shift(long long q, double phi_gap, double delta,
                         double alpha, double Phi) {
  double t = static_cast<double>(q) * mod0(phi_gap + delta * alpha * Phi, 1.0);
  double a = std::abs(t);
  long long base = static_cast<long long>(std::floor(a));
  double frac = a - static_cast<double>(base);
  if (frac > 0.5) base += 1;  // exact half rounds toward zero
  return t < 0 ? -base : base;
}

bool ReturnSet::contains(long long k) const {
  return std::binary_search(K.begin(), K.end(), k);
}

double ReturnSet::A_of(long long k) const {
  auto it = std::lower_bound(K.begin(), K.end(), k);
  if (it == K.end() || *it != k)
    input_error("return index " + std::to_string(k) +
                " is not in the admissible set");
  return offsets[static_cast<size_t>(it - K.begin())] / delta;
}

double default_angle_width(double alpha) {
  double a = std::abs(alpha);
  if (a <= 1.0)
    input_error(
        "angle width (|alpha|-1)/(|alpha|+1) requires |alpha| > 1; "
        "for a contracting center certify the inverse map");
  return (a - 1.0) / (a + 1.0);
}

ReturnSet build_return_set(const ModelSpec& m, const RationalApprox& ap,
                           double d) {
  if (!(d > 0.0 && d < 1.0)) input_error("angle width d must lie in (0,1)");
  ReturnSet rs;
  rs.p = ap.p;
  rs.q = ap.q;
  rs.d = d;
  rs.delta = 5.0 / (2.0 * static_cast<double>(ap.q));
  rs.phi_gap = mod0(m.phi_plus - m.phi_minus, 1.0);
  const double bound = d * (1.0 + std::abs(m.alpha)) * rs.delta;
  const long double rho = static_cast<long double>(m.rho.value());
  const long double base = static_cast<long double>(m.phi_plus) -
                           static_cast<long double>(m.phi_minus);
  for (long long k = ap.q; k <= 2 * ap.q - 1; ++k) {
    long double off = mod0(base + static_cast<long double>(k) * rho, 1.0L);
    if (std::abs(static_cast<double>(off)) < bound) {
      rs.K.push_back(k);
      rs.offsets.push_back(static_cast<double>(off));
      if (std::abs(static_cast<double>(off)) / rs.delta >= 0.6)
        rs.has_wide_offset = true;
    }
  }
  if (rs.K.empty())
    certification_error(
        "no admissible return indices in [q, 2q): the angle offsets of "
        "q = " + std::to_string(ap.q) + " all clear the covering window");
  return rs;
}

CoverResult coverp_best(const ReturnSet& rs, double alpha, double Phi) {
  CoverResult best;
  best.margin = -1e300;
  for (size_t i = 0; i < rs.K.size(); ++i) {
    double A = rs.offsets[i] / rs.delta;
    double margin = rs.d - std::abs(A + alpha * Phi);
    if (margin > best.margin) {
      best.margin = margin;
      best.k = rs.K[i];
    }
  }
  best.holds = best.margin > 0.0;
  return best;
}

DiophantineReport check_diophantine(const RotationNumber& rho, double c,
                                    double tau, long long q_max) {
  if (!(c > 0.0)) input_error("diophantine constant c must be positive");
  auto list = convergents(rho, q_max);
  const long double value = static_cast<long double>(rho.value());
  DiophantineReport rep;
  rep.ok = true;
  rep.worst_ratio = 1e300;
  for (const auto& ap : list) {
    long double err = std::abs(value - static_cast<long double>(ap.p) /
                                           static_cast<long double>(ap.q));
    long double ratio =
        err * std::pow(static_cast<long double>(ap.q), (long double)tau) / c;
    if (static_cast<double>(ratio) < rep.worst_ratio) {
      rep.worst_ratio = static_cast<double>(ratio);
      rep.worst_q = ap.q;
    }
  }
  rep.ok = rep.worst_ratio > 1.0;
  return rep;
}

}  // namespace tanglab

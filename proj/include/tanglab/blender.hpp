#pragma once

#include <tanglab/hyperbolic.hpp>
#include <tanglab/returns.hpp>

#include <json.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace tanglab {

// A disc almost tangent to the strong-stable directions: a graph
// (R, Phi, X) over Y in [-1,1]^n whose slopes stay below `lip`, so its
// tangent planes lie in the narrow backward cone of that aperture.
struct Disc {
  int n{1};
  int nodes_per_axis{33};
  double lip{0.1};
  // Values on the tensor grid in odometer order, axis 0 fastest.
  Eigen::VectorXd R;
  Eigen::VectorXd Phi;
  Eigen::MatrixXd X;  // one row per node, n columns

  Eigen::Index total() const;
  double node(int i) const;
  void interpolate(const Eigen::VectorXd& y, double& R_out, double& Phi_out,
                   Eigen::VectorXd& X_out) const;
  // Largest per-axis difference quotient of (R, Phi, X) between adjacent
  // nodes; the discrete slope of the graph.
  double lipschitz_estimate() const;
};

// Random admissible disc: linear graph with anchors inside the target box
// shrunk by the slope budget and per-axis slopes at most 0.9 L.
Disc make_seed_disc(int n, double d, double L, int nodes_per_axis,
                    std::mt19937_64& rng);

struct CoverStep {
  bool ok{false};
  long long k{0};
  double margin{-1e300};
  double image_lipschitz{0};
  Disc image;
  std::string reason;
};

// One covering move: try every admissible return index, rebuild the image
// of the disc as a graph over the full exit Y-range, and keep the index
// whose image sits deepest inside the kappa-shrunk target box (ties go to
// the smallest index). Fails when no index gives a strict crossing with
// non-increasing slopes.
CoverStep covering_step(const ReturnFamily& fam, double kappa,
                        const Disc& disc);

struct ChainRecord {
  int disc_index{0};
  int steps_done{0};
  double margin{1e300};
  bool ok{false};
  std::string reason;
  std::vector<long long> ks;
};

struct CoverReport {
  int n_discs{0};
  int n_steps{0};
  double margin_min{1e300};
  double success_rate{0};
  bool pass{false};
  std::vector<ChainRecord> failures;  // capped at 8, lowest indices kept
};

// Drives n_discs independent seeded chains of n_steps covering moves each.
// Disc i draws from its own generator derived from (seed, i), so results
// do not depend on the thread count.
CoverReport covering_sweep(const ReturnFamily& fam, double kappa, double L,
                           int n_discs, int n_steps, std::uint64_t seed,
                           int threads = 1);

// Machine-checkable certificate combining the cone, covering, and coding
// evidence for one return family.
nlohmann::json blender_certificate(const ReturnFamily& fam, double kappa,
                                   const ConeReport& cones,
                                   const CoverReport& covering,
                                   const std::vector<CodingResult>& codings);

}  // namespace tanglab

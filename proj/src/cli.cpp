#include <tanglab/config.hpp>
#include <tanglab/diophantine.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

namespace tanglab {

namespace {

using nlohmann::json;

std::string path_in(const ExperimentSpec& spec, const std::string& name) {
  return (std::filesystem::path(spec.out_dir) / name).string();
}

ReturnFamily family_for(const ExperimentSpec& spec, long long q) {
  const auto convs = convergents(spec.model.rho, q);
  std::optional<double> d;
  if (spec.d > 0) d = spec.d;
  return make_return_family(spec.model, convs.back(), spec.scheme, d);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  return x;
}

std::vector<std::vector<long long>> words_for(const ExperimentSpec& spec,
                                              const ReturnFamily& fam) {
  if (!spec.words.empty()) return spec.words;
  std::mt19937_64 rng(mix_seed(spec.seed ^ fnv1a64("words"),
                               static_cast<std::uint64_t>(fam.approx.q)));
  std::uniform_int_distribution<int> len_d(1, spec.max_word_len);
  std::uniform_int_distribution<size_t> sym_d(0, fam.rset.K.size() - 1);
  std::set<std::vector<long long>> seen;
  std::vector<std::vector<long long>> words;
  int guard = 0;
  while (static_cast<int>(words.size()) < spec.n_words && guard < 10000) {
    ++guard;
    const int len = len_d(rng);
    std::vector<long long> w;
    for (int i = 0; i < len; ++i) w.push_back(fam.rset.K[sym_d(rng)]);
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

std::string word_text(const std::vector<long long>& w) {
  std::string s;
  for (size_t i = 0; i < w.size(); ++i) {
    if (i) s += " ";
    s += std::to_string(w[i]);
  }
  return s;
}

json cone_json(const ConeReport& rep) {
  json w = json::array();
  for (const auto& wit : rep.witnesses)
    w.push_back({{"k", wit.k},
                 {"R", wit.R},
                 {"Phi", wit.Phi},
                 {"kind", static_cast<int>(wit.kind)},
                 {"margin", wit.margin}});
  return {{"L", rep.L},
          {"margin_u", rep.margin_u},
          {"margin_uu", rep.margin_uu},
          {"margin_s", rep.margin_s},
          {"margin_ss", rep.margin_ss},
          {"margin_min", rep.margin_min()},
          {"expansion_min", rep.expansion_min},
          {"contraction_max", rep.contraction_max},
          {"n_points", rep.n_points},
          {"n_vectors", rep.n_vectors},
          {"witnesses", w},
          {"pass", rep.pass}};
}

bool cmd_certificate(const ExperimentSpec& spec, std::uint64_t hash) {
  bool all_pass = true;
  json summary = json::array();
  for (long long q : spec.q_list) {
    ReturnFamily fam = family_for(spec, q);
    ConeReport cones = verify_cones(fam, spec.cone_L, spec.cone_grid);
    CoverReport cover =
        covering_sweep(fam, spec.kappa, spec.cone_L, spec.n_discs,
                       spec.n_steps, mix_seed(spec.seed, static_cast<std::uint64_t>(q)),
                       spec.threads);
    std::vector<CodingResult> codings;
    for (const auto& w : words_for(spec, fam)) {
      try {
        codings.push_back(coding_orbit(fam, w));
      } catch (const Error&) {
        CodingResult bad;
        bad.word = w;
        bad.converged = false;
        bad.closure_residual = 1e300;
        codings.push_back(bad);
      }
    }
    json cert = blender_certificate(fam, spec.kappa, cones, cover, codings);
    const bool pass = cert.at("pass").get<bool>();
    write_json_file(
        path_in(spec, "certificate_q" + std::to_string(fam.approx.q) + ".json"),
        cert, hash);
    summary.push_back({{"q", fam.approx.q}, {"pass", pass}});
    all_pass = all_pass && pass;
  }
  write_json_file(path_in(spec, "certificate_summary.json"),
                  {{"runs", summary}, {"pass", all_pass}}, hash);
  return all_pass;
}

bool cmd_covering(const ExperimentSpec& spec, std::uint64_t hash) {
  bool all_pass = true;
  CsvWriter csv(path_in(spec, "covering.csv"),
                "units=rescaled box coordinates",
                {"q", "n_discs", "n_steps", "margin_min", "success_rate"},
                hash);
  json out = json::array();
  for (long long q : spec.q_list) {
    ReturnFamily fam = family_for(spec, q);
    CoverReport rep =
        covering_sweep(fam, spec.kappa, spec.cone_L, spec.n_discs,
                       spec.n_steps, mix_seed(spec.seed, static_cast<std::uint64_t>(q)),
                       spec.threads);
    csv.row({CsvWriter::num(fam.approx.q), CsvWriter::num(static_cast<long long>(rep.n_discs)),
             CsvWriter::num(static_cast<long long>(rep.n_steps)),
             CsvWriter::num(rep.margin_min), CsvWriter::num(rep.success_rate)});
    json fails = json::array();
    for (const auto& f : rep.failures)
      fails.push_back({{"disc_index", f.disc_index},
                       {"steps_done", f.steps_done},
                       {"reason", f.reason}});
    out.push_back({{"q", fam.approx.q},
                   {"margin_min", rep.margin_min},
                   {"success_rate", rep.success_rate},
                   {"failures", fails},
                   {"pass", rep.pass}});
    all_pass = all_pass && rep.pass;
  }
  write_json_file(path_in(spec, "covering.json"),
                  {{"runs", out}, {"pass", all_pass}}, hash);
  return all_pass;
}

bool cmd_cones(const ExperimentSpec& spec, std::uint64_t hash) {
  bool all_pass = true;
  CsvWriter csv(path_in(spec, "cones.csv"),
                "units=rescaled box coordinates",
                {"q", "L", "margin_u", "margin_uu", "margin_s", "margin_ss",
                 "expansion_min", "contraction_max", "n_points"},
                hash);
  json out = json::array();
  for (long long q : spec.q_list) {
    ReturnFamily fam = family_for(spec, q);
    ConeReport rep = verify_cones(fam, spec.cone_L, spec.cone_grid);
    csv.row({CsvWriter::num(fam.approx.q), CsvWriter::num(rep.L),
             CsvWriter::num(rep.margin_u), CsvWriter::num(rep.margin_uu),
             CsvWriter::num(rep.margin_s), CsvWriter::num(rep.margin_ss),
             CsvWriter::num(rep.expansion_min),
             CsvWriter::num(rep.contraction_max),
             CsvWriter::num(static_cast<long long>(rep.n_points))});
    json jr = cone_json(rep);
    jr["q"] = fam.approx.q;
    out.push_back(jr);
    all_pass = all_pass && rep.pass;
  }
  write_json_file(path_in(spec, "cones.json"),
                  {{"runs", out}, {"pass", all_pass}}, hash);
  return all_pass;
}

bool cmd_kq(const ExperimentSpec& spec, std::uint64_t hash) {
  CsvWriter csv(path_in(spec, "kq.csv"),
                "units=angles in turns; offsets scaled by delta",
                {"p", "q", "delta", "k", "offset", "A_k", "wide"}, hash);
  json out = json::array();
  for (long long q : spec.q_list) {
    ReturnFamily fam = family_for(spec, q);
    const ReturnSet& rs = fam.rset;
    for (size_t i = 0; i < rs.K.size(); ++i)
      csv.row({CsvWriter::num(rs.p), CsvWriter::num(rs.q),
               CsvWriter::num(rs.delta), CsvWriter::num(rs.K[i]),
               CsvWriter::num(rs.offsets[i]),
               CsvWriter::num(rs.offsets[i] / rs.delta),
               std::abs(rs.offsets[i]) / rs.delta >= 0.6 ? "1" : "0"});
    out.push_back({{"q", rs.q},
                   {"p", rs.p},
                   {"delta", rs.delta},
                   {"n_indices", rs.K.size()},
                   {"has_wide_offset", rs.has_wide_offset}});
  }
  write_json_file(path_in(spec, "kq.json"), {{"runs", out}, {"pass", true}},
                  hash);
  return true;
}

bool cmd_orbit(const ExperimentSpec& spec, std::uint64_t hash) {
  bool all_pass = true;
  json out = json::array();
  CsvWriter csv(path_in(spec, "orbit.csv"),
                "units=rescaled box coordinates",
                {"word", "closure_residual", "n_expanding", "top_log10_modulus"},
                hash);
  // A plain trajectory of the inner map for plotting; phase units: turns.
  {
    CsvWriter traj(path_in(spec, "trajectory.csv"),
                   "units=r real, phi in turns, strong coords real",
                   [&] {
                     std::vector<std::string> cols{"step", "r", "phi"};
                     for (int i = 1; i < spec.model.N; ++i)
                       cols.push_back("x_" + std::to_string(i));
                     for (int i = 1; i < spec.model.N; ++i)
                       cols.push_back("y_" + std::to_string(i));
                     return cols;
                   }(),
                   hash);
    PhasePoint p;
    p.r = 0.01;
    p.phi = 0.1;
    p.x = Eigen::VectorXd::Constant(spec.model.N - 1, 0.1);
    p.y = Eigen::VectorXd::Constant(spec.model.N - 1, 0.1);
    Trajectory tr = iterate_T0(spec.model, p, 100);
    for (size_t s = 0; s < tr.pts.size(); ++s) {
      std::vector<std::string> cells{CsvWriter::num(static_cast<long long>(s)),
                                     CsvWriter::num(tr.pts[s].r),
                                     CsvWriter::num(tr.pts[s].phi)};
      for (int i = 0; i < spec.model.N - 1; ++i)
        cells.push_back(CsvWriter::num(tr.pts[s].x[i]));
      for (int i = 0; i < spec.model.N - 1; ++i)
        cells.push_back(CsvWriter::num(tr.pts[s].y[i]));
      traj.row(cells);
    }
  }
  for (long long q : spec.q_list) {
    ReturnFamily fam = family_for(spec, q);
    std::vector<CodingResult> results;
    for (const auto& w : words_for(spec, fam)) {
      CodingResult r = coding_orbit(fam, w);
      const bool ok = r.converged && r.n_expanding == spec.model.N;
      all_pass = all_pass && ok;
      csv.row({word_text(r.word), CsvWriter::num(r.closure_residual),
               CsvWriter::num(static_cast<long long>(r.n_expanding)),
               CsvWriter::num(r.log10_moduli.empty() ? 0.0
                                                     : r.log10_moduli.front())});
      results.push_back(std::move(r));
    }
    double min_sep = 1e300;
    for (size_t i = 0; i < results.size(); ++i)
      for (size_t j = i + 1; j < results.size(); ++j)
        min_sep = std::min(min_sep, orbit_distance(results[i], results[j]));
    if (results.size() > 1) all_pass = all_pass && min_sep >= 1e-6;
    json words_j = json::array();
    for (const auto& r : results)
      words_j.push_back({{"word", r.word},
                         {"closure_residual", r.closure_residual},
                         {"n_expanding", r.n_expanding},
                         {"log10_moduli", r.log10_moduli}});
    out.push_back({{"q", fam.approx.q},
                   {"min_separation", results.size() > 1 ? min_sep : 0.0},
                   {"words", words_j}});
  }
  write_json_file(path_in(spec, "orbit.json"),
                  {{"runs", out}, {"pass", all_pass}}, hash);
  return all_pass;
}

bool cmd_scatter(const ExperimentSpec& spec, std::uint64_t hash) {
  const ScatLinear& s = spec.scat;
  json out;
  ScatSpectrum sp = scat_spectrum(s);
  out["lambda"] = sp.lambda;
  out["phi_plus"] = sp.phi_plus;
  out["phi_minus"] = sp.phi_minus;
  const bool expanding = c3_check(s);
  out["c3"] = expanding;
  bool pass = true;
  if (!expanding) {
    out["note"] = "degenerate: the linear scattering map does not expand";
    write_json_file(path_in(spec, "scatter.json"), out, hash);
    return false;
  }
  const double theta = normalize_rows(s);
  out["normalize_rows_theta"] = theta;
  TangencyRadii tr = tangency_radii(s, spec.scat_r);
  out["tangency"] = {{"r", spec.scat_r},
                     {"r_plus", tr.r_plus},
                     {"r_minus", tr.r_minus},
                     {"degenerate", tr.degenerate}};
  std::vector<double> r_list;
  for (int i = 0; i < 7; ++i) r_list.push_back(1e-5 * std::pow(10.0, i / 3.0));
  const double expo = radii_deviation_exponent(s, spec.scat_shear, r_list);
  out["radii_deviation_exponent"] = expo;
  pass = pass && expo >= 1.4;
  const double T = s.b11 * s.b11 + s.b12 * s.b12 + s.b21 * s.b21 +
                   s.b22 * s.b22;
  if (T > 2.0 + 1e-12) {
    ConnectResult cr = connect_saddle_center(s, spec.scat_r);
    out["connect"] = {{"theta", cr.theta},
                      {"mu", cr.mu},
                      {"nu", cr.nu},
                      {"residual", cr.residual}};
    pass = pass && cr.residual <= 1e-10;
  } else {
    out["connect"] = {{"feasible", false}};
    pass = false;
  }
  KamRadiiSet G = make_geometric_radii(0.01, 0.05, 1.1);
  std::vector<double> chain =
      hetero_chain(G, s, G.radii.front(), G.radii.back());
  CsvWriter csv(path_in(spec, "chain.csv"),
                "units=action radii (r = (u^2+v^2)/2)",
                {"index", "radius", "ratio_to_previous"}, hash);
  for (size_t i = 0; i < chain.size(); ++i)
    csv.row({CsvWriter::num(static_cast<long long>(i)),
             CsvWriter::num(chain[i]),
             CsvWriter::num(i == 0 ? 1.0 : chain[i] / chain[i - 1])});
  out["chain_length"] = chain.size();
  out["pass"] = pass;
  write_json_file(path_in(spec, "scatter.json"), out, hash);
  return pass;
}

bool cmd_bifurcate(const ExperimentSpec& spec, std::uint64_t hash) {
  bool pass = true;
  CsvWriter csv(path_in(spec, "bifurcate.csv"),
                "units=rescaled tangency coordinates",
                {"kind", "B", "k", "Phi_t_or_w0", "mu1_or_mu", "mu2_or_nu",
                 "residual"},
                hash);
  json rows = json::array();
  for (double B : spec.B_list) {
    std::optional<long long> k;
    if (spec.bif_k > 0) k = spec.bif_k;
    CubicTangency ct = cubic_from_two_quadratics(B, k);
    csv.row({"cubic", CsvWriter::num(B), CsvWriter::num(spec.bif_k),
             CsvWriter::num(ct.Phi_t), CsvWriter::num(ct.mu1),
             CsvWriter::num(ct.mu2), CsvWriter::num(ct.root_residual)});
    rows.push_back({{"kind", "cubic"},
                    {"B", B},
                    {"k", spec.bif_k},
                    {"Phi_t", ct.Phi_t},
                    {"mu1", ct.mu1},
                    {"mu2", ct.mu2},
                    {"root_residual", ct.root_residual},
                    {"genericity", ct.genericity}});
    // root_residual measures the distance from the limit cube equation;
    // a finite-k solution legitimately sits O(1/k) away from it.
    const double gate = spec.bif_k > 0
                            ? 10.0 / static_cast<double>(spec.bif_k)
                            : 1e-12;
    pass = pass && ct.root_residual <= gate * std::max(1.0, std::abs(B));
  }
  {
    SecondaryCubic lead =
        secondary_cubic_params(spec.sec_b, spec.sec_a12, spec.sec_k);
    const double Theta =
        mod0(spec.model.phi_plus - spec.model.phi_minus +
                 static_cast<double>(spec.sec_k) * spec.model.rho.value(),
             1.0);
    SecondaryCubicSolve sol = secondary_cubic_solve(
        spec.model.alpha, spec.model.beta, spec.model.hyp.b, spec.model.hyp.d,
        Theta, spec.sec_k);
    csv.row({"secondary", CsvWriter::num(0.0), CsvWriter::num(spec.sec_k),
             CsvWriter::num(sol.w0), CsvWriter::num(sol.mu),
             CsvWriter::num(sol.nu),
             CsvWriter::num(std::abs(sol.nu - sol.nu_leading))});
    const double window = 10.0 / std::sqrt(static_cast<double>(spec.sec_k));
    const double ratio = sol.nu / sol.nu_leading;
    rows.push_back({{"kind", "secondary"},
                    {"k", spec.sec_k},
                    {"w0", sol.w0},
                    {"mu", sol.mu},
                    {"nu", sol.nu},
                    {"nu_leading", sol.nu_leading},
                    {"ratio_to_leading", ratio},
                    {"family_mu_order", lead.mu_order},
                    {"family_nu", lead.nu},
                    {"family_alpha", lead.alpha_new}});
    pass = pass && ratio > 1.0 - window && ratio < 1.0 + window;
  }
  write_json_file(path_in(spec, "bifurcate.json"),
                  {{"rows", rows}, {"pass", pass}}, hash);
  return pass;
}

bool cmd_rates(const ExperimentSpec& spec, std::uint64_t hash) {
  if (spec.q_list.size() < 2)
    input_error("rates: q_list needs at least two scales");
  CsvWriter csv(path_in(spec, "rates.csv"),
                "units=rescaled box coordinates; delta in turns",
                {"q", "delta", "dev_c0", "dev_c1", "fp_gap"}, hash);
  std::vector<double> deltas, c0s, c1s, gaps;
  for (long long q : spec.q_list) {
    ReturnFamily fam = family_for(spec, q);
    const long long k = coverp_best(fam.rset, spec.model.alpha, 0.0).k;
    DeviationReport dev = deviation_from_affine(fam, k);
    FixedPointResult fp = rescaled_fixed_point(fam, k);
    csv.row({CsvWriter::num(fam.approx.q), CsvWriter::num(fam.delta),
             CsvWriter::num(dev.dev_c0), CsvWriter::num(dev.dev_c1),
             CsvWriter::num(fp.gap)});
    deltas.push_back(fam.delta);
    c0s.push_back(dev.dev_c0);
    c1s.push_back(dev.dev_c1);
    gaps.push_back(fp.gap);
  }
  auto monotone = [](const std::vector<double>& v) {
    for (size_t i = 1; i < v.size(); ++i)
      if (v[i] > 1.1 * v[i - 1]) return false;
    return true;
  };
  auto fit = [&](const std::vector<double>& v) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] > 1e-14)) continue;
      const double x = std::log(deltas[i]), y = std::log(v[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++n;
    }
    if (n < 2) return 1e300;  // identically tiny: faster than any power
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  const double e0 = fit(c0s), e1 = fit(c1s), eg = fit(gaps);
  const bool pass = monotone(c0s) && monotone(c1s) && monotone(gaps) &&
                    e0 >= 0.4 && e1 >= 0.4 && eg >= 0.4;
  write_json_file(path_in(spec, "rates.json"),
                  {{"exponent_c0", e0},
                   {"exponent_c1", e1},
                   {"exponent_fp_gap", eg},
                   {"monotone_c0", monotone(c0s)},
                   {"monotone_c1", monotone(c1s)},
                   {"monotone_fp_gap", monotone(gaps)},
                   {"pass", pass}},
                  hash);
  return pass;
}

}  // namespace

bool run_experiment(const ExperimentSpec& spec, std::uint64_t config_hash) {
  std::filesystem::create_directories(spec.out_dir);
  if (spec.subcommand == "certificate") return cmd_certificate(spec, config_hash);
  if (spec.subcommand == "covering") return cmd_covering(spec, config_hash);
  if (spec.subcommand == "cones") return cmd_cones(spec, config_hash);
  if (spec.subcommand == "kq") return cmd_kq(spec, config_hash);
  if (spec.subcommand == "orbit") return cmd_orbit(spec, config_hash);
  if (spec.subcommand == "scatter") return cmd_scatter(spec, config_hash);
  if (spec.subcommand == "bifurcate") return cmd_bifurcate(spec, config_hash);
  if (spec.subcommand == "rates") return cmd_rates(spec, config_hash);
  input_error("unknown subcommand '" + spec.subcommand +
              "' (expected certificate, covering, cones, kq, orbit, "
              "scatter, bifurcate, or rates)");
}

}  // namespace tanglab

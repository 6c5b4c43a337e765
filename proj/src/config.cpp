#include <tanglab/config.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace tanglab {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

namespace {

using nlohmann::json;

[[noreturn]] void bad_field(const std::string& where, const std::string& why) {
  input_error("config field " + where + ": " + why);
}

void expect_keys(const json& j, const std::string& where,
                 const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      bad_field(where + "." + it.key(), "unknown key");
}

double get_num(const json& j, const std::string& where) {
  if (!j.is_number()) bad_field(where, "expected a number");
  return j.get<double>();
}

long long get_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) bad_field(where, "expected an integer");
  return j.get<long long>();
}

RotationNumber parse_rho(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "golden") return RotationNumber::golden();
    if (s == "silver") return RotationNumber::silver();
    bad_field("model.rho", "unknown named rotation number '" + s + "'");
  }
  if (j.is_number()) return RotationNumber::from_value(j.get<double>());
  if (j.is_array()) {
    std::vector<long long> a;
    for (const auto& e : j) a.push_back(get_int(e, "model.rho[]"));
    return RotationNumber::from_quotients(a);
  }
  bad_field("model.rho", "expected 'golden', 'silver', a number, or an "
                         "array of partial quotients");
}

void parse_model(const json& j, ModelSpec& m) {
  expect_keys(j, "model",
              {"N", "rho", "alpha", "beta", "ell", "mu", "nu", "lambda_ss",
               "hyp", "phi_minus", "phi_plus", "x_plus", "y_minus", "couple",
               "inner_pert", "inner_m", "twist", "r_max", "xy_max",
               "t1_radius"});
  if (!j.contains("rho")) bad_field("model.rho", "missing (required)");
  m.rho = parse_rho(j.at("rho"));
  if (j.contains("N")) m.N = static_cast<int>(get_int(j.at("N"), "model.N"));
  if (j.contains("alpha")) m.alpha = get_num(j.at("alpha"), "model.alpha");
  if (j.contains("beta")) m.beta = get_num(j.at("beta"), "model.beta");
  if (j.contains("ell"))
    m.ell = static_cast<int>(get_int(j.at("ell"), "model.ell"));
  if (j.contains("mu")) m.mu = get_num(j.at("mu"), "model.mu");
  if (j.contains("nu")) m.nu = get_num(j.at("nu"), "model.nu");
  if (j.contains("lambda_ss"))
    m.lambda_ss = get_num(j.at("lambda_ss"), "model.lambda_ss");
  if (j.contains("hyp")) {
    const json& h = j.at("hyp");
    expect_keys(h, "model.hyp", {"a", "b", "c", "d"});
    if (h.contains("a")) m.hyp.a = get_num(h.at("a"), "model.hyp.a");
    if (h.contains("b")) m.hyp.b = get_num(h.at("b"), "model.hyp.b");
    if (h.contains("c")) m.hyp.c = get_num(h.at("c"), "model.hyp.c");
    if (h.contains("d")) m.hyp.d = get_num(h.at("d"), "model.hyp.d");
  }
  if (j.contains("phi_minus"))
    m.phi_minus = get_num(j.at("phi_minus"), "model.phi_minus");
  if (j.contains("phi_plus"))
    m.phi_plus = get_num(j.at("phi_plus"), "model.phi_plus");
  auto parse_vec = [&](const char* key, Eigen::VectorXd& v) {
    if (!j.contains(key)) {
      v = Eigen::VectorXd::Zero(m.N - 1);
      return;
    }
    const json& a = j.at(key);
    if (!a.is_array()) bad_field(std::string("model.") + key,
                                 "expected an array");
    v.resize(static_cast<Eigen::Index>(a.size()));
    for (size_t i = 0; i < a.size(); ++i)
      v[static_cast<Eigen::Index>(i)] =
          get_num(a[i], std::string("model.") + key + "[]");
  };
  parse_vec("x_plus", m.x_plus);
  parse_vec("y_minus", m.y_minus);
  if (j.contains("couple")) m.couple = get_num(j.at("couple"), "model.couple");
  if (j.contains("inner_pert"))
    m.inner_pert = get_num(j.at("inner_pert"), "model.inner_pert");
  if (j.contains("inner_m"))
    m.inner_m = static_cast<int>(get_int(j.at("inner_m"), "model.inner_m"));
  if (j.contains("twist")) m.twist = get_num(j.at("twist"), "model.twist");
  if (j.contains("r_max")) m.r_max = get_num(j.at("r_max"), "model.r_max");
  if (j.contains("xy_max")) m.xy_max = get_num(j.at("xy_max"), "model.xy_max");
  if (j.contains("t1_radius"))
    m.t1_radius = get_num(j.at("t1_radius"), "model.t1_radius");
}

}  // namespace

ExperimentSpec parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    input_error(std::string("config parse error: ") + e.what());
  }
  ExperimentSpec spec;
  expect_keys(j, "config",
              {"subcommand", "model", "returns", "cones", "covering",
               "orbit", "scatter", "bifurcate", "seed", "threads", "out"});
  if (j.contains("subcommand")) {
    if (!j.at("subcommand").is_string())
      bad_field("subcommand", "expected a string");
    spec.subcommand = j.at("subcommand").get<std::string>();
  }
  if (!j.contains("model")) bad_field("model", "missing section");
  parse_model(j.at("model"), spec.model);
  validate(spec.model);
  if (j.contains("returns")) {
    const json& r = j.at("returns");
    expect_keys(r, "returns", {"scheme", "q_list", "d"});
    if (r.contains("scheme")) {
      const std::string s = r.at("scheme").get<std::string>();
      if (s == "ifs")
        spec.scheme = Scheme::Ifs;
      else if (s == "cubic")
        spec.scheme = Scheme::Cubic;
      else
        bad_field("returns.scheme", "expected 'ifs' or 'cubic'");
    }
    if (r.contains("q_list")) {
      spec.q_list.clear();
      for (const auto& e : r.at("q_list"))
        spec.q_list.push_back(get_int(e, "returns.q_list[]"));
      if (spec.q_list.empty()) bad_field("returns.q_list", "must be nonempty");
    }
    if (r.contains("d")) {
      spec.d = get_num(r.at("d"), "returns.d");
      if (!(spec.d > 0 && spec.d < 1))
        bad_field("returns.d", "must lie in (0, 1)");
    }
  }
  if (j.contains("cones")) {
    const json& c = j.at("cones");
    expect_keys(c, "cones", {"L", "grid"});
    if (c.contains("L")) {
      spec.cone_L = get_num(c.at("L"), "cones.L");
      if (!(spec.cone_L > 0)) bad_field("cones.L", "must be positive");
    }
    if (c.contains("grid")) {
      const json& g = c.at("grid");
      if (!g.is_array() || g.size() != 4)
        bad_field("cones.grid", "expected an array of four sizes");
      for (int i = 0; i < 4; ++i) {
        spec.cone_grid[static_cast<size_t>(i)] =
            static_cast<int>(get_int(g[static_cast<size_t>(i)],
                                     "cones.grid[]"));
        if (spec.cone_grid[static_cast<size_t>(i)] < 1)
          bad_field("cones.grid", "sizes must be positive");
      }
    }
  }
  if (j.contains("covering")) {
    const json& c = j.at("covering");
    expect_keys(c, "covering", {"n_discs", "n_steps", "kappa"});
    if (c.contains("n_discs"))
      spec.n_discs = static_cast<int>(get_int(c.at("n_discs"),
                                              "covering.n_discs"));
    if (c.contains("n_steps"))
      spec.n_steps = static_cast<int>(get_int(c.at("n_steps"),
                                              "covering.n_steps"));
    if (c.contains("kappa")) {
      spec.kappa = get_num(c.at("kappa"), "covering.kappa");
      if (!(spec.kappa > 0 && spec.kappa < 1))
        bad_field("covering.kappa", "must lie in (0, 1)");
    }
    if (spec.n_discs < 1 || spec.n_steps < 1)
      bad_field("covering", "n_discs and n_steps must be positive");
  }
  if (j.contains("orbit")) {
    const json& o = j.at("orbit");
    expect_keys(o, "orbit", {"words", "n_words", "max_len"});
    if (o.contains("words")) {
      for (const auto& w : o.at("words")) {
        std::vector<long long> word;
        for (const auto& e : w) word.push_back(get_int(e, "orbit.words[][]"));
        if (word.empty()) bad_field("orbit.words", "words must be nonempty");
        spec.words.push_back(word);
      }
    }
    if (o.contains("n_words"))
      spec.n_words = static_cast<int>(get_int(o.at("n_words"),
                                              "orbit.n_words"));
    if (o.contains("max_len")) {
      spec.max_word_len = static_cast<int>(get_int(o.at("max_len"),
                                                   "orbit.max_len"));
      if (spec.max_word_len < 1) bad_field("orbit.max_len", "must be >= 1");
    }
  }
  if (j.contains("scatter")) {
    const json& s = j.at("scatter");
    expect_keys(s, "scatter",
                {"b11", "b12", "b21", "b22", "mu", "nu", "r", "shear"});
    if (s.contains("b11")) spec.scat.b11 = get_num(s.at("b11"), "scatter.b11");
    if (s.contains("b12")) spec.scat.b12 = get_num(s.at("b12"), "scatter.b12");
    if (s.contains("b21")) spec.scat.b21 = get_num(s.at("b21"), "scatter.b21");
    if (s.contains("b22")) spec.scat.b22 = get_num(s.at("b22"), "scatter.b22");
    if (s.contains("mu")) spec.scat.mu = get_num(s.at("mu"), "scatter.mu");
    if (s.contains("nu")) spec.scat.nu = get_num(s.at("nu"), "scatter.nu");
    if (s.contains("r")) {
      spec.scat_r = get_num(s.at("r"), "scatter.r");
      if (!(spec.scat_r > 0)) bad_field("scatter.r", "must be positive");
    }
    if (s.contains("shear"))
      spec.scat_shear = get_num(s.at("shear"), "scatter.shear");
    validate(spec.scat);
  }
  if (j.contains("bifurcate")) {
    const json& b = j.at("bifurcate");
    expect_keys(b, "bifurcate", {"B_list", "k", "sec_b", "sec_a12", "sec_k"});
    if (b.contains("B_list")) {
      spec.B_list.clear();
      for (const auto& e : b.at("B_list"))
        spec.B_list.push_back(get_num(e, "bifurcate.B_list[]"));
      if (spec.B_list.empty()) bad_field("bifurcate.B_list", "must be nonempty");
    }
    if (b.contains("k")) spec.bif_k = get_int(b.at("k"), "bifurcate.k");
    if (b.contains("sec_b"))
      spec.sec_b = get_num(b.at("sec_b"), "bifurcate.sec_b");
    if (b.contains("sec_a12"))
      spec.sec_a12 = get_num(b.at("sec_a12"), "bifurcate.sec_a12");
    if (b.contains("sec_k"))
      spec.sec_k = get_int(b.at("sec_k"), "bifurcate.sec_k");
  }
  if (j.contains("seed"))
    spec.seed = static_cast<std::uint64_t>(get_int(j.at("seed"), "seed"));
  if (j.contains("threads")) {
    spec.threads = static_cast<int>(get_int(j.at("threads"), "threads"));
    if (spec.threads < 1) bad_field("threads", "must be positive");
  }
  if (j.contains("out")) {
    if (!j.at("out").is_string()) bad_field("out", "expected a string");
    spec.out_dir = j.at("out").get<std::string>();
  }
  return spec;
}

LoadedConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) input_error("config file not readable: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  LoadedConfig lc;
  lc.config_hash = fnv1a64(text);
  lc.spec = parse_config(text);
  return lc;
}

std::mt19937_64 make_rng(const ExperimentSpec& spec) {
  return std::mt19937_64(spec.seed ^ fnv1a64(spec.subcommand));
}

void write_json_file(const std::string& path, nlohmann::json j,
                     std::uint64_t config_hash) {
  j["config_hash"] = hash_hex(config_hash);
  j["tool_version"] = kToolVersion;
  std::ofstream out(path, std::ios::binary);
  if (!out) input_error("cannot write output file: " + path);
  out << j.dump(2) << "\n";
}

struct CsvWriter::Impl {
  std::ofstream out;
  size_t n_cols{0};
};

CsvWriter::CsvWriter(const std::string& path, const std::string& units_note,
                     const std::vector<std::string>& columns,
                     std::uint64_t config_hash)
    : impl_(new Impl) {
  impl_->out.open(path, std::ios::binary);
  if (!impl_->out) input_error("cannot write output file: " + path);
  impl_->n_cols = columns.size();
  impl_->out << "# tanglab " << kToolVersion << " config="
             << hash_hex(config_hash) << " " << units_note << "\n";
  for (size_t i = 0; i < columns.size(); ++i)
    impl_->out << columns[i] << (i + 1 < columns.size() ? "," : "\n");
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != impl_->n_cols)
    input_error("CSV row width does not match the header");
  for (size_t i = 0; i < cells.size(); ++i)
    impl_->out << cells[i] << (i + 1 < cells.size() ? "," : "\n");
}

std::string CsvWriter::num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

std::string CsvWriter::num(long long v) {
  return std::to_string(v);
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Certification:
      return 1;
    case ErrorKind::Input:
      return 2;
    case ErrorKind::Solver:
      return 3;
  }
  return 2;
}

}  // namespace tanglab

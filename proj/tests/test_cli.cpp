// End-to-end tests of the command-line driver: output files, provenance
// headers, determinism, and exit codes. The binary path is injected by the
// build as TANGLAB_CLI_PATH.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <tanglab/config.hpp>

#include <json.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace tanglab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("tanglab_cli_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the driver, returns its exit code, and captures stdout+stderr.
int run_cli(const std::string& args, std::string* output = nullptr) {
  TempDir cap;
  const std::string log = cap.file("log.txt");
  const std::string cmd =
      std::string(TANGLAB_CLI_PATH) + " " + args + " >" + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = read_file(log);
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

const std::string kMinimalConfig = R"({"model": {"rho": "golden"}})";

}  // namespace

TEST_CASE("kq writes the resonant-index table with provenance header") {
  TempDir dir;
  const std::string cfg = dir.file("cfg.json");
  const std::string text =
      R"({"model": {"rho": "golden"}, "returns": {"q_list": [89]}})";
  write_file(cfg, text);

  const int code = run_cli("kq --config " + cfg + " --out " + dir.path.string());
  CHECK(code == 0);

  const std::string csv = read_file(dir.file("kq.csv"));
  CHECK(csv.find('\r') == std::string::npos);  // LF-only output
  const auto lines = lines_of(csv);
  REQUIRE(lines.size() == 12);  // provenance + column header + 10 rows

  const std::string expect_hex = hash_hex(fnv1a64(text));
  CHECK(lines[0] == "# tanglab 0.1.0 config=" + expect_hex +
                        " units=angles in turns; offsets scaled by delta");
  CHECK(lines[1] == "p,q,delta,k,offset,A_k,wide");

  const std::vector<long long> expect_k{89, 97, 102, 110, 123, 131,
                                        136, 144, 157, 165};
  for (size_t i = 0; i < expect_k.size(); ++i) {
    const auto cells = split_csv(lines[2 + i]);
    REQUIRE(cells.size() == 7);
    CHECK(std::stoll(cells[0]) == 55);
    CHECK(std::stoll(cells[1]) == 89);
    CHECK(std::stod(cells[2]) == doctest::Approx(5.0 / 178.0).epsilon(1e-14));
    CHECK(std::stoll(cells[3]) == expect_k[i]);
    // The scaled offset column reproduces offset/delta.
    CHECK(std::stod(cells[5]) ==
          doctest::Approx(std::stod(cells[4]) / (5.0 / 178.0)).epsilon(1e-12));
  }
  // Spot values for the scaled offsets and the wide-offset flag.
  auto row_for = [&](long long k) {
    for (size_t i = 0; i < expect_k.size(); ++i)
      if (expect_k[i] == k) return split_csv(lines[2 + i]);
    REQUIRE(false);
    return std::vector<std::string>{};
  };
  CHECK(std::stod(row_for(89)[5]) == doctest::Approx(0.178890).epsilon(1e-5));
  CHECK(std::stod(row_for(144)[5]) == doctest::Approx(-0.110560).epsilon(1e-5));
  CHECK(std::stod(row_for(136)[5]) == doctest::Approx(1.873360).epsilon(1e-5));
  CHECK(row_for(89)[6] == "0");
  CHECK(row_for(144)[6] == "0");
  CHECK(row_for(136)[6] == "1");

  const auto j = nlohmann::json::parse(read_file(dir.file("kq.json")));
  CHECK(j.at("config_hash").get<std::string>() == expect_hex);
  CHECK(j.at("tool_version").get<std::string>() == "0.1.0");
  CHECK(j.at("pass").get<bool>());
  REQUIRE(j.at("runs").size() == 1);
  CHECK(j.at("runs")[0].at("q").get<long long>() == 89);
  CHECK(j.at("runs")[0].at("p").get<long long>() == 55);
  CHECK(j.at("runs")[0].at("n_indices").get<int>() == 10);
  CHECK(j.at("runs")[0].at("has_wide_offset").get<bool>());
}

TEST_CASE("absent config falls back to the built-in model") {
  TempDir dir;
  const int code = run_cli("kq --out " + dir.path.string());
  CHECK(code == 0);
  // The provenance hash is then the hash of the empty byte string.
  const std::string empty_hex = hash_hex(fnv1a64(""));
  const auto j = nlohmann::json::parse(read_file(dir.file("kq.json")));
  CHECK(j.at("config_hash").get<std::string>() == empty_hex);
  const auto lines = lines_of(read_file(dir.file("kq.csv")));
  REQUIRE(!lines.empty());
  CHECK(lines[0].find("config=" + empty_hex) != std::string::npos);
}

TEST_CASE("identical config and seed reproduce outputs byte for byte") {
  TempDir dir;
  const std::string cfg = dir.file("cfg.json");
  write_file(cfg, R"({"model": {"rho": "golden"},
                      "returns": {"q_list": [89]},
                      "covering": {"n_discs": 4, "n_steps": 3},
                      "seed": 5})");
  const std::string d1 = dir.file("run1");
  const std::string d2 = dir.file("run2");
  const std::string d4 = dir.file("run4");  // multi-threaded run
  CHECK(run_cli("covering --config " + cfg + " --out " + d1) == 0);
  CHECK(run_cli("covering --config " + cfg + " --out " + d2) == 0);
  CHECK(run_cli("covering --config " + cfg + " --threads 4 --out " + d4) == 0);

  const std::string csv1 = read_file(d1 + "/covering.csv");
  CHECK(csv1 == read_file(d2 + "/covering.csv"));
  CHECK(csv1 == read_file(d4 + "/covering.csv"));  // thread-count invariant
  const std::string json1 = read_file(d1 + "/covering.json");
  CHECK(json1 == read_file(d2 + "/covering.json"));
  CHECK(json1 == read_file(d4 + "/covering.json"));

  // A different seed must change the sampled discs (and hence the margins).
  const std::string d3 = dir.file("run3");
  CHECK(run_cli("covering --config " + cfg + " --seed 6 --out " + d3) == 0);
  CHECK(csv1 != read_file(d3 + "/covering.csv"));
}

TEST_CASE("configuration problems exit with code 2 and name the field") {
  TempDir dir;
  const std::string out = " --out " + dir.path.string();
  std::string log;

  SUBCASE("unknown top-level key") {
    const std::string cfg = dir.file("bad1.json");
    write_file(cfg, R"({"model": {"rho": "golden"}, "bogus": 1})");
    CHECK(run_cli("kq --config " + cfg + out, &log) == 2);
    CHECK(log.find("config field config.bogus: unknown key") !=
          std::string::npos);
    const auto j = nlohmann::json::parse(read_file(dir.file("failure.json")));
    CHECK(j.at("kind").get<std::string>() == "input");
    CHECK(j.at("error").get<std::string>().find("config.bogus") !=
          std::string::npos);
  }
  SUBCASE("missing rotation number") {
    const std::string cfg = dir.file("bad2.json");
    write_file(cfg, R"({"model": {}})");
    CHECK(run_cli("kq --config " + cfg + out, &log) == 2);
    CHECK(log.find("model.rho") != std::string::npos);
  }
  SUBCASE("resonant multiplier of modulus one") {
    const std::string cfg = dir.file("bad3.json");
    write_file(cfg, R"({"model": {"rho": "golden", "alpha": 1}})");
    CHECK(run_cli("kq --config " + cfg + out, &log) == 2);
    CHECK(log.find("alpha") != std::string::npos);
  }
  SUBCASE("unreadable config path") {
    CHECK(run_cli("kq --config " + dir.file("nope.json") + out, &log) == 2);
    CHECK(log.find("not readable") != std::string::npos);
  }
  SUBCASE("unknown subcommand") {
    CHECK(run_cli("frobnicate" + out) == 2);
  }
  SUBCASE("missing subcommand") {
    CHECK(run_cli(out) == 2);
  }
  SUBCASE("rates needs at least two scales") {
    const std::string cfg = dir.file("bad4.json");
    write_file(cfg,
               R"({"model": {"rho": "golden"}, "returns": {"q_list": [89]}})");
    CHECK(run_cli("rates --config " + cfg + out, &log) == 2);
    CHECK(log.find("at least two scales") != std::string::npos);
    const auto j = nlohmann::json::parse(read_file(dir.file("failure.json")));
    CHECK(j.at("kind").get<std::string>() == "input");
    // Failures raised after config load carry the real config hash.
    CHECK(j.at("config_hash").get<std::string>() ==
          hash_hex(fnv1a64(read_file(cfg))));
  }
}

TEST_CASE("cone verification failure surfaces as the certification exit code") {
  TempDir dir;
  const std::string cfg = dir.file("cfg.json");
  write_file(cfg, kMinimalConfig);  // default scale q=89 is too coarse
  std::string log;
  const int code =
      run_cli("cones --config " + cfg + " --out " + dir.path.string(), &log);
  CHECK(code == 1);
  CHECK(log.find("certification failed") != std::string::npos);
  const auto j = nlohmann::json::parse(read_file(dir.file("cones.json")));
  CHECK(!j.at("pass").get<bool>());
  REQUIRE(j.at("runs").size() == 1);
  const auto& run = j.at("runs")[0];
  CHECK(!run.at("pass").get<bool>());
  CHECK(run.at("margin_u").get<double>() < 0.0);   // the honest failure mode
  CHECK(run.at("margin_s").get<double>() > 0.0);   // contraction is still fine
  CHECK(run.at("expansion_min").get<double>() > 1.0);
  CHECK(!run.at("witnesses").empty());
}

TEST_CASE("bifurcate --B overrides the parameter list with a single value") {
  TempDir dir;
  const std::string cfg = dir.file("cfg.json");
  write_file(cfg, kMinimalConfig);
  const int code = run_cli("bifurcate --config " + cfg + " --B 1 --out " +
                           dir.path.string());
  CHECK(code == 0);

  const auto lines = lines_of(read_file(dir.file("bifurcate.csv")));
  REQUIRE(lines.size() == 4);  // provenance + header + one cubic + secondary
  const auto cubic = split_csv(lines[2]);
  REQUIRE(cubic.size() == 7);
  CHECK(cubic[0] == "cubic");
  CHECK(std::stod(cubic[1]) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::stod(cubic[3]) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::stod(cubic[4]) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::stod(cubic[5]) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(split_csv(lines[3])[0] == "secondary");

  const auto j = nlohmann::json::parse(read_file(dir.file("bifurcate.json")));
  CHECK(j.at("pass").get<bool>());
  REQUIRE(j.at("rows").size() == 2);
  CHECK(j.at("rows")[0].at("genericity").get<double>() ==
        doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(j.at("rows")[1].at("kind").get<std::string>() == "secondary");
  const double ratio = j.at("rows")[1].at("ratio_to_leading").get<double>();
  CHECK(ratio == doctest::Approx(100.0 / 102.0).epsilon(1e-9));
}

TEST_CASE("scatter command certifies the default area-preserving map") {
  TempDir dir;
  const std::string cfg = dir.file("cfg.json");
  write_file(cfg, kMinimalConfig);
  const int code =
      run_cli("scatter --config " + cfg + " --out " + dir.path.string());
  CHECK(code == 0);
  const auto j = nlohmann::json::parse(read_file(dir.file("scatter.json")));
  CHECK(j.at("pass").get<bool>());
  CHECK(j.at("c3").get<bool>());
  // Default linear part diag(2, 1/2): quadratic-form multiplier is 4.
  CHECK(j.at("lambda").get<double>() == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(j.at("tangency").at("r_plus").get<double>() ==
        doctest::Approx(4e-3).epsilon(1e-10));
  CHECK(j.at("tangency").at("r_minus").get<double>() ==
        doctest::Approx(2.5e-4).epsilon(1e-10));
  CHECK(!j.at("tangency").at("degenerate").get<bool>());
  CHECK(j.at("radii_deviation_exponent").get<double>() >= 1.4);
  CHECK(j.at("connect").at("residual").get<double>() <= 1e-10);
  CHECK(j.at("chain_length").get<int>() >= 2);
  const auto lines = lines_of(read_file(dir.file("chain.csv")));
  REQUIRE(lines.size() >= 4);
  CHECK(lines[1] == "index,radius,ratio_to_previous");
  CHECK(std::stod(split_csv(lines[2])[1]) ==
        doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("orbit command writes per-word diagnostics and a sample trajectory") {
  TempDir dir;
  const std::string cfg = dir.file("cfg.json");
  write_file(cfg, R"({"model": {"rho": "golden"},
                      "returns": {"q_list": [89]},
                      "orbit": {"words": [[144], [89, 144]]}})");
  const int code =
      run_cli("orbit --config " + cfg + " --out " + dir.path.string());
  CHECK(code == 0);

  const auto lines = lines_of(read_file(dir.file("orbit.csv")));
  REQUIRE(lines.size() == 4);  // provenance + header + two word rows
  CHECK(lines[1] == "word,closure_residual,n_expanding,top_log10_modulus");
  CHECK(split_csv(lines[2])[0] == "144");
  CHECK(split_csv(lines[3])[0] == "89 144");
  CHECK(std::stoll(split_csv(lines[2])[2]) == 2);
  CHECK(std::stod(split_csv(lines[2])[1]) <= 1e-12);

  const auto traj = lines_of(read_file(dir.file("trajectory.csv")));
  CHECK(traj[1] == "step,r,phi,x_1,y_1");
  REQUIRE(traj.size() >= 4);  // the sample orbit leaves the box after a few steps
  const auto first = split_csv(traj[2]);
  REQUIRE(first.size() == 5);
  CHECK(std::stod(first[1]) == doctest::Approx(0.01).epsilon(1e-15));

  const auto j = nlohmann::json::parse(read_file(dir.file("orbit.json")));
  CHECK(j.at("pass").get<bool>());
  REQUIRE(j.at("runs").size() == 1);
  CHECK(j.at("runs")[0].at("min_separation").get<double>() >= 1e-6);
  CHECK(j.at("runs")[0].at("words").size() == 2);
}

TEST_CASE("certificate command emits the full JSON certificate per scale") {
  TempDir dir;
  const std::string cfg = dir.file("cfg.json");
  write_file(cfg, R"({"model": {"rho": "golden"},
                      "returns": {"q_list": [89]},
                      "covering": {"n_discs": 3, "n_steps": 2},
                      "orbit": {"words": [[144]]},
                      "seed": 1})");
  std::string log;
  const int code = run_cli(
      "certificate --config " + cfg + " --out " + dir.path.string(), &log);
  // The default scale is too coarse for the cone check, so certification
  // fails honestly while the covering and coding sections succeed.
  CHECK(code == 1);
  const auto j =
      nlohmann::json::parse(read_file(dir.file("certificate_q89.json")));
  CHECK(j.at("q").get<long long>() == 89);
  CHECK(j.at("p").get<long long>() == 55);
  CHECK(j.at("delta").get<double>() == doctest::Approx(5.0 / 178.0));
  CHECK(j.at("K").size() == 10);
  CHECK(!j.at("cone").at("pass").get<bool>());
  CHECK(j.at("covering").at("pass").get<bool>());
  REQUIRE(j.at("codings").size() == 1);
  CHECK(j.at("codings")[0].at("expanding_moduli").get<int>() == 2);
  CHECK(!j.at("pass").get<bool>());

  const auto s =
      nlohmann::json::parse(read_file(dir.file("certificate_summary.json")));
  CHECK(!s.at("pass").get<bool>());
  REQUIRE(s.at("runs").size() == 1);
  CHECK(s.at("runs")[0].at("q").get<long long>() == 89);
}

#include <tanglab/config.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

namespace {

void write_failure(const std::string& out_dir, const std::string& message,
                   const char* kind, std::uint64_t hash) {
  try {
    std::filesystem::create_directories(out_dir);
    nlohmann::json j{{"error", message}, {"kind", kind}};
    tanglab::write_json_file(
        (std::filesystem::path(out_dir) / "failure.json").string(), j, hash);
  } catch (...) {
    // Diagnostics are best effort; the exit code already carries the outcome.
  }
}

const char* kind_name(tanglab::ErrorKind k) {
  switch (k) {
    case tanglab::ErrorKind::Input: return "input";
    case tanglab::ErrorKind::Certification: return "certification";
    case tanglab::ErrorKind::Solver: return "solver";
  }
  return "unknown";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tanglab: certified return-map geometry experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> flag_B;
  app.add_option("--config", config_path, "JSON experiment description");
  app.add_option("--out", out_dir, "output directory (default: cwd)");
  app.add_option("--seed", seed, "RNG seed override");
  app.add_option("--threads", threads, "worker thread override");
  app.add_option("--B", flag_B, "single bifurcation parameter override");

  app.fallthrough();
  for (const char* name : {"certificate", "covering", "cones", "kq", "orbit",
                           "scatter", "bifurcate", "rates"})
    app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // command-line problems share the input-error exit code
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  tanglab::LoadedConfig cfg;
  try {
    if (config_path.empty()) {
      cfg.spec = tanglab::ExperimentSpec{};
      cfg.config_hash = tanglab::fnv1a64("");
    } else {
      cfg = tanglab::load_config(config_path);
    }
    cfg.spec.subcommand = sub;
    if (!out_dir.empty()) cfg.spec.out_dir = out_dir;
    if (seed) cfg.spec.seed = *seed;
    if (threads) {
      if (*threads < 1) tanglab::input_error("--threads must be >= 1");
      cfg.spec.threads = *threads;
    }
    if (flag_B) cfg.spec.B_list = {*flag_B};
  } catch (const tanglab::Error& e) {
    std::fprintf(stderr, "tanglab: %s\n", e.what());
    write_failure(out_dir.empty() ? "." : out_dir, e.what(),
                  kind_name(e.kind), 0);
    return tanglab::exit_code_for(e.kind);
  }

  try {
    const bool ok = tanglab::run_experiment(cfg.spec, cfg.config_hash);
    if (!ok) std::fprintf(stderr, "tanglab: %s: certification failed\n",
                          sub.c_str());
    return ok ? 0 : 1;
  } catch (const tanglab::Error& e) {
    std::fprintf(stderr, "tanglab: %s\n", e.what());
    write_failure(cfg.spec.out_dir, e.what(), kind_name(e.kind),
                  cfg.config_hash);
    return tanglab::exit_code_for(e.kind);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "tanglab: %s\n", e.what());
    write_failure(cfg.spec.out_dir, e.what(), "input", cfg.config_hash);
    return 2;
  }
}

#pragma once

#include <tanglab/blender.hpp>
#include <tanglab/scattering.hpp>

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace tanglab {

// Everything one invocation needs: the model, the verification knobs per
// subcommand, and the reproducibility inputs (seed, threads, out dir).
struct ExperimentSpec {
  std::string subcommand;
  ModelSpec model;
  Scheme scheme{Scheme::Ifs};
  std::vector<long long> q_list{89};
  double d{-1};  // negative: derive from alpha at family build time
  double kappa{0.05};
  double cone_L{0.1};
  std::array<int, 4> cone_grid{{9, 9, 3, 3}};
  int n_discs{20};
  int n_steps{10};
  std::vector<std::vector<long long>> words;  // empty: seeded random words
  int n_words{10};
  int max_word_len{4};
  ScatLinear scat{2.0, 0.0, 0.0, 0.5, 0.0, 0.0};
  double scat_r{1e-3};
  double scat_shear{0.25};
  std::vector<double> B_list{1.0, -1.0, 8.0};
  long long bif_k{0};  // 0: solve the limit system
  double sec_b{0.5};
  double sec_a12{1.0};
  long long sec_k{100};
  std::uint64_t seed{0};
  int threads{1};
  std::string out_dir{"."};
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t h);

// Parses and validates the JSON config text. Keys mirror the field names
// of the structs they fill; model.rho is the only required key. Errors
// name the offending field.
ExperimentSpec parse_config(const std::string& text);

struct LoadedConfig {
  ExperimentSpec spec;
  std::uint64_t config_hash{0};  // FNV-1a over the raw file bytes
};
LoadedConfig load_config(const std::string& path);

// Generator for seeded sampling: split per subcommand so different tools
// with the same seed draw independent streams.
std::mt19937_64 make_rng(const ExperimentSpec& spec);

// Writes JSON with sorted keys, trailing newline, and the provenance
// fields config_hash / tool_version injected at the top level.
void write_json_file(const std::string& path, nlohmann::json j,
                     std::uint64_t config_hash);

// CSV with a leading provenance/units comment, a header row, 15
// significant digits, LF endings.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& units_note,
            const std::vector<std::string>& columns,
            std::uint64_t config_hash);
  ~CsvWriter();
  void row(const std::vector<std::string>& cells);
  static std::string num(double v);
  static std::string num(long long v);

 private:
  struct Impl;
  Impl* impl_;
};

// Executes the subcommand, writing artifacts into spec.out_dir. Returns
// true when every asserted check passed. Throws Error for input, solver,
// or certification faults that prevent a verdict.
bool run_experiment(const ExperimentSpec& spec, std::uint64_t config_hash);

// 0 pass, 1 certification failure, 2 input error, 3 solver failure.
int exit_code_for(ErrorKind kind);

}  // namespace tanglab

#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctnas/arch_space.hpp"
#include "ctnas/oracle.hpp"
#include "ctnas/search_engine.hpp"

namespace ctnas {

struct TrainSettings {
  std::size_t labeled = 100;
  std::size_t held_out = 100;
  std::size_t iterations = 2000;
  std::size_t batch = 128;
  std::size_t checkpoint_every = 0;  // 0 disables checkpoint metrics
};

/// Everything a command needs besides file paths.
struct RunConfig {
  SpaceSpec space;
  std::uint64_t oracle_seed = 7;
  double noise_sigma = kDefaultNoiseSigma;
  bool label_noise = false;
  SearchConfig search;
  TrainSettings train;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on out-of-range fields.
  void check() const;
};

/// Rejects unknown keys so typos surface as config errors.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& c);

/// Deterministic split of a benchmark into train and held-out records.
struct BenchSplit {
  std::vector<ArchAcc> train;
  std::vector<ArchAcc> held_out;
};
BenchSplit split_bench(const BenchTable& table, const RunConfig& config);

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2 };

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctnas

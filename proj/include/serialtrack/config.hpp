#pragma once

#include "serialtrack/benchmark.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace serialtrack {

enum class Command { synth, detect, track, benchmark };

std::string_view to_string(Command c);
/// Throws ConfigInvalid.
Command parse_command(const std::string& s);

/// One run of the command-line tool, parsed from a `"schema": 1` JSON file.
/// Paths are absolute once loaded (relative ones resolve against the config
/// file's directory).
struct RunConfig {
  std::optional<Command> command;  // when present, must agree with the CLI command
  int dim = 2;
  std::uint64_t seed = 1;
  int max_parallel = 1;
  std::optional<std::filesystem::path> output;
  TrackingConfig tracking;

  // synth
  SequenceSpec synth;

  // detect / track
  std::vector<std::filesystem::path> images;     // JSON image headers
  std::vector<std::filesystem::path> centroids;  // id,x,y[,z] CSVs
  std::optional<double> join_tol;                // trajectory merging, px

  // benchmark
  std::string preset;
  BenchmarkOptions bench;  // seed and max_parallel are copied in at run time
};

/// Parses and validates. Unknown keys, wrong types, out-of-range values and a
/// schema other than 1 throw ConfigInvalid. Numbers that may be unbounded
/// also accept the string "inf".
RunConfig parse_run_config(const std::string& json_text,
                           const std::filesystem::path& base_dir);

/// Reads the file (InputMissing when absent) and parses it relative to its
/// own directory.
RunConfig load_run_config(const std::filesystem::path& path);

/// Checks what `command` needs: inputs present and existing (InputMissing),
/// a deformation per frame, a known preset (ConfigInvalid).
void check_for_command(const RunConfig& cfg, Command command);

}  // namespace serialtrack

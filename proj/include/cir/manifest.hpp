#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cir/jsonl.hpp"

namespace cir {

/// Record of one CLI run. Everything except `timings` is a pure function of
/// the inputs and the seed, so two manifests can be diffed on their hashes.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_config(json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const std::string& role, const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void time_phase(const std::string& phase, double seconds) { timings_[phase] = seconds; }

  const std::map<std::string, std::string>& output_hashes() const { return outputs_; }
  json to_json() const;
  /// Writes manifest.json into `dir`; outputs are recorded by file name.
  void write(const std::filesystem::path& dir) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  json config_ = json::object();
  std::uint64_t seed_ = 0;
  std::map<std::string, json> inputs_;
  std::map<std::string, std::string> outputs_;
  std::map<std::string, double> timings_;
};

/// Wall-clock seconds for a scope.
class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace cir

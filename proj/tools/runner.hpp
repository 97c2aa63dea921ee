#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace potlab::cli {

// invalid configuration; key names the offending entry ("section.key")
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& msg) : std::runtime_error(msg), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::vector<std::string> overrides;  // section.key=value
};

struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = true;
  std::string note;
};

struct RunResult {
  std::vector<std::filesystem::path> files;
  std::vector<Check> checks;
  bool all_pass() const;
};

const std::vector<std::string>& subcommands();

// Runs one subcommand. Throws ConfigError for invalid configs and std::exception for
// runtime failures; on any throw the files written so far are removed.
RunResult run(const std::string& subcommand, const RunOptions& opt, std::ostream& log);

// Entry point used by the executable: maps exceptions to a single JSON error line
// on err and returns the process exit status (0 ok, 1 failed checks, 2 bad config, 3 runtime error).
int main_entry(const std::string& subcommand, const RunOptions& opt, std::ostream& out, std::ostream& err);

}  // namespace potlab::cli

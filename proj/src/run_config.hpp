#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "datagen.hpp"
#include "model.hpp"
#include "transformer.hpp"

namespace biqe {

// Flat key=value run configuration. Every key has a default; unknown keys and
// malformed values are rejected. Resolution order: defaults, config file,
// BIQE_<KEY> environment variables, explicit overrides.
class RunConfig {
 public:
  RunConfig();

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has_key(const std::string& key) const;

  // Lines of key=value; '#' starts a comment; blank lines are skipped.
  void load_file(const std::filesystem::path& path);
  // Reads BIQE_<UPPERCASE KEY> for every key.
  void load_env();

  std::string str(const std::string& key) const { return get(key); }
  std::int64_t integer(const std::string& key) const;
  std::uint64_t unsigned_integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;

  // Sorted key=value lines, one per key.
  std::string dump() const;
  // Checksum of dump().
  std::string hash() const;

  // Typed views.
  ModelConfig model_config() const;
  TrainSchedule train_schedule() const;
  GenerateOptions generate_options() const;
  SyntheticKgOptions synthetic_options() const;

  static const std::map<std::string, std::string>& defaults();
  static std::string env_name(const std::string& key);

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace biqe

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace facemat::cli {

/// Where a resolved value came from. Flags beat the config file, which
/// beats the built-in default.
enum class Source { Default, File, Flag };
std::string_view to_string(Source s);

struct KeySpec {
  std::string section;
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every config key, in help order.
const std::vector<KeySpec>& key_table();

/// Environment variable naming the directory searched for `facemat.ini` and
/// for relative `--config` paths not found in the working directory.
inline constexpr const char* kConfigDirEnv = "FACEMAT_CONFIG_DIR";
inline constexpr const char* kDefaultConfigFile = "facemat.ini";

using IniData = std::map<std::string, std::map<std::string, std::string>>;

/// `[section]` headers, `key = value` lines, `#`/`;` comments. Problems are
/// appended to `errors` with their line numbers.
IniData parse_ini(std::istream& in, std::vector<std::string>& errors);

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace facemat::cli

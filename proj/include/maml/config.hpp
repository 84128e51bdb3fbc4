#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "maml/synthetic.hpp"
#include "maml/train_config.hpp"

namespace maml {

// Flat `key = value` settings. Keys are the long flag names without the
// leading dashes, so every key can be overridden from the command line.
using KeyValues = std::map<std::string, std::string>;

struct RunConfig {
  TrainConfig train;
  SyntheticConfig synthetic;

  std::filesystem::path interactions;
  std::filesystem::path features;
  std::filesystem::path valid;
  std::filesystem::path out_dir = "run";
  std::filesystem::path checkpoint;
  std::size_t k_core = 5;
  double train_ratio = 0.7;
  std::size_t n = 10;
  std::size_t threads = 1;

  // inspect
  std::string user;
  std::string item;
  std::filesystem::path pairs;
  std::size_t limit = 64;
};

const std::vector<std::string>& config_keys();

// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
KeyValues parse_config_text(std::string_view text, const std::string& source = "<memory>");
KeyValues load_config_file(const std::filesystem::path& path);

// Later maps win.
KeyValues merge(KeyValues base, const KeyValues& overrides);

RunConfig build_run_config(const KeyValues& kv);
// Every key with its effective value, in config_keys() order. Parsing the
// result reproduces the same RunConfig.
std::string echo_config(const RunConfig& cfg);

}  // namespace maml

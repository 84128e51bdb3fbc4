#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "maml/config.hpp"
#include "maml/errors.hpp"
#include "maml/log.hpp"
#include "maml/run.hpp"

namespace {

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> flags;
};

// Every config key becomes a `--key` flag on every subcommand; values are
// kept as strings and parsed by the same code path as the config file.
void add_shared_flags(Command& cmd) {
  cmd.app->add_option("--config", cmd.config_path, "key = value config file")->check(CLI::ExistingFile);
  for (const auto& key : maml::config_keys()) cmd.app->add_option("--" + key, cmd.flags[key]);
}

maml::KeyValues collect(const Command& cmd) {
  maml::KeyValues kv;
  if (!cmd.config_path.empty()) kv = maml::load_config_file(cmd.config_path);
  maml::KeyValues overrides;
  for (const auto& [key, value] : cmd.flags)
    if (cmd.app->count("--" + key) > 0) overrides[key] = value;
  return maml::merge(std::move(kv), overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal attentive metric learning for top-n recommendation"};
  app.require_subcommand(1);

  std::map<std::string, Command> commands;
  const std::map<std::string, std::string> help = {
      {"train", "train a model and evaluate it on the test split"},
      {"evaluate", "evaluate a checkpoint"},
      {"synthetic", "generate a synthetic dataset with ground truth"},
      {"inspect", "export attention weights and item embeddings"},
  };
  for (const auto& [name, text] : help) {
    auto& cmd = commands[name];
    cmd.app = app.add_subcommand(name, text);
    add_shared_flags(cmd);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto& [name, cmd] : commands) {
      if (!cmd.app->parsed()) continue;
      const auto cfg = maml::build_run_config(collect(cmd));
      if (name == "train") return maml::cmd_train(cfg, std::cout);
      if (name == "evaluate") return maml::cmd_evaluate(cfg, std::cout);
      if (name == "synthetic") return maml::cmd_synthetic(cfg, std::cout);
      if (name == "inspect") return maml::cmd_inspect(cfg, std::cout);
    }
  } catch (const maml::Error& e) {
    maml::log_error(e.what());
    return 2;
  } catch (const std::exception& e) {
    maml::log_error(std::string("unexpected failure: ") + e.what());
    return 3;
  }
  return 1;
}

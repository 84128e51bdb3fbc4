#include "maml/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "maml/errors.hpp"

namespace maml {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw InvalidInputError("config `" + key + "`: expected a non-negative integer, got `" + v + "`");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw InvalidInputError("config `" + key + "`: expected a number, got `" + v + "`");
  return out;
}

bool to_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw InvalidInputError("config `" + key + "`: expected on|off, got `" + v + "`");
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "seed",         "dim",          "margin",      "neg-samples",   "alpha",        "lambda-f",
      "lambda-c",     "lr",           "batch-size",  "epochs",        "checkpoint-every",
      "attention",    "alpha-scaling", "feature-loss", "hidden1",     "hidden2",      "fusion-layers",
      "fusion-hidden", "n",           "threads",     "interactions",  "features",     "valid",
      "k-core",       "train-ratio",  "out-dir",     "checkpoint",    "users",        "items",
      "aspects",      "per-user",     "noise",       "text-dim",      "visual-dim",   "user",
      "item",         "pairs",        "limit"};
  return keys;
}

KeyValues parse_config_text(std::string_view text, const std::string& source) {
  KeyValues kv;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = text.substr(start, end - start);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected `key = value`");
      std::string key(trim(line.substr(0, eq)));
      std::string value(trim(line.substr(eq + 1)));
      const auto& keys = config_keys();
      if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw ParseError(source, line_no, "unknown config key `" + key + "`");
      kv[key] = value;
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return kv;
}

KeyValues load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

KeyValues merge(KeyValues base, const KeyValues& overrides) {
  for (const auto& [k, v] : overrides) base[k] = v;
  return base;
}

RunConfig build_run_config(const KeyValues& kv) {
  RunConfig c;
  auto& t = c.train;
  auto& s = c.synthetic;
  for (const auto& [key, v] : kv) {
    if (key == "seed") {
      t.seed = to_size(key, v);
      s.seed = t.seed;
    } else if (key == "dim") t.dim = to_size(key, v);
    else if (key == "margin") t.margin = to_double(key, v);
    else if (key == "neg-samples") t.neg_samples = to_size(key, v);
    else if (key == "alpha") t.alpha = to_double(key, v);
    else if (key == "lambda-f") t.lambda_f = to_double(key, v);
    else if (key == "lambda-c") t.lambda_c = to_double(key, v);
    else if (key == "lr") t.learning_rate = to_double(key, v);
    else if (key == "batch-size") t.batch_size = to_size(key, v);
    else if (key == "epochs") t.max_epochs = to_size(key, v);
    else if (key == "checkpoint-every") t.checkpoint_every = to_size(key, v);
    else if (key == "attention") t.attention_enabled = to_switch(key, v);
    else if (key == "alpha-scaling") t.alpha_scaling_enabled = to_switch(key, v);
    else if (key == "feature-loss") {
      if (v != "squared" && v != "plain") throw InvalidInputError("config `feature-loss`: expected squared|plain");
      t.squared_feature_loss = v == "squared";
    } else if (key == "hidden1") t.hidden1 = to_size(key, v);
    else if (key == "hidden2") t.hidden2 = to_size(key, v);
    else if (key == "fusion-layers") t.fusion_layers = to_size(key, v);
    else if (key == "fusion-hidden") t.fusion_hidden = to_size(key, v);
    else if (key == "n") c.n = to_size(key, v);
    else if (key == "threads") c.threads = to_size(key, v);
    else if (key == "interactions") c.interactions = v;
    else if (key == "features") c.features = v;
    else if (key == "valid") c.valid = v;
    else if (key == "k-core") c.k_core = to_size(key, v);
    else if (key == "train-ratio") c.train_ratio = to_double(key, v);
    else if (key == "out-dir") c.out_dir = v;
    else if (key == "checkpoint") c.checkpoint = v;
    else if (key == "users") s.n_users = to_size(key, v);
    else if (key == "items") s.n_items = to_size(key, v);
    else if (key == "aspects") s.n_aspects = to_size(key, v);
    else if (key == "per-user") s.interactions_per_user = to_size(key, v);
    else if (key == "noise") s.noise = to_double(key, v);
    else if (key == "text-dim") s.text_dim = to_size(key, v);
    else if (key == "visual-dim") s.visual_dim = to_size(key, v);
    else if (key == "user") c.user = v;
    else if (key == "item") c.item = v;
    else if (key == "pairs") c.pairs = v;
    else if (key == "limit") c.limit = to_size(key, v);
    else throw InvalidInputError("unknown config key `" + key + "`");
  }
  return c;
}

std::string echo_config(const RunConfig& c) {
  const auto& t = c.train;
  const auto& s = c.synthetic;
  auto on_off = [](bool b) { return std::string(b ? "on" : "off"); };
  const std::map<std::string, std::string> values = {
      {"seed", std::to_string(t.seed)},
      {"dim", std::to_string(t.dim)},
      {"margin", fmt_double(t.margin)},
      {"neg-samples", std::to_string(t.neg_samples)},
      {"alpha", fmt_double(t.alpha)},
      {"lambda-f", fmt_double(t.lambda_f)},
      {"lambda-c", fmt_double(t.lambda_c)},
      {"lr", fmt_double(t.learning_rate)},
      {"batch-size", std::to_string(t.batch_size)},
      {"epochs", std::to_string(t.max_epochs)},
      {"checkpoint-every", std::to_string(t.checkpoint_every)},
      {"attention", on_off(t.attention_enabled)},
      {"alpha-scaling", on_off(t.alpha_scaling_enabled)},
      {"feature-loss", t.squared_feature_loss ? "squared" : "plain"},
      {"hidden1", std::to_string(t.hidden1)},
      {"hidden2", std::to_string(t.hidden2)},
      {"fusion-layers", std::to_string(t.fusion_layers)},
      {"fusion-hidden", std::to_string(t.fusion_hidden)},
      {"n", std::to_string(c.n)},
      {"threads", std::to_string(c.threads)},
      {"interactions", c.interactions.string()},
      {"features", c.features.string()},
      {"valid", c.valid.string()},
      {"k-core", std::to_string(c.k_core)},
      {"train-ratio", fmt_double(c.train_ratio)},
      {"out-dir", c.out_dir.string()},
      {"checkpoint", c.checkpoint.string()},
      {"users", std::to_string(s.n_users)},
      {"items", std::to_string(s.n_items)},
      {"aspects", std::to_string(s.n_aspects)},
      {"per-user", std::to_string(s.interactions_per_user)},
      {"noise", fmt_double(s.noise)},
      {"text-dim", std::to_string(s.text_dim)},
      {"visual-dim", std::to_string(s.visual_dim)},
      {"user", c.user},
      {"item", c.item},
      {"pairs", c.pairs.string()},
      {"limit", std::to_string(c.limit)},
  };
  std::ostringstream os;
  for (const auto& key : config_keys()) {
    const auto& v = values.at(key);
    if (v.empty()) continue;
    os << key << " = " << v << '\n';
  }
  return os.str();
}

}  // namespace maml

#include "gridmp/run_config.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "gridmp/errors.hpp"

namespace gridmp {

namespace {

class Reader {
 public:
  Reader(const toml::table& root, std::string_view source) : root_(root), source_(source) {}

  template <typename T>
  T get(std::string_view section, std::string_view key, const std::optional<T>& override) const {
    if (override) return *override;
    const std::string dotted = std::string(section) + "." + std::string(key);
    const toml::node* node = root_.at_path(dotted).node();
    if (!node) throw ValidationError(std::string(source_) + ": missing config key '" + dotted + "'");
    if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = node->value_exact<std::string>()) return *v;
    } else if constexpr (std::is_same_v<T, double>) {
      if (auto v = node->value<double>()) return *v;
    } else {
      if (auto v = node->value_exact<std::int64_t>()) {
        if (*v < 0 && std::is_unsigned_v<T>)
          throw ValidationError(std::string(source_) + ": config key '" + dotted + "' must be non-negative");
        if (!std::is_unsigned_v<T> && *v > std::numeric_limits<int>::max())
          throw ValidationError(std::string(source_) + ": config key '" + dotted + "' is out of range");
        return static_cast<T>(*v);
      }
    }
    throw ParseError(std::string(source_) + ": config key '" + dotted + "' has the wrong type");
  }

 private:
  const toml::table& root_;
  std::string_view source_;
};

}  // namespace

RunConfig parse_run_config(std::string_view toml_text, const ConfigOverrides& o, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ": " << e.description();
    throw ParseError(msg.str());
  }
  const Reader r(root, source);
  RunConfig cfg;
  cfg.model.hidden_dim = r.get<int>("model", "hidden_dim", o.hidden_dim);
  cfg.model.layers = r.get<int>("model", "layers", o.layers);
  cfg.model.heads = r.get<int>("model", "attention_heads", o.heads);
  cfg.model.random_features = r.get<int>("model", "random_features", o.random_features);
  cfg.model.mode = nn::mode_from_string(r.get<std::string>("model", "mode", o.mode));
  cfg.model.seed = r.get<std::uint64_t>("model", "seed", o.model_seed);
  cfg.train.learning_rate = r.get<double>("train", "learning_rate", o.learning_rate);
  cfg.train.weight_decay = r.get<double>("train", "weight_decay", o.weight_decay);
  cfg.train.epochs = r.get<int>("train", "epochs", o.epochs);
  cfg.train.batch_size = r.get<int>("train", "batch_size", o.batch_size);
  cfg.train.seed = r.get<std::uint64_t>("train", "seed", o.seed);
  cfg.train.beta1 = r.get<double>("train", "adam_beta1", o.beta1);
  cfg.train.beta2 = r.get<double>("train", "adam_beta2", o.beta2);
  cfg.train.eps = r.get<double>("train", "adam_eps", o.eps);
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), overrides, path.string());
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  return {{"model", nn::config_to_json(cfg.model)}, {"train", train_config_to_json(cfg.train)}};
}

}  // namespace gridmp

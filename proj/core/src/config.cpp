#include "resmatch/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "resmatch/serialize.hpp"

namespace resmatch {

namespace {

using nlohmann::json;

std::vector<double> default_noise_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 8; ++i) grid.push_back(i / 8.0);
  return grid;
}

std::vector<double> default_beta_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 9; ++i) grid.push_back(i / 10.0);
  return grid;
}

/// Minimal TOML reader covering this config schema: top-level keys, one level
/// of [section], scalars (number, bool, string) and arrays of numbers.
json parse_toml_subset(std::istream& in, const std::string& path) {
  json root = json::object();
  json* current = &root;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fail = [&](const std::string& what) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
    };
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      std::string section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail("empty section name");
      current = &root[section];
      if (current->is_null()) *current = json::object();
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) fail("empty key or value");

    auto parse_scalar = [&](const std::string& text) -> json {
      if (text == "true") return true;
      if (text == "false") return false;
      if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
        return text.substr(1, text.size() - 2);
      }
      try {
        size_t used = 0;
        double d = std::stod(text, &used);
        if (used != text.size()) fail("trailing characters after number");
        return d;
      } catch (const std::invalid_argument&) {
        fail("unrecognized value: " + text);
      }
      return nullptr;
    };

    if (value.front() == '[') {
      if (value.back() != ']') fail("unterminated array");
      json arr = json::array();
      std::stringstream ss(value.substr(1, value.size() - 2));
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) arr.push_back(parse_scalar(item));
      }
      (*current)[key] = std::move(arr);
    } else {
      (*current)[key] = parse_scalar(value);
    }
  }
  return root;
}

void apply_json(const json& j, ExperimentConfig& c, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    if (key == "seed") {
      c.seed = v.is_number_float() ? static_cast<uint64_t>(v.get<double>()) : v.get<uint64_t>();
    } else if (key == "pools") {
      for (auto p = v.begin(); p != v.end(); ++p) {
        if (p.key() == "train") c.train_pools = static_cast<int>(p.value().get<double>());
        else if (p.key() == "val") c.val_pools = static_cast<int>(p.value().get<double>());
        else if (p.key() == "test") c.test_pools = static_cast<int>(p.value().get<double>());
        else throw std::runtime_error(where + ": unknown key pools." + p.key());
      }
    } else if (key == "pool_size") {
      c.pool_size = static_cast<int>(v.get<double>());
    } else if (key == "locations") {
      c.locations = static_cast<int>(v.get<double>());
    } else if (key == "sigma2") {
      c.sigma2 = v.get<double>();
    } else if (key == "rho") {
      for (auto p = v.begin(); p != v.end(); ++p) {
        if (p.key() == "a") c.rho.age = p.value().get<double>();
        else if (p.key() == "c") c.rho.origin = p.value().get<double>();
        else if (p.key() == "e") c.rho.education = p.value().get<double>();
        else if (p.key() == "s") c.rho.sex = p.value().get<double>();
        else if (p.key() == "b") c.rho.box = p.value().get<double>();
        else throw std::runtime_error(where + ": unknown key rho." + p.key());
      }
    } else if (key == "capacity_mode") {
      std::string mode = v.get<std::string>();
      if (mode == "shares") c.capacity_mode = CapacityMode::kShares;
      else if (mode == "uniform") c.capacity_mode = CapacityMode::kUniform;
      else throw std::runtime_error(where + ": capacity_mode must be shares|uniform");
    } else if (key == "w_grid") {
      c.noise_grid = v.get<std::vector<double>>();
    } else if (key == "beta_grid") {
      c.beta_grid = v.get<std::vector<double>>();
    } else if (key == "eps_grid") {
      c.epsilon_grid = v.get<std::vector<double>>();
    } else if (key == "epsilon") {
      c.epsilon = v.get<double>();
    } else if (key == "beta") {
      c.beta = v.get<double>();
    } else if (key == "model") {
      for (auto p = v.begin(); p != v.end(); ++p) {
        if (p.key() == "hidden_dim") c.model.hidden_dim = static_cast<int>(p.value().get<double>());
        else if (p.key() == "layers") c.model.encoder_layers = static_cast<int>(p.value().get<double>());
        else if (p.key() == "heads") c.model.heads = static_cast<int>(p.value().get<double>());
        else throw std::runtime_error(where + ": unknown key model." + p.key());
      }
    } else if (key == "train") {
      for (auto p = v.begin(); p != v.end(); ++p) {
        if (p.key() == "batch_pools") c.train.batch_pools = static_cast<int>(p.value().get<double>());
        else if (p.key() == "epochs") c.train.epochs = static_cast<int>(p.value().get<double>());
        else if (p.key() == "lr") c.train.learning_rate = p.value().get<double>();
        else if (p.key() == "gamma") c.train.lr_decay = p.value().get<double>();
        else if (p.key() == "weight_decay") c.train.weight_decay = p.value().get<double>();
        else throw std::runtime_error(where + ": unknown key train." + p.key());
      }
    } else if (key == "runs") {
      c.runs = static_cast<int>(v.get<double>());
    } else if (key == "stats_dir") {
      c.stats_dir = v.get<std::string>();
    } else if (key == "out") {
      c.output_dir = v.get<std::string>();
    } else if (key == "threads") {
      c.threads = static_cast<int>(v.get<double>());
    } else {
      throw std::runtime_error(where + ": unknown key " + key);
    }
  }
}

}  // namespace

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.noise_grid = default_noise_grid();
  c.epsilon_grid = {1e-6};
  if (name == "desk") {
    c.train_pools = 200;
    c.val_pools = 50;
    c.test_pools = 50;
    c.pool_size = 50;
    c.model.hidden_dim = 32;
    c.model.encoder_layers = 2;
    c.model.heads = 1;
    c.beta_grid = {0.6};
    c.runs = 5;
  } else if (name == "paper") {
    c.train_pools = 4000;
    c.val_pools = 500;
    c.test_pools = 500;
    c.pool_size = 100;
    c.model.hidden_dim = 128;
    c.model.encoder_layers = 2;
    c.model.heads = 1;
    c.beta_grid = default_beta_grid();
    c.runs = 5;
  } else {
    throw std::runtime_error("unknown preset: " + name + " (expected desk or paper)");
  }
  c.model.input_width = c.locations;
  c.train.batch_pools = 16;
  c.train.epochs = 50;
  c.train.learning_rate = 1e-3;
  c.train.lr_decay = 0.9;
  c.train.weight_decay = 0.01;
  return c;
}

ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j;
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".toml") {
    j = parse_toml_subset(in, path);
  } else {
    in >> j;
  }
  apply_json(j, base, path);
  base.model.input_width = base.locations;
  return base;
}

std::string config_canonical(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["pools"] = {{"train", c.train_pools}, {"val", c.val_pools}, {"test", c.test_pools}};
  j["pool_size"] = c.pool_size;
  j["locations"] = c.locations;
  j["sigma2"] = c.sigma2;
  j["rho"] = {{"a", c.rho.age}, {"c", c.rho.origin}, {"e", c.rho.education},
              {"s", c.rho.sex}, {"b", c.rho.box}};
  j["capacity_mode"] = c.capacity_mode == CapacityMode::kShares ? "shares" : "uniform";
  j["w_grid"] = c.noise_grid;
  j["beta_grid"] = c.beta_grid;
  j["eps_grid"] = c.epsilon_grid;
  j["epsilon"] = c.epsilon;
  j["beta"] = c.beta;
  j["model"] = {{"hidden_dim", c.model.hidden_dim},
                {"layers", c.model.encoder_layers},
                {"heads", c.model.heads}};
  j["train"] = {{"batch_pools", c.train.batch_pools},
                {"epochs", c.train.epochs},
                {"lr", c.train.learning_rate},
                {"gamma", c.train.lr_decay},
                {"weight_decay", c.train.weight_decay}};
  j["runs"] = c.runs;
  return j.dump();
}

std::string config_hash(const ExperimentConfig& config) {
  return hash_hex(fnv1a64(config_canonical(config)));
}

DatasetConfig dataset_config(const ExperimentConfig& c) {
  DatasetConfig d;
  d.seed = c.seed;
  d.train_pools = c.train_pools;
  d.val_pools = c.val_pools;
  d.test_pools = c.test_pools;
  d.pool_size = c.pool_size;
  d.locations = c.locations;
  d.sigma2 = c.sigma2;
  d.rho = c.rho;
  d.noise_grid = c.noise_grid;
  d.capacity_mode = c.capacity_mode;
  d.stats_manifest = c.stats_manifest();
  d.output_dir = c.output_dir + "/dataset";
  return d;
}

}  // namespace resmatch

#include "resmatch/serialize.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace resmatch {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) { return json(m.data()); }

Matrix matrix_from_json(const json& j, int rows, int cols) {
  Matrix m(rows, cols);
  if (j.size() != m.size()) throw std::runtime_error("serialize: matrix payload size mismatch");
  m.data() = j.get<std::vector<double>>();
  return m;
}

}  // namespace

std::string instance_to_json(const Matrix& weights, const Capacities& capacities) {
  json j;
  j["n"] = weights.rows();
  j["k"] = weights.cols();
  j["weights"] = matrix_to_json(weights);
  j["capacities"] = capacities;
  return j.dump();
}

void instance_from_json(const std::string& text, Matrix* weights, Capacities* capacities) {
  json j = json::parse(text);
  int n = j.at("n").get<int>();
  int k = j.at("k").get<int>();
  if (weights) *weights = matrix_from_json(j.at("weights"), n, k);
  if (capacities) *capacities = j.at("capacities").get<Capacities>();
}

std::string episode_to_jsonl(const Episode& episode) {
  const Pool& pool = episode.pool;
  json j;
  j["seed"] = episode.seed;
  j["pool_seed"] = pool.seed;
  j["w"] = episode.noise;
  j["n"] = pool.size();
  j["k"] = pool.locations();
  json profiles;
  for (const RefugeeProfile& p : pool.profiles) {
    profiles["age"].push_back(p.age);
    profiles["region"].push_back(p.region);
    profiles["education"].push_back(p.education);
    profiles["sex"].push_back(p.sex);
  }
  j["profiles"] = std::move(profiles);
  j["trueP"] = matrix_to_json(pool.true_prob);
  json outcomes = json::array();
  for (double v : pool.outcome.data()) outcomes.push_back(static_cast<int>(v));
  j["outcomes"] = std::move(outcomes);
  j["capacities"] = pool.capacities;
  j["l"] = episode.default_location;
  j["y"] = episode.realized;
  return j.dump();
}

Episode episode_from_jsonl(const std::string& line) {
  json j = json::parse(line);
  Episode episode;
  int n = j.at("n").get<int>();
  int k = j.at("k").get<int>();
  episode.seed = j.at("seed").get<uint64_t>();
  episode.noise = j.at("w").get<double>();
  episode.pool.seed = j.value("pool_seed", uint64_t{0});
  episode.pool.true_prob = matrix_from_json(j.at("trueP"), n, k);
  episode.pool.outcome = Matrix(n, k);
  {
    const json& outcomes = j.at("outcomes");
    if (static_cast<int>(outcomes.size()) != n * k) {
      throw std::runtime_error("serialize: outcome payload size mismatch");
    }
    for (int i = 0; i < n * k; ++i) episode.pool.outcome.data()[i] = outcomes[i].get<int>();
  }
  episode.pool.capacities = j.at("capacities").get<Capacities>();
  if (j.contains("profiles") && j["profiles"].contains("age")) {
    const json& p = j["profiles"];
    episode.pool.profiles.resize(n);
    for (int i = 0; i < n; ++i) {
      episode.pool.profiles[i] = {p["age"][i].get<int>(), p["region"][i].get<int>(),
                                  p["education"][i].get<int>(), p["sex"][i].get<int>()};
    }
  }
  episode.default_location = j.at("l").get<std::vector<int>>();
  episode.realized = j.at("y").get<std::vector<int>>();
  return episode;
}

std::vector<Episode> read_episodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("serialize: cannot open " + path);
  std::vector<Episode> episodes;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) episodes.push_back(episode_from_jsonl(line));
  }
  return episodes;
}

void write_episodes(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("serialize: cannot write " + path);
  for (const Episode& e : episodes) out << episode_to_jsonl(e) << '\n';
}

std::string modified_to_json(const ModifiedPredictions& modified) {
  json j;
  j["epsilon"] = modified.epsilon;
  json mask = json::array();
  for (auto [i, l] : modified.mask) mask.push_back({i, l});
  j["mask"] = std::move(mask);
  j["gbreve"] = matrix_to_json(modified.values);
  return j.dump();
}

std::string pair_to_jsonl(const TrainingPair& pair) {
  json j;
  j["w"] = pair.noise;
  j["beta"] = pair.beta;
  j["epsilon"] = pair.epsilon;
  j["episode_seed"] = pair.episode_seed;
  j["n"] = pair.input.rows();
  j["k"] = pair.input.cols();
  j["capacities"] = pair.capacities;
  j["g"] = matrix_to_json(pair.input);
  j["gbreve"] = matrix_to_json(pair.target);
  json mask = json::array();
  for (auto [i, l] : pair.mask) mask.push_back({i, l});
  j["mask"] = std::move(mask);
  return j.dump();
}

TrainingPair pair_from_jsonl(const std::string& line) {
  json j = json::parse(line);
  TrainingPair pair;
  int n = j.at("n").get<int>();
  int k = j.at("k").get<int>();
  pair.noise = j.at("w").get<double>();
  pair.beta = j.at("beta").get<double>();
  pair.epsilon = j.at("epsilon").get<double>();
  pair.episode_seed = j.value("episode_seed", uint64_t{0});
  pair.capacities = j.at("capacities").get<Capacities>();
  pair.input = matrix_from_json(j.at("g"), n, k);
  pair.target = matrix_from_json(j.at("gbreve"), n, k);
  for (const auto& entry : j.at("mask")) {
    pair.mask.emplace_back(entry[0].get<int>(), entry[1].get<int>());
  }
  return pair;
}

std::vector<TrainingPair> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("serialize: cannot open " + path);
  std::vector<TrainingPair> pairs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) pairs.push_back(pair_from_jsonl(line));
  }
  return pairs;
}

void write_pairs(const std::string& path, const std::vector<TrainingPair>& pairs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("serialize: cannot write " + path);
  for (const TrainingPair& p : pairs) out << pair_to_jsonl(p) << '\n';
}

uint64_t fnv1a64(const std::string& text) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hash_hex(uint64_t hash) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[hash & 0xf];
    hash >>= 4;
  }
  return out;
}

}  // namespace resmatch

#include "casim/io/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace casim::io {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DataSection, count, seed, min_actions, max_actions, min_duration, max_duration)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TextSection, width, blocks, heads, ff_hidden, tap)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(VqSection, hidden, latent, codes, downsample, steps, batch, crop, lr)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ArSection, width, blocks, heads, ff_hidden, steps, batch, lr, teacher_forcing,
                                   sampler, top_k, temperature)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DiffSection, width, blocks, heads, ff_hidden, variant, steps, guidance, cond_drop,
                                   train_steps, batch, lr)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MatcherSection, width, steps, batch, eval_every, patience, lr)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalSection, repeats, pool, diversity_pairs, max_entries, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ExperimentConfig, family, inject, seeds, out, data, text, vqvae, ar, diff, matcher,
                                   eval)

namespace {

using nlohmann::json;

bool is_integer(const json& j) { return j.is_number_integer() || j.is_number_unsigned(); }

// Every key in `given` must exist in `schema` with a compatible type.
void check_against(const json& schema, const json& given, const std::string& path) {
  if (schema.is_object()) {
    if (!given.is_object()) throw std::invalid_argument("config: '" + path + "' must be an object");
    for (const auto& [key, value] : given.items()) {
      const std::string sub = path.empty() ? key : path + "." + key;
      if (!schema.contains(key)) throw std::invalid_argument("config: unknown key '" + sub + "'");
      check_against(schema.at(key), value, sub);
    }
    return;
  }
  const bool ok = schema.is_string()            ? given.is_string()
                  : is_integer(schema)          ? is_integer(given)
                  : schema.is_number_float()    ? given.is_number()
                  : schema.is_array()           ? given.is_array()
                  : schema.is_boolean()         ? given.is_boolean()
                                                : true;
  if (!ok) throw std::invalid_argument("config: '" + path + "' has the wrong type (" + std::string(given.type_name()) + ")");
  if (schema.is_array()) {
    for (const auto& v : given) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw std::invalid_argument("config: '" + path + "' must be a list of non-negative integers");
      }
    }
  }
  if (is_integer(schema) && schema.is_number_unsigned() && given.is_number_integer() && given.get<long long>() < 0) {
    throw std::invalid_argument("config: '" + path + "' must be non-negative");
  }
}

void validate(const ExperimentConfig& c) {
  if (c.family != "ar" && c.family != "diff") throw std::invalid_argument("config: family must be ar or diff");
  if (c.inject != "casim" && c.inject != "cls") throw std::invalid_argument("config: inject must be casim or cls");
  if (c.seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
}

ExperimentConfig parse_checked(const json& given) {
  const json schema = ExperimentConfig{};
  check_against(schema, given, "");
  json merged = schema;
  merged.merge_patch(given);
  ExperimentConfig c = merged.get<ExperimentConfig>();
  validate(c);
  return c;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) { return json(config).dump(2); }

ExperimentConfig config_from_json(const std::string& text) {
  json given;
  try {
    given = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_checked(given);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json patch = json::object();
  json* cursor = &patch;
  std::stringstream ks(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ks, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) cursor = &(*cursor)[parts[i]];
  (*cursor)[parts.back()] = value;
  // A string-typed field given something that parsed as a number keeps the text.
  const json schema = ExperimentConfig{};
  const json* s = &schema;
  for (const auto& p : parts) {
    if (!s->is_object() || !s->contains(p)) throw std::invalid_argument("config: unknown key '" + key + "'");
    s = &s->at(p);
  }
  if (s->is_string() && !value.is_string()) (*cursor)[parts.back()] = raw;
  json current = config;
  check_against(schema, patch, "");
  current.merge_patch(patch);
  config = parse_checked(current);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(json(config).dump())));
  return buf;
}

std::filesystem::path output_root(const ExperimentConfig& config) {
  if (!config.out.empty()) return config.out;
  if (const char* env = std::getenv("CASIM_OUT"); env && *env) return env;
  return "casim_out";
}

}  // namespace casim::io

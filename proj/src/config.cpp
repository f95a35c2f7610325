#include "idmask/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "idmask/error.hpp"

namespace idmask {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>) {
      out += num(values[i]);
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      out += values[i].string();
    } else if constexpr (std::is_same_v<T, Method>) {
      out += method_name(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

std::string selection_name(SelectionMode m) {
  switch (m) {
    case SelectionMode::kGreedy: return "greedy";
    case SelectionMode::kCenter: return "center";
    case SelectionMode::kFixed: return "fixed";
    case SelectionMode::kCycle: return "cycle";
    case SelectionMode::kRandom: return "random";
  }
  return "greedy";
}

SelectionMode parse_selection(const std::string& key, const std::string& v) {
  for (auto m : {SelectionMode::kGreedy, SelectionMode::kCenter, SelectionMode::kFixed,
                 SelectionMode::kCycle, SelectionMode::kRandom}) {
    if (selection_name(m) == v) return m;
  }
  throw ConfigError("config key '" + key + "': unknown selection mode '" + v + "'");
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define IDMASK_SIZE_FIELD(name, member)                                                    \
  Field {                                                                                  \
    name, [](RunConfig& c, const std::string& k, const std::string& v) {                   \
      c.member = parse_number<std::size_t>(k, v);                                          \
    },                                                                                     \
        [](const RunConfig& c) { return std::to_string(c.member); }                        \
  }
#define IDMASK_U64_FIELD(name, member)                                                     \
  Field {                                                                                  \
    name, [](RunConfig& c, const std::string& k, const std::string& v) {                   \
      c.member = parse_number<std::uint64_t>(k, v);                                        \
    },                                                                                     \
        [](const RunConfig& c) { return std::to_string(c.member); }                        \
  }
#define IDMASK_DOUBLE_FIELD(name, member)                                                  \
  Field {                                                                                  \
    name, [](RunConfig& c, const std::string& k, const std::string& v) {                   \
      c.member = parse_number<double>(k, v);                                               \
    },                                                                                     \
        [](const RunConfig& c) { return num(c.member); }                                   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
       [](const RunConfig& c) { return c.output_dir.string(); }},
      IDMASK_SIZE_FIELD("threads", threads),

      IDMASK_U64_FIELD("benchmark.seed", benchmark.seed),
      IDMASK_SIZE_FIELD("benchmark.protected_identities", benchmark.protected_identities),
      IDMASK_SIZE_FIELD("benchmark.images_per_identity", benchmark.images_per_identity),
      IDMASK_SIZE_FIELD("benchmark.target_identities", benchmark.target_identities),
      IDMASK_SIZE_FIELD("benchmark.target_images_per_identity", benchmark.target_images_per_identity),
      IDMASK_SIZE_FIELD("benchmark.distractor_identities", benchmark.distractor_identities),
      IDMASK_SIZE_FIELD("benchmark.distractor_images_per_identity",
                        benchmark.distractor_images_per_identity),
      IDMASK_SIZE_FIELD("benchmark.height", benchmark.shape.height),
      IDMASK_SIZE_FIELD("benchmark.width", benchmark.shape.width),
      IDMASK_SIZE_FIELD("benchmark.channels", benchmark.shape.channels),

      {"attack.norm",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.attack.norm = parse_norm(v);
         } catch (const InvalidArgument& e) {
           throw ConfigError("config key '" + k + "': " + e.what());
         }
       },
       [](const RunConfig& c) { return std::string(norm_name(c.attack.norm)); }},
      {"attack.epsilon",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.attack.epsilon = parse_number<double>(k, v) / 255.0;
       },
       [](const RunConfig& c) { return num(c.attack.epsilon * 255.0); }},
      {"attack.alpha",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.attack.alpha = parse_number<double>(k, v) / 255.0;
       },
       [](const RunConfig& c) { return num(c.attack.alpha * 255.0); }},
      IDMASK_SIZE_FIELD("attack.iterations", attack.iterations),
      IDMASK_DOUBLE_FIELD("attack.momentum", attack.momentum),
      IDMASK_DOUBLE_FIELD("attack.gamma", attack.gamma),
      {"attack.selection",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.attack.selection.mode = parse_selection(k, v);
       },
       [](const RunConfig& c) { return selection_name(c.attack.selection.mode); }},
      IDMASK_SIZE_FIELD("attack.fixed_index", attack.selection.fixed_index),
      IDMASK_U64_FIELD("attack.selection_seed", attack.selection.seed),
      IDMASK_SIZE_FIELD("attack.mmd_batch", mmd_batch),
      IDMASK_U64_FIELD("attack.augment_seed", augment_seed),

      IDMASK_DOUBLE_FIELD("diversity.probability", diversity.probability),
      IDMASK_DOUBLE_FIELD("diversity.scale_low", diversity.scale_low),
      IDMASK_DOUBLE_FIELD("diversity.scale_high", diversity.scale_high),
      IDMASK_U64_FIELD("diversity.seed", diversity.seed),
      {"diversity.random_assignment",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.diversity.random_assignment = parse_bool(k, v);
       },
       [](const RunConfig& c) { return std::string(c.diversity.random_assignment ? "true" : "false"); }},

      IDMASK_SIZE_FIELD("train.identities", models.training_identities),
      IDMASK_SIZE_FIELD("train.images_per_identity", models.images_per_identity),
      IDMASK_U64_FIELD("train.data_seed", models.data_seed),
      IDMASK_SIZE_FIELD("train.epochs", models.surrogate.epochs),
      IDMASK_DOUBLE_FIELD("train.learning_rate", models.surrogate.learning_rate),
      IDMASK_SIZE_FIELD("train.hidden_width", models.surrogate.hidden_width),
      IDMASK_U64_FIELD("train.seed", models.surrogate.seed),
      IDMASK_DOUBLE_FIELD("train.init_gain", models.surrogate.init_gain),
      IDMASK_SIZE_FIELD("train.held_out_epochs", models.held_out.epochs),
      IDMASK_DOUBLE_FIELD("train.held_out_learning_rate", models.held_out.learning_rate),
      IDMASK_SIZE_FIELD("train.held_out_hidden_width", models.held_out.hidden_width),
      IDMASK_U64_FIELD("train.held_out_seed", models.held_out.seed),
      IDMASK_DOUBLE_FIELD("train.held_out_init_gain", models.held_out.init_gain),

      {"model.output", [](RunConfig& c, const std::string&, const std::string& v) { c.model_output = v; },
       [](const RunConfig& c) { return c.model_output.string(); }},
      {"model.surrogate",
       [](RunConfig& c, const std::string&, const std::string& v) { c.surrogate_model = v; },
       [](const RunConfig& c) { return c.surrogate_model.string(); }},
      {"model.eval",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.eval_models.clear();
         for (const auto& p : split_list(v)) c.eval_models.emplace_back(p);
       },
       [](const RunConfig& c) { return join(c.eval_models); }},

      {"evaluate.methods",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.methods.clear();
         for (const auto& m : split_list(v)) {
           try {
             c.methods.push_back(parse_method(m));
           } catch (const InvalidArgument& e) {
             throw ConfigError("config key '" + k + "': " + e.what());
           }
         }
       },
       [](const RunConfig& c) { return join(c.methods); }},
      {"evaluate.gammas",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.gammas.clear();
         for (const auto& g : split_list(v)) c.gammas.push_back(parse_number<double>(k, g));
       },
       [](const RunConfig& c) { return join(c.gammas); }},
      {"evaluate.target_counts",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.target_counts.clear();
         for (const auto& g : split_list(v)) c.target_counts.push_back(parse_number<std::size_t>(k, g));
       },
       [](const RunConfig& c) { return join(c.target_counts); }},
      {"bench.seeds",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.bench_seeds.clear();
         for (const auto& g : split_list(v)) c.bench_seeds.push_back(parse_number<std::uint64_t>(k, g));
       },
       [](const RunConfig& c) { return join(c.bench_seeds); }},
  };
  return table;
}

#undef IDMASK_SIZE_FIELD
#undef IDMASK_U64_FIELD
#undef IDMASK_DOUBLE_FIELD

}  // namespace

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    apply_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorKind::kMissingFile, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(*this);
    out += "\n";
  }
  return out;
}

}  // namespace idmask

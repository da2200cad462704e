#include "pctrl/config.hpp"

#include <charconv>
#include <fmt/core.h>
#include <fmt/format.h>
#include <fstream>
#include <functional>
#include <sstream>

#include "pctrl/error.hpp"

namespace pctrl {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty())
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, v));
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty())
    throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, v));
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, v));
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    auto item = trim(v.substr(0, comma));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string num(double v) { return fmt::format("{}", v); }

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"centralized", "partial", "full", "fp",
                                              "wmmse",       "max_power", "random"};
  return names;
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field real_field(std::string key, T ExperimentConfig::*group, double T::*member) {
  return {key,
          [=](ExperimentConfig& c, std::string_view v) { (c.*group).*member = to_double(key, v); },
          [=](const ExperimentConfig& c) { return num((c.*group).*member); }};
}

template <class T, class U>
Field count_field(std::string key, T ExperimentConfig::*group, U T::*member) {
  return {key,
          [=](ExperimentConfig& c, std::string_view v) {
            (c.*group).*member = static_cast<U>(to_uint(key, v));
          },
          [=](const ExperimentConfig& c) { return fmt::format("{}", (c.*group).*member); }};
}

Field real_top(std::string key, double ExperimentConfig::*member) {
  return {key, [=](ExperimentConfig& c, std::string_view v) { c.*member = to_double(key, v); },
          [=](const ExperimentConfig& c) { return num(c.*member); }};
}

template <class U>
Field count_top(std::string key, U ExperimentConfig::*member) {
  return {key,
          [=](ExperimentConfig& c, std::string_view v) {
            c.*member = static_cast<U>(to_uint(key, v));
          },
          [=](const ExperimentConfig& c) { return fmt::format("{}", c.*member); }};
}

const std::vector<Field>& fields() {
  using E = ExperimentConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(count_field("num_cells", &E::net, &NetworkConfig::num_cells));
    f.push_back(count_field("users_per_cell", &E::net, &NetworkConfig::users_per_cell));
    f.push_back(real_field("bandwidth_hz", &E::net, &NetworkConfig::bandwidth_hz));
    f.push_back(real_field("pmax_dbm", &E::net, &NetworkConfig::pmax_dbm));
    f.push_back(real_field("noise_psd_dbm_hz", &E::net, &NetworkConfig::noise_psd_dbm_hz));
    f.push_back(real_field("noise_figure_db", &E::net, &NetworkConfig::noise_figure_db));
    f.push_back(real_field("ref_distance_m", &E::net, &NetworkConfig::ref_distance_m));
    f.push_back(real_field("cell_radius_m", &E::net, &NetworkConfig::cell_radius_m));
    f.push_back(real_field("pathloss_exp", &E::net, &NetworkConfig::pathloss_exp));
    f.push_back({"layout",
                 [](E& c, std::string_view v) { c.net.layout = parse_layout(v); },
                 [](const E& c) { return std::string(to_string(c.net.layout)); }});
    f.push_back({"constraint_mode",
                 [](E& c, std::string_view v) { c.constraint_mode = parse_constraint_mode(v); },
                 [](const E& c) { return std::string(to_string(c.constraint_mode)); }});

    f.push_back({"scheme", [](E& c, std::string_view v) { c.scheme = parse_scheme(v); },
                 [](const E& c) { return std::string(to_string(c.scheme)); }});
    f.push_back({"algorithm", [](E& c, std::string_view v) { c.algorithm = parse_algorithm(v); },
                 [](const E& c) { return std::string(to_string(c.algorithm)); }});
    f.push_back(real_field("kl_bound", &E::trpo, &TrpoConfig::kl_bound));
    f.push_back(real_field("step_decay", &E::trpo, &TrpoConfig::step_decay));
    f.push_back(real_field("gamma", &E::trpo, &TrpoConfig::gamma));
    f.push_back(count_field("episodes_per_iter", &E::trpo, &TrpoConfig::episodes_per_iter));
    f.push_back(count_field("cg_iters", &E::trpo, &TrpoConfig::cg_iters));
    f.push_back(real_field("cg_tol", &E::trpo, &TrpoConfig::cg_tol));
    f.push_back(real_field("fisher_damping", &E::trpo, &TrpoConfig::fisher_damping));
    f.push_back(count_field("max_backtracks", &E::trpo, &TrpoConfig::max_backtracks));
    f.push_back(real_field("critic_lr", &E::trpo, &TrpoConfig::critic_lr));
    f.push_back(count_field("critic_epochs", &E::trpo, &TrpoConfig::critic_epochs));
    f.push_back(count_field("critic_minibatch", &E::trpo, &TrpoConfig::critic_minibatch));
    f.push_back({"critic_optimizer",
                 [](E& c, std::string_view v) {
                   if (v == "adam")
                     c.trpo.critic_optimizer = CriticOptimizer::adam;
                   else if (v == "sgd")
                     c.trpo.critic_optimizer = CriticOptimizer::sgd;
                   else
                     throw ConfigError(fmt::format("critic_optimizer: unknown value '{}'", v));
                 },
                 [](const E& c) {
                   return std::string(c.trpo.critic_optimizer == CriticOptimizer::adam ? "adam"
                                                                                       : "sgd");
                 }});
    f.push_back(real_top("a2c_step", &E::a2c_step));
    f.push_back(count_top("iterations", &E::iterations));
    f.push_back(count_top("n_seeds", &E::n_seeds));
    f.push_back(count_top("hidden_layers", &E::hidden_layers));
    f.push_back(count_top("hidden_width", &E::hidden_width));
    f.push_back(real_top("smoothing", &E::smoothing));
    f.push_back(count_top("norm_samples", &E::norm_samples));

    f.push_back(count_top("eval_realizations", &E::eval_realizations));
    f.push_back({"eval_methods",
                 [](E& c, std::string_view v) {
                   std::vector<std::string> out;
                   for (auto item : split_list(v)) {
                     bool known = false;
                     for (const auto& m : method_names()) known = known || m == item;
                     if (!known)
                       throw ConfigError(fmt::format("eval_methods: unknown method '{}'", item));
                     out.emplace_back(item);
                   }
                   c.eval_methods = std::move(out);
                 },
                 [](const E& c) { return fmt::format("{}", fmt::join(c.eval_methods, ",")); }});
    f.push_back({"pmax_sweep_dbm",
                 [](E& c, std::string_view v) {
                   std::vector<double> out;
                   for (auto item : split_list(v)) out.push_back(to_double("pmax_sweep_dbm", item));
                   c.pmax_sweep_dbm = std::move(out);
                 },
                 [](const E& c) {
                   std::vector<std::string> parts;
                   for (double d : c.pmax_sweep_dbm) parts.push_back(num(d));
                   return fmt::format("{}", fmt::join(parts, ","));
                 }});
    f.push_back({"output_dir", [](E& c, std::string_view v) { c.output_dir = std::string(v); },
                 [](const E& c) { return c.output_dir; }});
    f.push_back(count_top("master_seed", &E::master_seed));
    f.push_back(count_top("solver_max_iters", &E::solver_max_iters));
    f.push_back(real_top("solver_tol", &E::solver_tol));
    f.push_back(count_top("timing_realizations", &E::timing_realizations));
    f.push_back(count_top("trace_realization", &E::trace_realization));
    f.push_back({"reproducible",
                 [](E& c, std::string_view v) { c.reproducible = to_bool("reproducible", v); },
                 [](const E& c) { return std::string(c.reproducible ? "true" : "false"); }});
    return f;
  }();
  return table;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError(fmt::format("unknown config key '{}'", key));
}

}  // namespace

void ExperimentConfig::validate() const {
  net.validate();
  trpo.validate();
  if (n_seeds == 0) throw ConfigError("n_seeds must be >= 1");
  if (hidden_layers == 0 || hidden_width == 0)
    throw ConfigError("hidden_layers and hidden_width must be >= 1");
  if (!(smoothing > 0.0 && smoothing <= 1.0)) throw ConfigError("smoothing must lie in (0, 1]");
  if (!(a2c_step > 0.0)) throw ConfigError("a2c_step must be > 0");
  if (norm_samples < 2) throw ConfigError("norm_samples must be >= 2");
  if (eval_realizations == 0) throw ConfigError("eval_realizations must be >= 1");
  if (timing_realizations == 0) throw ConfigError("timing_realizations must be >= 1");
  if (solver_max_iters == 0) throw ConfigError("solver_max_iters must be >= 1");
  if (!(solver_tol > 0.0)) throw ConfigError("solver_tol must be > 0");
  for (double d : pmax_sweep_dbm)
    if (!(d >= 0.0 && d <= 60.0))
      throw ConfigError(fmt::format("pmax_sweep_dbm value {} outside [0, 60] dBm", d));
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  find_field(trim(key)).set(cfg, trim(value));
}

std::string get_config_value(const ExperimentConfig& cfg, std::string_view key) {
  return find_field(trim(key)).get(cfg);
}

std::vector<std::pair<std::string, std::string>> config_items(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::string format_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_items(cfg)) out += fmt::format("{} = {}\n", k, v);
  return out;
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(fmt::format("line {}: expected key = value", line_no));
    try {
      set_config_value(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open config file '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace pctrl

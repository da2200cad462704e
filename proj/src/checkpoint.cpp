#include "pctrl/checkpoint.hpp"

#include <fmt/core.h>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "pctrl/error.hpp"

namespace pctrl {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "pctrl-checkpoint";
constexpr int kVersion = 1;

json net_to_json(const NetworkConfig& n) {
  return json{{"num_cells", n.num_cells},         {"users_per_cell", n.users_per_cell},
              {"bandwidth_hz", n.bandwidth_hz},   {"pmax_dbm", n.pmax_dbm},
              {"noise_psd_dbm_hz", n.noise_psd_dbm_hz},
              {"noise_figure_db", n.noise_figure_db},
              {"ref_distance_m", n.ref_distance_m}, {"cell_radius_m", n.cell_radius_m},
              {"pathloss_exp", n.pathloss_exp},   {"layout", std::string(to_string(n.layout))}};
}

NetworkConfig net_from_json(const json& j) {
  NetworkConfig n;
  n.num_cells = j.at("num_cells").get<std::size_t>();
  n.users_per_cell = j.at("users_per_cell").get<std::size_t>();
  n.bandwidth_hz = j.at("bandwidth_hz").get<double>();
  n.pmax_dbm = j.at("pmax_dbm").get<double>();
  n.noise_psd_dbm_hz = j.at("noise_psd_dbm_hz").get<double>();
  n.noise_figure_db = j.at("noise_figure_db").get<double>();
  n.ref_distance_m = j.at("ref_distance_m").get<double>();
  n.cell_radius_m = j.at("cell_radius_m").get<double>();
  n.pathloss_exp = j.at("pathloss_exp").get<double>();
  n.layout = parse_layout(j.at("layout").get<std::string>());
  return n;
}

json params_to_json(const ParamVector& p) {
  return json{{"layer_sizes", p.layer_sizes()},
              {"values", std::vector<double>(p.values().begin(), p.values().end())}};
}

ParamVector params_from_json(const json& j) {
  ParamVector p(j.at("layer_sizes").get<std::vector<std::size_t>>());
  const auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != p.size())
    throw ShapeError(fmt::format("checkpoint holds {} parameters, layer sizes imply {}",
                                 values.size(), p.size()));
  std::copy(values.begin(), values.end(), p.values().begin());
  return p;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& c) {
  const auto& sizes = c.theta.layer_sizes();
  std::vector<std::size_t> hidden(sizes.begin() + 1, sizes.end() - 1);
  json j{{"format", kFormat},
         {"version", kVersion},
         {"scheme", std::string(to_string(c.agent.scheme))},
         {"algorithm", std::string(to_string(c.algorithm))},
         {"network", net_to_json(c.agent.net)},
         {"hidden", hidden},
         {"normalization", {{"shift", c.agent.norm.shift}, {"scale", c.agent.norm.scale}}},
         {"policy", params_to_json(c.theta)},
         {"critic", params_to_json(c.phi)},
         {"iterations", c.iterations},
         {"seed", c.seed},
         {"diagnostic", c.diagnostic}};
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(fmt::format("checkpoint is not valid JSON: {}", e.what()));
  }
  try {
    if (j.at("format").get<std::string>() != kFormat)
      throw IoError("not a pctrl checkpoint");
    if (j.at("version").get<int>() != kVersion)
      throw IoError(fmt::format("unsupported checkpoint version {}", j.at("version").get<int>()));
    NormalizationConstants norm{j.at("normalization").at("shift").get<std::vector<double>>(),
                                j.at("normalization").at("scale").get<std::vector<double>>()};
    Checkpoint c{make_agent(parse_scheme(j.at("scheme").get<std::string>()),
                            net_from_json(j.at("network")),
                            j.at("hidden").get<std::vector<std::size_t>>(), std::move(norm)),
                 parse_algorithm(j.at("algorithm").get<std::string>()),
                 params_from_json(j.at("policy")),
                 params_from_json(j.at("critic")),
                 j.at("iterations").get<std::size_t>(),
                 j.at("seed").get<std::uint64_t>(),
                 j.at("diagnostic").get<bool>()};
    c.agent.ac.policy.check_params(c.theta);
    c.agent.ac.critic.check_params(c.phi);
    return c;
  } catch (const json::exception& e) {
    throw IoError(fmt::format("malformed checkpoint: {}", e.what()));
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write checkpoint '{}'", path));
  out << checkpoint_to_json(ckpt);
  if (!out) throw IoError(fmt::format("failed writing checkpoint '{}'", path));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open checkpoint '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace pctrl

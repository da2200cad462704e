#pragma once

#include <cstdint>
#include <string>

#include "pctrl/agents.hpp"

namespace pctrl {

struct Checkpoint {
  Agent agent;
  Algorithm algorithm = Algorithm::trpo;
  ParamVector theta;
  ParamVector phi;
  std::size_t iterations = 0;  // training iterations completed
  std::uint64_t seed = 0;
  bool diagnostic = false;  // written after an aborted run
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pctrl

#pragma once

#include <json.hpp>
#include <string>

#include "tdamp/dataset.hpp"
#include "tdamp/em.hpp"

namespace tdamp {

// Versioned structured-text checkpoint: full hyperparameter set, sparsity
// policy, config echo, normalizer, and the iteration counter. Doubles
// round-trip bit-exactly through the JSON encoding.
struct Checkpoint {
  TaskKind task = TaskKind::regression;
  NetHyper hyper;
  SparsityPolicy policy;
  Normalizer normalizer;
  int64_t iteration = 0;
  nlohmann::json config_echo;
};

nlohmann::json hyper_to_json(const NetHyper& h);
NetHyper hyper_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tdamp

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "scatterfusion/model.hpp"
#include "scatterfusion/tensor.hpp"

namespace scatterfusion {

// Everything needed to rebuild a trained model: config, step counter, the
// TSR period the trainer locked in (0 = unset) and the named parameter
// tensors in registry order.
struct Checkpoint {
  ModelConfig config;
  long step = 0;
  long period = 0;
  std::vector<std::pair<std::string, Tensor>> params;
};

Checkpoint snapshot(const Forecaster& m, long step = 0, long period = 0);

// Rebuild a model from a checkpoint (seeded init, then parameters applied).
Forecaster restore(const Checkpoint& ck);

// Apply a checkpoint to an existing model. The configs must agree; on
// mismatch the error lists every differing config key.
void load_into(Forecaster& m, const Checkpoint& ck);

// Binary container: one ASCII magic line, a JSON header of the announced
// byte length, then raw little-endian float64 blocks in manifest order.
// Documented byte-exactly in docs/FORMATS.md.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);
std::vector<std::string> config_diff(const ModelConfig& a, const ModelConfig& b);

}  // namespace scatterfusion

#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "mcb/inference.hpp"
#include "mcb/learner.hpp"

namespace mcb {

inline constexpr const char* kCheckpointSchema = "mcb-checkpoint-v1";

nlohmann::json matrix_to_json(const Matrix& m);          // row-major values
Matrix matrix_from_json(const nlohmann::json& j, int rows, int cols);

nlohmann::json config_to_json(const BanditConfig& config);
BanditConfig config_from_json(const nlohmann::json& j);

nlohmann::json report_to_json(const InferenceReport& rep);

struct Checkpoint {
  LearnerState state;
  std::optional<DebiasState> debias;
};

/// Serializes the learner (and the debias accumulators when present) so a run
/// can resume or feed the inference tool.
void save_checkpoint(const std::string& path, const LearnerState& state,
                     const DebiasState* debias = nullptr);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace mcb

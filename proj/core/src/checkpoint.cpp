#include "mcb/checkpoint.hpp"

#include <fstream>

#include "mcb/errors.hpp"

namespace mcb {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json values = json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) values.push_back(m(i, j));
  return values;
}

Matrix matrix_from_json(const json& j, int rows, int cols) {
  if (!j.is_array() || static_cast<std::int64_t>(j.size()) !=
                           static_cast<std::int64_t>(rows) * cols)
    throw DataError("checkpoint: matrix payload has wrong size");
  Matrix m(rows, cols);
  std::size_t idx = 0;
  for (int i = 0; i < rows; ++i)
    for (int jj = 0; jj < cols; ++jj) m(i, jj) = j[idx++].get<double>();
  return m;
}

json config_to_json(const BanditConfig& config) {
  json j{{"d1", config.d1},
         {"d2", config.d2},
         {"r", config.r},
         {"k_arms", config.k_arms},
         {"horizon_T", config.horizon_T},
         {"phase1_len_T0", config.phase1_len_T0},
         {"gamma", config.gamma},
         {"epsilon_phase1", config.epsilon_phase1},
         {"c2", config.c2},
         {"eta_phase1", config.eta_phase1},
         {"seed", config.seed}};
  if (config.sampling_weights)
    j["sampling_weights"] = matrix_to_json(config.sampling_weights->table());
  else
    j["sampling_weights"] = nullptr;
  return j;
}

BanditConfig config_from_json(const json& j) {
  BanditConfig config;
  config.d1 = j.at("d1").get<int>();
  config.d2 = j.at("d2").get<int>();
  config.r = j.at("r").get<int>();
  config.k_arms = j.at("k_arms").get<int>();
  config.horizon_T = j.at("horizon_T").get<std::int64_t>();
  config.phase1_len_T0 = j.at("phase1_len_T0").get<std::int64_t>();
  config.gamma = j.at("gamma").get<double>();
  config.epsilon_phase1 = j.at("epsilon_phase1").get<double>();
  config.c2 = j.at("c2").get<double>();
  config.eta_phase1 = j.at("eta_phase1").get<double>();
  config.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("sampling_weights") && !j["sampling_weights"].is_null())
    config.sampling_weights = std::make_shared<SamplingWeights>(
        matrix_from_json(j["sampling_weights"], config.d1, config.d2));
  return config;
}

json report_to_json(const InferenceReport& rep) {
  return json{{"estimate", rep.estimate},
              {"std_error", rep.std_error},
              {"ci_low", rep.ci_low},
              {"ci_high", rep.ci_high},
              {"z_stat", rep.z_stat},
              {"p_value_two_sided", rep.p_value_two_sided},
              {"p_value_one_sided", rep.p_value_one_sided},
              {"alpha", rep.alpha},
              {"degenerate_se", rep.degenerate_se},
              {"sigma_sq", rep.sigma_sq},
              {"s_sq", rep.s_sq},
              {"omega_sizes", rep.omega_sizes},
              {"b_T", rep.b_T},
              {"n_phase2", rep.n_phase2}};
}

void save_checkpoint(const std::string& path, const LearnerState& state,
                     const DebiasState* debias) {
  json j;
  j["schema"] = kCheckpointSchema;
  j["config"] = config_to_json(state.config);
  j["t"] = state.t;
  json arms = json::array();
  for (const auto& arm : state.arms)
    arms.push_back(json{{"u", matrix_to_json(arm.u)},
                        {"v", matrix_to_json(arm.v)}});
  j["arms"] = std::move(arms);
  j["diagnostics"] =
      json{{"max_incoherence", state.diagnostics.max_incoherence},
           {"rebalance_degeneracies", state.diagnostics.rebalance_degeneracies},
           {"zero_init_arms", state.diagnostics.zero_init_arms}};

  if (debias && debias->n_phase2 > 0) {
    json db;
    db["t0"] = debias->t0;
    db["t_final"] = debias->t_final;
    db["n_phase2"] = debias->n_phase2;
    db["sigma_sq_sum"] = debias->sigma_sq_sum;
    auto dump_set = [](const std::vector<Matrix>& ms) {
      json arr = json::array();
      for (const auto& m : ms) arr.push_back(matrix_to_json(m));
      return arr;
    };
    db["snapshot"] = dump_set(debias->snapshot);
    db["delta_sum"] = dump_set(debias->delta_sum);
    db["weighted_delta_sum"] = dump_set(debias->weighted_delta_sum);
    db["ipw_sum"] = dump_set(debias->ipw_sum);
    j["debias"] = std::move(db);
  } else {
    j["debias"] = nullptr;
  }

  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint parse error: " + std::string(e.what()));
  }
  if (j.value("schema", "") != kCheckpointSchema)
    throw DataError("checkpoint: unexpected schema '" +
                    j.value("schema", std::string("<none>")) + "'");

  Checkpoint cp;
  cp.state.config = config_from_json(j.at("config"));
  cp.state.config.validate();
  cp.state.t = j.at("t").get<std::int64_t>();
  const auto& config = cp.state.config;
  for (const auto& arm : j.at("arms")) {
    FactorPair pair;
    pair.u = matrix_from_json(arm.at("u"), config.d1, config.r);
    pair.v = matrix_from_json(arm.at("v"), config.d2, config.r);
    cp.state.arms.push_back(std::move(pair));
  }
  if (static_cast<int>(cp.state.arms.size()) != config.k_arms)
    throw DataError("checkpoint: arm count mismatch");
  const auto& diag = j.at("diagnostics");
  cp.state.diagnostics.max_incoherence = diag.at("max_incoherence").get<double>();
  cp.state.diagnostics.rebalance_degeneracies =
      diag.at("rebalance_degeneracies").get<std::int64_t>();
  cp.state.diagnostics.zero_init_arms =
      diag.at("zero_init_arms").get<std::vector<int>>();

  if (j.contains("debias") && !j["debias"].is_null()) {
    const auto& db_json = j["debias"];
    DebiasState db = make_debias_state(config);
    db.t0 = db_json.at("t0").get<std::int64_t>();
    db.t_final = db_json.at("t_final").get<std::int64_t>();
    db.n_phase2 = db_json.at("n_phase2").get<std::int64_t>();
    db.sigma_sq_sum = db_json.at("sigma_sq_sum").get<std::vector<double>>();
    auto load_set = [&](const char* key) {
      std::vector<Matrix> ms;
      for (const auto& m : db_json.at(key))
        ms.push_back(matrix_from_json(m, config.d1, config.d2));
      return ms;
    };
    db.snapshot = load_set("snapshot");
    db.delta_sum = load_set("delta_sum");
    db.weighted_delta_sum = load_set("weighted_delta_sum");
    db.ipw_sum = load_set("ipw_sum");
    cp.debias = std::move(db);
  }
  return cp;
}

}  // namespace mcb

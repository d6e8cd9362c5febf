#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcb/inference.hpp"
#include "mcb/learner.hpp"
#include "mcb/rng.hpp"

namespace mcb {

/// One logged bandit interaction.
struct LogRecord {
  std::int64_t order_key = 0;
  int j1 = 0;
  int j2 = 0;
  int action = 0;
  double reward = 0.0;
  std::optional<double> outcome;  // optional raw outcome (e.g. occupancy rate)
  std::int64_t line = 0;          // 1-based source line, for error reporting
};

/// Column mapping for log ingestion. The order column is used when present;
/// otherwise records keep file order. Indices are 0-based unless one_based.
struct ReplaySchema {
  std::string col_j1 = "j1";
  std::string col_j2 = "j2";
  std::string col_action = "action";
  std::string col_reward = "reward";
  std::string col_order = "order";
  std::string col_outcome = "outcome";
  bool one_based = false;
};

/// Parses and validates a CSV log. Malformed rows raise DataError naming the
/// line. Records are returned sorted by order key (stable), or in file order
/// when the order column is absent.
std::vector<LogRecord> ingest_log(const std::string& path,
                                  const ReplaySchema& schema, int d1, int d2,
                                  int k_arms);

struct ReplayConfig {
  BanditConfig bandit;  // horizon_T is a cap on matched steps; T0 counts
                        // matched steps as well
  ReplaySchema schema;

  /// Number of leading records consumed for Soft-Impute initialization
  /// (regardless of matching). 0 with init_given empty means the caller must
  /// provide initial estimates.
  std::int64_t init_records = 0;
  SoftImputeOptions soft_impute;
  std::vector<Matrix> init_given;
};

struct ReplayStats {
  std::int64_t total_records = 0;  // records presented to the replay loop
  std::int64_t matched = 0;
  std::int64_t skipped = 0;
  std::int64_t init_records = 0;   // consumed before the loop
  std::vector<std::int64_t> matched_per_arm;
  std::vector<double> matched_outcomes;  // outcome column of matched records

  LearnerState state;
  std::optional<DebiasState> debias;
};

/// Streams the log through the policy: at each record the policy draws its own
/// action from the current propensities; on agreement the logged reward feeds
/// sgd_step (and the debias accumulator once matched steps exceed T0),
/// otherwise the record is skipped. Time is counted in matched steps.
ReplayStats replay_run(const std::vector<LogRecord>& records,
                       const ReplayConfig& config, Rng& rng);

/// Fraction of outcomes inside [lo, hi] (closed band).
double target_band_metric(const std::vector<double>& outcomes, double lo,
                          double hi);

}  // namespace mcb

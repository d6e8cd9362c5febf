#include "mcb/replay.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>

#include "mcb/errors.hpp"

namespace mcb {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim spaces and stray carriage returns
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string()
                                            : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::int64_t parse_int(const std::string& s, std::int64_t line,
                       const std::string& col) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw DataError("line " + std::to_string(line) + ": column '" + col +
                    "' is not an integer: '" + s + "'");
  return value;
}

double parse_double(const std::string& s, std::int64_t line,
                    const std::string& col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line) + ": column '" + col +
                    "' is not a finite number: '" + s + "'");
  }
}

}  // namespace

std::vector<LogRecord> ingest_log(const std::string& path,
                                  const ReplaySchema& schema, int d1, int d2,
                                  int k_arms) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open log file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const std::vector<std::string> header = split_csv_line(line);

  auto find_col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  auto require_col = [&](const std::string& name) {
    const int idx = find_col(name);
    if (idx < 0) throw DataError(path + ": missing column '" + name + "'");
    return idx;
  };

  const int i_j1 = require_col(schema.col_j1);
  const int i_j2 = require_col(schema.col_j2);
  const int i_action = require_col(schema.col_action);
  const int i_reward = require_col(schema.col_reward);
  const int i_order = find_col(schema.col_order);
  const int i_outcome = find_col(schema.col_outcome);
  const int offset = schema.one_based ? 1 : 0;

  std::vector<LogRecord> records;
  std::int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));

    LogRecord rec;
    rec.line = line_no;
    rec.j1 = static_cast<int>(
        parse_int(fields[static_cast<std::size_t>(i_j1)], line_no,
                  schema.col_j1)) - offset;
    rec.j2 = static_cast<int>(
        parse_int(fields[static_cast<std::size_t>(i_j2)], line_no,
                  schema.col_j2)) - offset;
    rec.action = static_cast<int>(parse_int(
        fields[static_cast<std::size_t>(i_action)], line_no, schema.col_action));
    rec.reward = parse_double(fields[static_cast<std::size_t>(i_reward)],
                              line_no, schema.col_reward);
    rec.order_key =
        i_order >= 0
            ? parse_int(fields[static_cast<std::size_t>(i_order)], line_no,
                        schema.col_order)
            : line_no;
    if (i_outcome >= 0)
      rec.outcome = parse_double(fields[static_cast<std::size_t>(i_outcome)],
                                 line_no, schema.col_outcome);

    if (rec.j1 < 0 || rec.j1 >= d1)
      throw DataError("line " + std::to_string(line_no) + ": row index " +
                      std::to_string(rec.j1 + offset) + " outside [" +
                      std::to_string(offset) + ", " +
                      std::to_string(d1 - 1 + offset) + "]");
    if (rec.j2 < 0 || rec.j2 >= d2)
      throw DataError("line " + std::to_string(line_no) + ": column index " +
                      std::to_string(rec.j2 + offset) + " outside [" +
                      std::to_string(offset) + ", " +
                      std::to_string(d2 - 1 + offset) + "]");
    if (rec.action < 0 || rec.action >= k_arms)
      throw DataError("line " + std::to_string(line_no) + ": action " +
                      std::to_string(rec.action) + " outside [0, " +
                      std::to_string(k_arms - 1) + "]");
    records.push_back(std::move(rec));
  }

  if (i_order >= 0)
    std::stable_sort(records.begin(), records.end(),
                     [](const LogRecord& a, const LogRecord& b) {
                       return a.order_key < b.order_key;
                     });
  return records;
}

ReplayStats replay_run(const std::vector<LogRecord>& records,
                       const ReplayConfig& config, Rng& rng) {
  const BanditConfig& bandit = config.bandit;
  bandit.validate();

  ReplayStats stats;
  stats.matched_per_arm.assign(static_cast<std::size_t>(bandit.k_arms), 0);

  // Initialization from the leading records, or from given matrices.
  std::vector<Matrix> inits;
  std::size_t start = 0;
  if (config.init_records > 0) {
    std::vector<Observation> observations;
    const auto n = std::min<std::size_t>(
        static_cast<std::size_t>(config.init_records), records.size());
    for (std::size_t i = 0; i < n; ++i) {
      const LogRecord& rec = records[i];
      observations.push_back({rec.j1, rec.j2, rec.action, rec.reward});
    }
    start = n;
    stats.init_records = static_cast<std::int64_t>(n);
    inits = soft_impute_init(observations, bandit.d1, bandit.d2, bandit.k_arms,
                             config.soft_impute);
  } else if (!config.init_given.empty()) {
    inits = config.init_given;
  } else {
    throw ConfigError(
        "replay_run: need init_records > 0 or explicit initial estimates");
  }

  LearnerState state = init_from_matrices(inits, bandit.r, bandit);
  DebiasState db = make_debias_state(bandit);

  for (std::size_t i = start; i < records.size(); ++i) {
    if (state.t >= bandit.horizon_T) break;  // matched-step budget exhausted
    const LogRecord& log = records[i];
    ++stats.total_records;

    const std::int64_t t = state.t + 1;
    const double eps = epsilon_at(bandit, t);
    const PropensityVector pv = propensities(state.arms, log.j1, log.j2, eps);
    const int policy_action = sample_action(pv, rng);
    if (policy_action != log.action) {
      ++stats.skipped;
      continue;
    }

    StepRecord rec;
    rec.t = t;
    rec.j1 = log.j1;
    rec.j2 = log.j2;
    rec.propensities = pv;
    rec.action = log.action;
    rec.reward = log.reward;
    rec.phase = t <= bandit.phase1_len_T0 ? 1 : 2;

    if (t > bandit.phase1_len_T0) debias_accumulate(db, state, rec);
    sgd_step(state, rec);
    ++stats.matched;
    ++stats.matched_per_arm[static_cast<std::size_t>(log.action)];
    if (log.outcome) stats.matched_outcomes.push_back(*log.outcome);
  }

  stats.state = std::move(state);
  if (db.n_phase2 > 0) stats.debias = std::move(db);
  return stats;
}

double target_band_metric(const std::vector<double>& outcomes, double lo,
                          double hi) {
  if (outcomes.empty()) throw DataError("target_band_metric: no outcomes");
  if (!(lo <= hi)) throw ConfigError("target_band_metric: empty band");
  std::int64_t inside = 0;
  for (double x : outcomes)
    if (x >= lo && x <= hi) ++inside;
  return static_cast<double>(inside) / static_cast<double>(outcomes.size());
}

}  // namespace mcb

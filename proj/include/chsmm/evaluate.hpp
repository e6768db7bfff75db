#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chsmm/error.hpp"
#include "chsmm/forecast.hpp"
#include "chsmm/model.hpp"
#include "chsmm/parallel.hpp"
#include "chsmm/state_abstraction.hpp"

namespace chsmm {

/// windows[j][i][tau]: evaluation window j, appliance i, step tau.
using Trajectories = std::vector<std::vector<std::vector<double>>>;

struct NrmseValue {
  double nrmse = 0.0;           // squared aggregate deviation per window, as in the load-forecast metric
  double step_rmse_norm = 0.0;  // conventional per-step RMSE of the aggregate, same normalizer
  std::size_t windows = 0;
};

namespace detail {

inline void check_shapes(const Trajectories& actual, const Trajectories& predicted) {
  if (actual.size() != predicted.size()) fail(ErrorKind::input, "actual and predicted window counts differ");
  if (actual.empty()) fail(ErrorKind::input, "no evaluation windows");
  const std::size_t n = actual.front().size();
  const std::size_t H = n ? actual.front().front().size() : 0;
  if (n == 0 || H == 0) fail(ErrorKind::input, "empty evaluation window");
  for (std::size_t j = 0; j < actual.size(); ++j) {
    if (actual[j].size() != n || predicted[j].size() != n)
      fail(ErrorKind::input, "window " + std::to_string(j) + " has a different appliance count");
    for (std::size_t i = 0; i < n; ++i)
      if (actual[j][i].size() != H || predicted[j][i].size() != H)
        fail(ErrorKind::input, "window " + std::to_string(j) + " has a different horizon");
  }
}

}  // namespace detail

/// Normalized RMSE of aggregate forecasts over rolling windows. Per window j
/// the aggregate deviation D_j = sum_i sum_tau (y - y_hat) and the aggregate
/// actual A_j = sum_i sum_tau y. The value is sqrt(sum_j D_j^2 / (J*H)) divided
/// by max_j A_j - min_j A_j.
inline NrmseValue nrmse_detailed(const Trajectories& actual, const Trajectories& predicted) {
  detail::check_shapes(actual, predicted);
  const std::size_t J = actual.size();
  const std::size_t n = actual.front().size();
  const std::size_t H = actual.front().front().size();
  if (J < 2) fail(ErrorKind::undefined_normalizer, "at least 2 evaluation windows are needed");
  double sq_dev = 0.0, sq_step = 0.0;
  double a_min = std::numeric_limits<double>::infinity(), a_max = -a_min;
  for (std::size_t j = 0; j < J; ++j) {
    double dev = 0.0, act = 0.0;
    for (std::size_t tau = 0; tau < H; ++tau) {
      double step_dev = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        step_dev += actual[j][i][tau] - predicted[j][i][tau];
        act += actual[j][i][tau];
      }
      dev += step_dev;
      sq_step += step_dev * step_dev;
    }
    sq_dev += dev * dev;
    a_min = std::min(a_min, act);
    a_max = std::max(a_max, act);
  }
  const double range = a_max - a_min;
  if (!(range > 0.0)) fail(ErrorKind::undefined_normalizer, "aggregate actual load is identical in every window");
  const double denom = static_cast<double>(J * H);
  return {std::sqrt(sq_dev / denom) / range, std::sqrt(sq_step / denom) / range, J};
}

inline double nrmse(const Trajectories& actual, const Trajectories& predicted) {
  return nrmse_detailed(actual, predicted).nrmse;
}

// ---------------------------------------------------------------------------
// Rolling-origin forecasts

struct EvalOptions {
  std::size_t origin_spacing = 30;
  std::size_t first_origin = 0;
  ExogForecastOptions exog{ExogPolicy::observed};
  std::size_t jobs = 1;
};

/// Forecasts of one appliance at every origin; rows hold steps t+1..t+H_max.
struct UnitForecasts {
  std::string appliance_id;
  std::vector<std::size_t> origins;
  std::vector<std::vector<double>> actual;
  std::vector<std::vector<double>> predicted;
};

inline std::vector<std::size_t> rolling_origins(std::size_t n_steps, std::size_t H, const EvalOptions& opts) {
  require(opts.origin_spacing >= 1, "origin spacing must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t t = opts.first_origin; t + H < n_steps; t += opts.origin_spacing) out.push_back(t);
  return out;
}

inline UnitForecasts rolling_forecasts(const ChsmModel& m, const PowerSeries& test, std::size_t H,
                                       const EvalOptions& opts = {}) {
  const EpochSequence seq = segment(test, m.states);
  UnitForecasts u;
  u.appliance_id = test.appliance_id;
  u.origins = rolling_origins(test.size(), H, opts);
  for (const std::size_t t : u.origins) {
    const ForecastContext ctx = make_context(m, seq, t, H, opts.exog);
    u.predicted.push_back(forecast(m, ctx, H).power_hat);
    u.actual.emplace_back(test.power.begin() + static_cast<std::ptrdiff_t>(t + 1),
                          test.power.begin() + static_cast<std::ptrdiff_t>(t + 1 + H));
  }
  return u;
}

/// Windows of the summed trajectories of `members`, truncated to horizon H.
inline std::pair<Trajectories, Trajectories> group_windows(std::span<const UnitForecasts> units,
                                                           std::span<const std::size_t> members, std::size_t H) {
  Trajectories actual, predicted;
  const std::size_t J = units[members.front()].origins.size();
  actual.resize(J);
  predicted.resize(J);
  for (std::size_t j = 0; j < J; ++j)
    for (const std::size_t i : members) {
      const auto& u = units[i];
      actual[j].emplace_back(u.actual[j].begin(), u.actual[j].begin() + static_cast<std::ptrdiff_t>(H));
      predicted[j].emplace_back(u.predicted[j].begin(), u.predicted[j].begin() + static_cast<std::ptrdiff_t>(H));
    }
  return {std::move(actual), std::move(predicted)};
}

// ---------------------------------------------------------------------------
// Reports

enum class AnomalyReason { high_nrmse, duration_out_of_range };

inline const char* to_string(AnomalyReason r) {
  return r == AnomalyReason::high_nrmse ? "high-nrmse" : "duration-out-of-range";
}

struct ApplianceScore {
  std::string appliance_id;
  std::size_t horizon = 0;
  double nrmse = 0.0;
  double step_rmse_norm = 0.0;
};

struct AggregateScore {
  std::string group_id;
  std::size_t group_size = 0;
  std::size_t horizon = 0;
  double nrmse = 0.0;
  double step_rmse_norm = 0.0;
};

struct Anomaly {
  std::string appliance_id;
  double score = 0.0;
  AnomalyReason reason = AnomalyReason::high_nrmse;
  std::string detail;
};

struct EvaluationReport {
  std::vector<ApplianceScore> per_appliance;
  std::vector<AggregateScore> aggregates;
  std::vector<Anomaly> anomalies;
  std::vector<std::string> warnings;

  /// Mean aggregate NRMSE over all groups of the given size at horizon H.
  [[nodiscard]] double mean_aggregate(std::size_t group_size, std::size_t horizon) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& a : aggregates)
      if (a.group_size == group_size && a.horizon == horizon) {
        total += a.nrmse;
        ++n;
      }
    if (n == 0) fail(ErrorKind::input, "no aggregate of size " + std::to_string(group_size) + " at horizon " +
                                           std::to_string(horizon));
    return total / static_cast<double>(n);
  }

  [[nodiscard]] double mean_individual(std::size_t horizon) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& a : per_appliance)
      if (a.horizon == horizon) {
        total += a.nrmse;
        ++n;
      }
    if (n == 0) fail(ErrorKind::input, "no appliance scores at horizon " + std::to_string(horizon));
    return total / static_cast<double>(n);
  }
};

/// Rolling-origin evaluation of each model on its test series at every
/// horizon, plus aggregates over disjoint consecutive groups of each size.
/// Aggregates sum member trajectories before scoring.
inline EvaluationReport sweep(std::span<const ChsmModel> models, std::span<const PowerSeries> tests,
                              std::span<const std::size_t> horizons, std::span<const std::size_t> group_sizes,
                              const EvalOptions& opts = {}) {
  if (models.size() != tests.size())
    fail(ErrorKind::input, std::to_string(models.size()) + " models but " + std::to_string(tests.size()) +
                               " test series");
  if (models.empty()) fail(ErrorKind::input, "no appliances to evaluate");
  if (horizons.empty()) fail(ErrorKind::input, "no horizons to evaluate");
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& a = models[i].meta.appliance_id;
    const auto& b = tests[i].appliance_id;
    if (!a.empty() && !b.empty() && a != b)
      fail(ErrorKind::input, "model '" + a + "' paired with test series '" + b + "'");
    if (tests[i].size() != tests[0].size() || tests[i].start != tests[0].start || tests[i].step != tests[0].step)
      fail(ErrorKind::input, "test series '" + b + "' does not share the fleet's time grid");
  }
  for (const auto H : horizons) require(H >= 1, "horizons must be >= 1");
  const std::size_t H_max = *std::max_element(horizons.begin(), horizons.end());

  std::vector<UnitForecasts> units(models.size());
  parallel_for(models.size(), opts.jobs, [&](std::size_t i) { units[i] = rolling_forecasts(models[i], tests[i], H_max, opts); });

  EvaluationReport report;
  for (std::size_t i = 0; i < units.size(); ++i)
    for (const auto H : horizons) {
      const std::size_t one[] = {i};
      auto [act, pred] = group_windows(units, one, H);
      try {
        const auto v = nrmse_detailed(act, pred);
        report.per_appliance.push_back({units[i].appliance_id, H, v.nrmse, v.step_rmse_norm});
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::undefined_normalizer) throw;
        report.warnings.push_back(units[i].appliance_id + " at horizon " + std::to_string(H) + ": " + e.what());
      }
    }
  for (const auto N : group_sizes) {
    require(N >= 1, "group sizes must be >= 1");
    if (N > units.size()) {
      report.warnings.push_back("group size " + std::to_string(N) + " exceeds the fleet of " +
                                std::to_string(units.size()));
      continue;
    }
    for (std::size_t g = 0; (g + 1) * N <= units.size(); ++g) {
      std::vector<std::size_t> members(N);
      for (std::size_t k = 0; k < N; ++k) members[k] = g * N + k;
      for (const auto H : horizons) {
        auto [act, pred] = group_windows(units, members, H);
        const std::string id = "n" + std::to_string(N) + "-g" + std::to_string(g);
        try {
          const auto v = nrmse_detailed(act, pred);
          report.aggregates.push_back({id, N, H, v.nrmse, v.step_rmse_norm});
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::undefined_normalizer) throw;
          report.warnings.push_back(id + " at horizon " + std::to_string(H) + ": " + e.what());
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Anomalies

/// Scales the median absolute deviation to a standard deviation for normal data.
inline constexpr double mad_to_sd = 1.4826;

struct AnomalyOptions {
  double k_mad = 3.0;  // in units of the scaled MAD
  double duration_margin = 1.5;  // flag durations above margin x the trained per-state maximum
  std::size_t horizon = 0;       // horizon used by the error rule; 0 = largest in the report
};

inline double median(std::vector<double> v) {
  require(!v.empty(), "median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Flags appliances whose forecast error is far above the population
/// (median + k_mad * scaled MAD) or whose test data contain a state duration beyond
/// what training ever showed.
inline std::vector<Anomaly> detect_anomalies(EvaluationReport& report, std::span<const ChsmModel> models,
                                             std::span<const EpochSequence> test_epochs,
                                             const AnomalyOptions& opts = {}) {
  if (models.size() != test_epochs.size())
    fail(ErrorKind::input, "models and test epoch sequences differ in number");
  std::vector<Anomaly> out;

  std::size_t H = opts.horizon;
  if (H == 0)
    for (const auto& s : report.per_appliance) H = std::max(H, s.horizon);
  std::vector<const ApplianceScore*> pop;
  for (const auto& s : report.per_appliance)
    if (s.horizon == H) pop.push_back(&s);
  if (pop.size() < 3) {
    report.warnings.push_back("population of " + std::to_string(pop.size()) +
                              " is too small for the error rule; skipped");
  } else {
    std::vector<double> v;
    for (const auto* s : pop) v.push_back(s->nrmse);
    const double med = median(v);
    std::vector<double> dev;
    for (double x : v) dev.push_back(std::abs(x - med));
    const double mad = mad_to_sd * median(dev);
    const double threshold = med + opts.k_mad * mad;
    for (const auto* s : pop)
      if (s->nrmse > threshold) {
        const double score = mad > 0.0 ? (s->nrmse - med) / mad : std::numeric_limits<double>::max();
        char buf[160];
        std::snprintf(buf, sizeof buf, "nrmse %.6g > median %.6g + %.3g * scaled MAD %.6g at horizon %zu", s->nrmse, med,
                      opts.k_mad, mad, H);
        out.push_back({s->appliance_id, score, AnomalyReason::high_nrmse, buf});
      }
  }

  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    double worst = 0.0;
    std::string what;
    for (const auto& e : test_epochs[i].epochs) {
      if (e.state >= m.max_duration_per_state.size()) continue;
      const auto trained = m.max_duration_per_state[e.state];
      if (trained == 0) continue;
      const double ratio = static_cast<double>(e.duration) / static_cast<double>(trained);
      if (ratio > opts.duration_margin && ratio > worst) {
        worst = ratio;
        what = "state " + std::to_string(e.state) + " lasted " + std::to_string(e.duration) + " steps; training max " +
               std::to_string(trained);
      }
    }
    if (worst > 0.0) {
      const std::string id = m.meta.appliance_id.empty() ? test_epochs[i].source->appliance_id : m.meta.appliance_id;
      out.push_back({id, worst, AnomalyReason::duration_out_of_range, what});
    }
  }
  report.anomalies = out;
  return out;
}

// ---------------------------------------------------------------------------
// Output

inline std::string report_csv(const EvaluationReport& r) {
  std::string out = "kind,id,group_size,horizon,nrmse,step_rmse_norm\n";
  char buf[256];
  for (const auto& s : r.per_appliance) {
    std::snprintf(buf, sizeof buf, "appliance,%s,1,%zu,%.17g,%.17g\n", s.appliance_id.c_str(), s.horizon, s.nrmse,
                  s.step_rmse_norm);
    out += buf;
  }
  for (const auto& a : r.aggregates) {
    std::snprintf(buf, sizeof buf, "aggregate,%s,%zu,%zu,%.17g,%.17g\n", a.group_id.c_str(), a.group_size, a.horizon,
                  a.nrmse, a.step_rmse_norm);
    out += buf;
  }
  return out;
}

inline std::string anomalies_csv(const std::vector<Anomaly>& anomalies) {
  std::string out = "appliance_id,reason,score,detail\n";
  char buf[64];
  for (const auto& a : anomalies) {
    std::snprintf(buf, sizeof buf, "%.17g", a.score);
    out += a.appliance_id + "," + to_string(a.reason) + "," + buf + ",\"" + a.detail + "\"\n";
  }
  return out;
}

inline nlohmann::json report_json(const EvaluationReport& r) {
  using nlohmann::json;
  json per = json::array(), agg = json::array(), anom = json::array();
  for (const auto& s : r.per_appliance)
    per.push_back({{"appliance_id", s.appliance_id}, {"horizon", s.horizon}, {"nrmse", s.nrmse},
                   {"step_rmse_norm", s.step_rmse_norm}});
  for (const auto& a : r.aggregates)
    agg.push_back({{"group_id", a.group_id}, {"group_size", a.group_size}, {"horizon", a.horizon},
                   {"nrmse", a.nrmse}, {"step_rmse_norm", a.step_rmse_norm}});
  for (const auto& a : r.anomalies)
    anom.push_back({{"appliance_id", a.appliance_id}, {"score", a.score}, {"reason", to_string(a.reason)},
                    {"detail", a.detail}});
  return {{"per_appliance", per}, {"aggregates", agg}, {"anomalies", anom}, {"warnings", r.warnings}};
}

/// Plot data: mean aggregate NRMSE per (group size, horizon).
inline std::string curves_csv(const EvaluationReport& r) {
  std::vector<std::pair<std::size_t, std::size_t>> keys;
  for (const auto& a : r.aggregates) keys.emplace_back(a.group_size, a.horizon);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::string out = "group_size,horizon,mean_nrmse\n";
  char buf[128];
  for (const auto& [N, H] : keys) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", N, H, r.mean_aggregate(N, H));
    out += buf;
  }
  return out;
}

}  // namespace chsmm

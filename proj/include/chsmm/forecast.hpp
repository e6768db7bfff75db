#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "chsmm/error.hpp"
#include "chsmm/ingest.hpp"
#include "chsmm/model.hpp"
#include "chsmm/state_abstraction.hpp"

namespace chsmm {

/// Where the appliance is at forecast origin t, plus encoded covariate
/// predictions for steps t+1..t+H (row h-1 holds step t+h).
struct ForecastContext {
  std::size_t x_prev = 0;
  std::size_t d_prev = 1;
  std::size_t x_curr = 0;
  std::size_t elapsed = 1;  // steps already spent in x_curr, including t
  std::size_t t = 0;
  std::vector<double> z_current;  // epoch covariates at the start of the current epoch
  std::vector<std::vector<double>> z_hat;
  std::vector<std::vector<double>> w_hat;
};

struct ChainEntry {
  std::size_t state = 0;
  std::size_t duration = 0;
  long long start = 1;  // offset from t of the epoch's first step
  friend bool operator==(const ChainEntry&, const ChainEntry&) = default;
};

struct ForecastResult {
  std::vector<double> power_hat;  // exactly H values, step t+1 first
  std::vector<ChainEntry> chain;  // epochs overlapping [t+1, t+H]
  bool truncated_last = false;    // last chain entry extends past t+H
  bool elapsed_exceeded = false;  // elapsed > d_max; current epoch ended at t
};

struct RemainingDuration {
  std::size_t duration = 1;
  bool truncated = false;
};

namespace detail {

/// Log scores this close count as tied; classes the training data never
/// reached end up equal up to rounding.
inline constexpr double tie_tolerance = 1e-9;

/// Index of the largest log score at or after `from`; ties go to the smallest index.
inline std::size_t argmax(std::span<const double> v, std::size_t from = 0) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = from; i < v.size(); ++i) best = std::max(best, v[i]);
  for (std::size_t i = from; i < v.size(); ++i)
    if (v[i] >= best - tie_tolerance) return i;
  return from;
}

inline std::span<const double> row_or_empty(const std::vector<std::vector<double>>& rows, std::size_t i) {
  return rows.empty() ? std::span<const double>{} : std::span<const double>(rows[i]);
}

}  // namespace detail

/// Most likely total duration of the current epoch subject to d >= elapsed.
inline RemainingDuration predict_remaining_duration(const ChsmModel& m, const ForecastContext& ctx) {
  require(ctx.elapsed >= 1, "elapsed must be >= 1");
  if (ctx.elapsed > m.d_max) return {m.d_max, true};
  const auto p = duration_scores(m, ctx.x_prev, ctx.d_prev, ctx.x_curr, ctx.z_current);
  return {detail::argmax(p, ctx.elapsed - 1) + 1, false};
}

inline void validate_context(const ChsmModel& m, const ForecastContext& ctx, std::size_t H) {
  require(H >= 1, "horizon must be >= 1");
  require(ctx.elapsed >= 1, "elapsed must be >= 1");
  detail::check_state(m, ctx.x_prev);
  detail::check_state(m, ctx.x_curr);
  if (!m.z_spec().empty() && ctx.z_hat.size() < H)
    fail(ErrorKind::input, "epoch covariate predictions cover " + std::to_string(ctx.z_hat.size()) + " of " +
                               std::to_string(H) + " steps");
  if (!m.w_spec().empty() && ctx.w_hat.size() < H)
    fail(ErrorKind::input, "per-step covariate predictions cover " + std::to_string(ctx.w_hat.size()) + " of " +
                               std::to_string(H) + " steps");
}

/// Greedy most-likely chain: seed the current epoch's remaining duration,
/// then repeatedly take the argmax next state and argmax duration until the
/// horizon is covered; each step's forecast is the expected emission.
inline ForecastResult forecast(const ChsmModel& m, const ForecastContext& ctx, std::size_t H) {
  validate_context(m, ctx, H);
  ForecastResult r;
  const auto first = predict_remaining_duration(m, ctx);
  r.elapsed_exceeded = first.truncated;

  // tau: offset of the last step covered so far
  long long tau = first.truncated ? 0 : static_cast<long long>(first.duration) - static_cast<long long>(ctx.elapsed);
  if (tau > 0)
    r.chain.push_back({ctx.x_curr, first.duration, 1 - static_cast<long long>(ctx.elapsed)});
  std::size_t x = ctx.x_curr;
  std::size_t d = first.duration;
  const auto horizon = static_cast<long long>(H);
  while (tau < horizon) {
    const auto start = tau + 1;
    const auto z = detail::row_or_empty(ctx.z_hat, static_cast<std::size_t>(start - 1));
    const std::size_t x_next = detail::argmax(transition_scores(m, x, d, z));
    const std::size_t d_next = detail::argmax(duration_scores(m, x, d, x_next, z)) + 1;
    r.chain.push_back({x_next, d_next, start});
    tau += static_cast<long long>(d_next);
    x = x_next;
    d = d_next;
  }
  r.truncated_last = tau > horizon;

  r.power_hat.reserve(H);
  std::size_t k = 0;
  for (long long h = 1; h <= horizon; ++h) {
    while (r.chain[k].start + static_cast<long long>(r.chain[k].duration) <= h) ++k;
    r.power_hat.push_back(m.emission.mean(r.chain[k].state, detail::row_or_empty(ctx.w_hat, static_cast<std::size_t>(h - 1))));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Covariate predictions

enum class ExogPolicy { persistence, observed, from_file };

inline const char* to_string(ExogPolicy p) {
  switch (p) {
    case ExogPolicy::persistence: return "persistence";
    case ExogPolicy::observed: return "observed";
    case ExogPolicy::from_file: return "from-file";
  }
  return "?";
}

inline ExogPolicy parse_exog_policy(const std::string& s) {
  if (s == "persistence") return ExogPolicy::persistence;
  if (s == "observed") return ExogPolicy::observed;
  if (s == "from-file") return ExogPolicy::from_file;
  fail(ErrorKind::input, "unknown exogenous policy '" + s + "'");
}

struct ExogForecastOptions {
  ExogPolicy policy = ExogPolicy::persistence;
  const ExogTable* table = nullptr;  // required for from_file
  Seconds max_gap{2 * 3600};
  std::chrono::minutes utc_offset{0};
};

/// Raw covariate values for steps t+1..t+H. Persistence holds each column's
/// value at t and rolls hour-of-day forward; observed reads the series itself.
inline ExogFrame predict_exog_frame(const ExogSpec& spec, const PowerSeries& series, std::size_t t, std::size_t H,
                                    const ExogForecastOptions& opts) {
  require(t < series.size(), "forecast origin beyond the end of the series");
  ExogFrame out;
  std::vector<Timestamp> times(H);
  for (std::size_t h = 1; h <= H; ++h) times[h - 1] = series.time_at(t + h);
  for (const auto& f : spec.features) {
    auto& col = out[f.name];
    col.resize(H);
    if (f.source == ExogSource::hour_of_day) {
      for (std::size_t h = 0; h < H; ++h) col[h] = hour_fraction(times[h], opts.utc_offset);
      continue;
    }
    switch (opts.policy) {
      case ExogPolicy::persistence: {
        const auto it = series.exog.find(f.name);
        if (it == series.exog.end()) fail(ErrorKind::input, "exogenous feature '" + f.name + "' missing from data");
        std::fill(col.begin(), col.end(), it->second.at(t));
        break;
      }
      case ExogPolicy::observed: {
        const auto it = series.exog.find(f.name);
        if (it == series.exog.end()) fail(ErrorKind::input, "exogenous feature '" + f.name + "' missing from data");
        if (t + H >= it->second.size())
          fail(ErrorKind::input, "observed covariates end before t+" + std::to_string(H));
        for (std::size_t h = 0; h < H; ++h) col[h] = it->second[t + 1 + h];
        break;
      }
      case ExogPolicy::from_file: {
        if (opts.table == nullptr) fail(ErrorKind::input, "from-file policy needs a covariate forecast file");
        const auto it = opts.table->columns.find(f.source_column());
        if (it == opts.table->columns.end())
          fail(ErrorKind::input, "covariate forecast file lacks column '" + f.source_column() + "'");
        if (opts.table->times.empty() || opts.table->times.front() > times.front() ||
            opts.table->times.back() < times.back())
          fail(ErrorKind::input, "covariate forecast file does not cover " + format_timestamp(times.front()) +
                                     " to " + format_timestamp(times.back()));
        try {
          col = interpolate_column(opts.table->times, it->second, times, opts.max_gap, f.name);
        } catch (const Error& e) {
          fail(ErrorKind::input, e.what());
        }
        if (f.fahrenheit)
          for (auto& v : col) v = (v - 32.0) * 5.0 / 9.0;
        break;
      }
    }
  }
  return out;
}

struct ExogPrediction {
  std::vector<std::vector<double>> z_hat;
  std::vector<std::vector<double>> w_hat;
};

inline ExogPrediction forecast_exog_from_history(const ChsmModel& m, const PowerSeries& series, std::size_t t,
                                                 std::size_t H, const ExogForecastOptions& opts = {}) {
  ExogSpec spec = m.z_spec().merged_with(m.w_spec());
  const ExogFrame frame = predict_exog_frame(spec, series, t, H, opts);
  ExogPrediction p;
  if (!m.z_spec().empty())
    for (std::size_t h = 0; h < H; ++h) p.z_hat.push_back(encode_row(m.z_spec(), frame, h));
  if (!m.w_spec().empty())
    for (std::size_t h = 0; h < H; ++h) p.w_hat.push_back(encode_row(m.w_spec(), frame, h));
  return p;
}

/// Context at step t read from a causal segmentation of the same series.
/// When t lies in the first epoch, the previous generalized state is the most
/// frequent one under the initial distribution.
inline ForecastContext context_at(const ChsmModel& m, const EpochSequence& seq, std::size_t t) {
  require(t < seq.total_steps, "forecast origin beyond the end of the series");
  const std::size_t k = seq.epoch_at(t);
  const Epoch& cur = seq.epochs[k];
  ForecastContext ctx;
  ctx.t = t;
  ctx.x_curr = cur.state;
  ctx.elapsed = t - cur.start + 1;
  if (k > 0) {
    ctx.x_prev = seq.epochs[k - 1].state;
    ctx.d_prev = seq.epochs[k - 1].duration;
  } else {
    double best = -1.0;
    for (std::size_t x = 0; x < m.n_states(); ++x) {
      if (x == cur.state) continue;
      for (std::size_t d = 1; d <= m.d_max; ++d)
        if (m.initial.at(x, d) > best) {
          best = m.initial.at(x, d);
          ctx.x_prev = x;
          ctx.d_prev = d;
        }
    }
  }
  ctx.z_current = encode_z(m, seq.source->exog, cur.start);
  return ctx;
}

inline ForecastContext make_context(const ChsmModel& m, const EpochSequence& seq, std::size_t t, std::size_t H,
                                    const ExogForecastOptions& opts = {}) {
  ForecastContext ctx = context_at(m, seq, t);
  auto p = forecast_exog_from_history(m, *seq.source, t, H, opts);
  ctx.z_hat = std::move(p.z_hat);
  ctx.w_hat = std::move(p.w_hat);
  return ctx;
}

struct TailContext {
  ForecastContext ctx;
  Timestamp origin{};
  Seconds step{60};
};

/// Context at the last training step, for forecasting straight after the
/// training period without re-reading the data. Observed covariates are not
/// available here.
inline TailContext tail_context(const ChsmModel& m, std::size_t H, const ExogForecastOptions& opts = {}) {
  const TrainingTail& tail = m.meta.tail;
  if (!tail.valid) fail(ErrorKind::input, "model has no training tail; supply an input series");
  if (opts.policy == ExogPolicy::observed)
    fail(ErrorKind::input, "observed covariates need an input series");
  TailContext out;
  out.origin = Timestamp{Seconds{tail.last_time}};
  out.step = Seconds{tail.step_seconds};
  PowerSeries last;
  last.appliance_id = m.meta.appliance_id;
  last.start = out.origin;
  last.step = out.step;
  last.power = {0.0};
  for (const auto& [name, v] : tail.last_exog) last.exog[name] = {v};
  ExogFrame epoch_frame;
  for (const auto& [name, v] : tail.epoch_exog) epoch_frame[name] = {v};

  ForecastContext& ctx = out.ctx;
  ctx.x_prev = tail.x_prev;
  ctx.d_prev = tail.d_prev;
  ctx.x_curr = tail.x_curr;
  ctx.elapsed = tail.elapsed;
  ctx.t = 0;
  ctx.z_current = encode_z(m, epoch_frame, 0);
  auto p = forecast_exog_from_history(m, last, 0, H, opts);
  ctx.z_hat = std::move(p.z_hat);
  ctx.w_hat = std::move(p.w_hat);
  return out;
}

}  // namespace chsmm

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chsmm/error.hpp"
#include "chsmm/ingest.hpp"
#include "chsmm/model.hpp"
#include "chsmm/rng.hpp"
#include "chsmm/state_abstraction.hpp"

namespace chsmm {

// ---------------------------------------------------------------------------
// Synthetic weather

/// Daily sinusoid peaking at peak_hour, plus a day-level offset and AR(1) noise.
struct TemperatureProfile {
  double mean_c = 28.0;
  double amplitude_c = 8.0;
  double peak_hour = 15.0;
  double daily_sd = 2.0;  // sd of the per-day offset
  double noise_sd = 0.5;
  double noise_corr = 0.98;  // lag-1 correlation of the step noise
};

inline std::vector<double> synthetic_temperature(Timestamp start, Seconds step, std::size_t steps,
                                                 const TemperatureProfile& p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(steps);
  const double innov = p.noise_sd * std::sqrt(std::max(0.0, 1.0 - p.noise_corr * p.noise_corr));
  double noise = p.noise_sd * rng.normal();
  // per-day offsets, interpolated linearly between day midpoints to stay smooth
  const auto day_of = [&](std::size_t i) {
    return static_cast<double>((start + step * static_cast<long long>(i)).time_since_epoch().count()) / 86400.0;
  };
  const double first_day = std::floor(day_of(0));
  const std::size_t n_days = static_cast<std::size_t>(std::floor(day_of(steps ? steps - 1 : 0)) - first_day) + 3;
  std::vector<double> offsets(n_days);
  for (auto& o : offsets) o = p.daily_sd * rng.normal();
  for (std::size_t i = 0; i < steps; ++i) {
    const double day = day_of(i);
    const double hour = (day - std::floor(day)) * 24.0;
    const double pos = day - first_day - 0.5;  // offset k sits at the middle of day k
    const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(pos)));
    const double frac = std::clamp(pos - static_cast<double>(k), 0.0, 1.0);
    const double offset = offsets[k] + frac * (offsets[std::min(k + 1, n_days - 1)] - offsets[k]);
    out[i] = p.mean_c + p.amplitude_c * std::cos(2.0 * std::numbers::pi * (hour - p.peak_hour) / 24.0) + offset + noise;
    noise = p.noise_corr * noise + innov * rng.normal();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

struct SimConfig {
  ChsmModel model;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  Timestamp start{};
  Seconds step{60};
  std::optional<ExogFrame> exog;  // supplied covariates (at least `steps` rows); generated when absent
  TemperatureProfile temperature;
  bool emission_noise = true;
  std::string appliance_id = "sim";
};

struct SampledTrace {
  PowerSeries series;
  std::vector<Epoch> chain;  // true generalized states; the last is right-censored when cut at T
};

/// Covariates for every feature the model reads. Column-sourced features get
/// the synthetic temperature; hour-of-day is derived from the timestamps.
inline ExogFrame simulated_exog(const ExogSpec& spec, Timestamp start, Seconds step, std::size_t steps,
                                const TemperatureProfile& temp, std::uint64_t seed) {
  ExogFrame frame;
  std::optional<std::vector<double>> t;
  for (const auto& f : spec.features) {
    if (f.source == ExogSource::hour_of_day) {
      auto& col = frame[f.name];
      col.resize(steps);
      for (std::size_t i = 0; i < steps; ++i) col[i] = hour_fraction(start + step * static_cast<long long>(i));
    } else {
      if (!t) t = synthetic_temperature(start, step, steps, temp, seed);
      frame[f.name] = *t;
    }
  }
  return frame;
}

/// Draws the generalized-state chain: (x1, d1) from the initial distribution,
/// then each next state and duration from the model's conditional
/// distributions, until T steps are covered. The final epoch is cut at T.
inline std::vector<Epoch> sample_chain(const ChsmModel& m, const ExogFrame& exog, std::size_t steps, Rng& rng) {
  std::vector<Epoch> chain;
  if (steps == 0) return chain;
  const std::size_t first = rng.categorical(m.initial.probs);
  Epoch e;
  e.state = first / m.d_max;
  e.duration = first % m.d_max + 1;
  e.start = 0;
  if (m.n_states() == 1) e.duration = steps;
  chain.push_back(e);
  std::size_t covered = e.duration;
  while (covered < steps) {
    const Epoch& prev = chain.back();
    const auto z = encode_z(m, exog, covered);
    const auto ps = transition_proba(m, prev.state, prev.duration, z);
    Epoch next;
    next.state = rng.categorical(ps);
    const auto pd = duration_proba(m, prev.state, prev.duration, next.state, z);
    next.duration = rng.categorical(pd) + 1;
    next.start = covered;
    covered += next.duration;
    chain.push_back(next);
  }
  if (covered > steps) {
    chain.back().duration -= covered - steps;
    chain.back().right_censored = true;
  }
  return chain;
}

/// Per-step power from the Gaussian emission, clamped at 0 W.
inline std::vector<double> render_chain(const ChsmModel& m, std::span<const Epoch> chain, const ExogFrame& exog,
                                        std::size_t steps, Rng& rng, bool noise = true) {
  std::vector<double> power(steps);
  for (const auto& e : chain)
    for (std::size_t t = e.start; t < e.end() && t < steps; ++t) {
      double y = emission_mean(m, e.state, encode_w(m, exog, t));
      if (noise) y += m.emission.sigma[e.state] * rng.normal();
      power[t] = std::max(0.0, y);
    }
  return power;
}

inline SampledTrace assemble_trace(const SimConfig& cfg, std::vector<Epoch> chain, const ExogFrame& exog) {
  SampledTrace out;
  Rng rng(derive_seed(cfg.seed, 2));
  out.series.appliance_id = cfg.appliance_id;
  out.series.start = cfg.start;
  out.series.step = cfg.step;
  out.series.power = render_chain(cfg.model, chain, exog, cfg.steps, rng, cfg.emission_noise);
  for (const auto& [name, col] : exog)
    out.series.exog[name] = std::vector<double>(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(cfg.steps));
  out.chain = std::move(chain);
  return out;
}

inline ExogFrame sim_exog(const SimConfig& cfg) {
  if (cfg.exog) {
    for (const auto& [name, col] : *cfg.exog)
      require(col.size() >= cfg.steps, "supplied covariate '" + name + "' shorter than the trace");
    return *cfg.exog;
  }
  const ExogSpec spec = cfg.model.z_spec().merged_with(cfg.model.w_spec());
  return simulated_exog(spec, cfg.start, cfg.step, cfg.steps, cfg.temperature, derive_seed(cfg.seed, 0));
}

inline SampledTrace sample_trace(const SimConfig& cfg) {
  require(cfg.steps >= 1, "trace length must be >= 1");
  const ExogFrame exog = sim_exog(cfg);
  Rng rng(derive_seed(cfg.seed, 1));
  auto chain = sample_chain(cfg.model, exog, cfg.steps, rng);
  return assemble_trace(cfg, std::move(chain), exog);
}

// ---------------------------------------------------------------------------
// Hand-specified ground truth

/// Model with the right shapes and neutral parameters: zero MNLR coefficients,
/// identity feature scaling, phi = 0, sigma = 1, uniform initial distribution.
inline ChsmModel model_skeleton(std::vector<double> centroids, std::size_t d_max, Variant variant = {},
                                ExogSpec z_spec = {}, ExogSpec w_spec = {}) {
  require(d_max >= 1, "d_max must be >= 1");
  ChsmModel m;
  m.states.centroids = std::move(centroids);
  m.states.validate();
  const std::size_t N = m.n_states();
  m.d_max = d_max;
  m.variant = variant;
  auto& fe = m.features;
  fe.n_states = N;
  fe.state_encoding = variant.state_encoding;
  fe.pooling = variant.pooling;
  fe.d_mean = 0.0;
  fe.d_scale = 1.0;
  fe.z_spec = std::move(z_spec);
  const std::size_t zd = fe.z_spec.encoded_dim();
  fe.z_mean.assign(zd, 0.0);
  fe.z_scale.assign(zd, 1.0);
  fe.z_keep.assign(zd, true);
  const std::size_t n_models = variant.pooling == Pooling::pooled ? 1 : N;
  for (std::size_t i = 0; i < n_models; ++i) {
    m.state_mnlr.push_back(MnlrModel::zeros(N, fe.transition_dim()));
    auto dm = MnlrModel::zeros(d_max, fe.duration_dim());
    for (std::size_t c = 0; c < d_max; ++c) dm.class_labels[c] = c + 1;
    m.dur_mnlr.push_back(std::move(dm));
  }
  m.emission.gamma = m.states.centroids;
  m.emission.w_spec = std::move(w_spec);
  const std::size_t wd = m.emission.w_spec.encoded_dim();
  m.emission.phi.assign(N, std::vector<double>(wd, 0.0));
  m.emission.w_center.assign(N, std::vector<double>(wd, 0.0));
  m.emission.sigma.assign(N, 1.0);
  m.initial.n_states = N;
  m.initial.d_max = d_max;
  m.initial.probs.assign(N * d_max, 1.0 / static_cast<double>(N * d_max));
  m.max_duration_per_state.assign(N, d_max);
  return m;
}

/// Sets class intercepts to log(p); p = 0 becomes a large negative score.
inline void set_log_probs(MnlrModel& m, std::span<const double> p) {
  require(p.size() == m.n_classes, "probability vector length must equal the class count");
  const auto F = static_cast<Eigen::Index>(m.n_features);
  for (std::size_t c = 0; c < p.size(); ++c)
    m.coeffs(static_cast<Eigen::Index>(c), F) = p[c] > 0.0 ? std::log(p[c]) : -50.0;
}

/// Adds coef[c] to feature column j of every class row.
inline void add_feature_coeffs(MnlrModel& m, std::size_t j, std::span<const double> coef) {
  require(coef.size() == m.n_classes && j < m.n_features, "coefficient shape mismatch");
  for (std::size_t c = 0; c < coef.size(); ++c)
    m.coeffs(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) += coef[c];
}

/// Discretized normal pmf over 1..d_max restricted to [lo, hi].
inline std::vector<double> normal_pmf(std::size_t d_max, double mean, double sd, std::size_t lo = 1,
                                      std::size_t hi = 0) {
  if (hi == 0) hi = d_max;
  std::vector<double> p(d_max, 0.0);
  double total = 0.0;
  for (std::size_t d = lo; d <= hi; ++d) {
    const double u = (static_cast<double>(d) - mean) / sd;
    total += p[d - 1] = std::exp(-0.5 * u * u);
  }
  for (auto& v : p) v /= total;
  return p;
}

/// Duration scores quadratic in d whose mean shifts linearly with a covariate:
/// mean(z) = mean0 + slope * z at fixed sd.
inline void add_duration_mean_shift(MnlrModel& m, std::size_t z_index, double slope, double sd) {
  std::vector<double> coef(m.n_classes);
  for (std::size_t c = 0; c < coef.size(); ++c) coef[c] = static_cast<double>(c + 1) * slope / (sd * sd);
  add_feature_coeffs(m, z_index, coef);
}

// ---------------------------------------------------------------------------
// Fixtures

enum class FixtureKind { fridge4, ac2, pump2, ev2 };

inline const char* to_string(FixtureKind k) {
  switch (k) {
    case FixtureKind::fridge4: return "fridge4";
    case FixtureKind::ac2: return "ac2";
    case FixtureKind::pump2: return "pump2";
    case FixtureKind::ev2: return "ev2";
  }
  return "?";
}

inline FixtureKind parse_fixture_kind(const std::string& s) {
  if (s == "fridge4") return FixtureKind::fridge4;
  if (s == "ac2") return FixtureKind::ac2;
  if (s == "pump2") return FixtureKind::pump2;
  if (s == "ev2") return FixtureKind::ev2;
  fail(ErrorKind::input, "unknown fixture kind '" + s + "' (expected fridge4, ac2, pump2 or ev2)");
}

inline ExogFeature temperature_feature() { return {"temp_c", ExogSource::column, ExogEncoding::raw, "", false}; }
inline ExogFeature hour_feature() { return {"hour", ExogSource::hour_of_day, ExogEncoding::sin_cos, "", false}; }

/// Parameters of one synthetic unit. Unit 0 of each kind is the nominal unit;
/// other seeds jitter power levels and duration scales.
struct FixtureOptions {
  bool jitter = false;
  double anomaly_gap_days = 0.0;  // ev2: stretch one OFF epoch to this length
  double anomaly_at = 0.25;       // fraction of the trace where the stretched epoch starts
  Timestamp start = std::chrono::sys_days{std::chrono::year{2024} / 7 / 1};
  Seconds step{60};
  std::optional<ExogFrame> exog;  // shared weather for fleets
  TemperatureProfile temperature;
  bool emission_noise = true;
};

namespace detail {

// sin/cos coefficients for a daily cosine peaking at peak_hour
inline std::pair<double, double> daily_cosine(double amplitude, double peak_hour) {
  const double a = 2.0 * std::numbers::pi * peak_hour / 24.0;
  return {amplitude * std::sin(a), amplitude * std::cos(a)};
}

}  // namespace detail

/// Ground-truth model of a fixture kind. All fixtures use state-specific
/// transition and duration models.
inline ChsmModel fixture_model(FixtureKind kind, std::uint64_t unit_seed = 0, bool jitter = false) {
  Rng rng(derive_seed(unit_seed, 7));
  const auto jit = [&](double lo, double hi, double nominal) { return jitter ? rng.uniform(lo, hi) : nominal; };
  Variant v;
  v.pooling = Pooling::state_specific;
  switch (kind) {
    case FixtureKind::fridge4: {
      ExogSpec z{{hour_feature()}};
      const double scale = jit(0.85, 1.15, 1.0);
      auto m = model_skeleton({5.0, 130.0 * scale, 300.0 * scale, 500.0 * scale}, 60, v, z);
      const double next[4][4] = {{0, 0.92, 0.05, 0.03}, {0.95, 0, 0.03, 0.02}, {0.5, 0.5, 0, 0}, {0.9, 0.1, 0, 0}};
      for (std::size_t s = 0; s < 4; ++s) set_log_probs(m.state_mnlr[s], next[s]);
      const double mean[4] = {jit(20, 30, 25), jit(14, 22, 18), 4, 20};
      const double sd[4] = {5, 4, 1.5, 3};
      for (std::size_t s = 0; s < 4; ++s) set_log_probs(m.dur_mnlr[s], normal_pmf(60, mean[s], sd[s]));
      // OFF runs about 4 steps longer around 03:00
      const auto [cs, cc] = detail::daily_cosine(4.0, 3.0);
      const std::size_t zi = m.features.duration_z_index();
      add_duration_mean_shift(m.dur_mnlr[0], zi, cs, sd[0]);
      add_duration_mean_shift(m.dur_mnlr[0], zi + 1, cc, sd[0]);
      m.emission.sigma = {2.0, 8.0, 10.0, 12.0};
      return m;
    }
    case FixtureKind::ac2: {
      ExogSpec z{{temperature_feature(), hour_feature()}};
      ExogSpec w{{temperature_feature()}};
      const std::size_t d_max = 120;
      auto m = model_skeleton({10.0, jit(1200, 2200, 1500)}, d_max, v, z, w);
      const std::size_t zi = m.features.duration_z_index();  // temp, then hour sin, cos
      // OFF: normal around 76 - 2*temp steps (20 at 28 C), shorter in the heat
      {
        const double sd = 6.0, m0 = jit(70, 82, 76), slope = -2.0;
        auto& dm = m.dur_mnlr[0];
        const auto F = static_cast<Eigen::Index>(dm.n_features);
        for (std::size_t d = 1; d <= d_max; ++d)
          dm.coeffs(static_cast<Eigen::Index>(d - 1), F) =
              -0.5 * static_cast<double>(d * d) / (sd * sd) + static_cast<double>(d) * m0 / (sd * sd);
        add_duration_mean_shift(dm, zi, slope, sd);
      }
      // ON: short cycles around 10 steps, or long runs (31..120) whose odds
      // rise by e per degree above the unit's threshold temperature
      {
        const double short_mean = jit(8, 14, 10), threshold = jit(31, 35, 33), beta = 1.0;
        const auto s = normal_pmf(d_max, short_mean, 3.0, 1, 30);
        const auto l = normal_pmf(d_max, 60.0, 12.0, 31, d_max);
        auto& dm = m.dur_mnlr[1];
        const auto F = static_cast<Eigen::Index>(dm.n_features);
        std::vector<double> temp_coef(d_max, 0.0);
        for (std::size_t d = 1; d <= d_max; ++d) {
          const bool long_run = d > 30;
          const double p = long_run ? l[d - 1] : s[d - 1];
          dm.coeffs(static_cast<Eigen::Index>(d - 1), F) = std::log(p) - (long_run ? beta * threshold : 0.0);
          temp_coef[d - 1] = long_run ? beta : 0.0;
        }
        add_feature_coeffs(dm, zi, temp_coef);
      }
      m.emission.phi[1] = {jit(20, 40, 30)};
      m.emission.w_center[1] = {25.0};
      m.emission.sigma = {3.0, 40.0};
      return m;
    }
    case FixtureKind::pump2: {
      ExogSpec z{{hour_feature()}};
      auto m = model_skeleton({2.0, jit(600, 900, 750)}, 120, v, z);
      const std::size_t zi = m.features.duration_z_index();
      const double off_sd = 10.0, on_sd = 3.0;
      const auto off = normal_pmf(120, jit(40, 50, 45), off_sd);
      const auto on = normal_pmf(120, jit(12, 18, 15), on_sd);
      set_log_probs(m.dur_mnlr[0], off);
      set_log_probs(m.dur_mnlr[1], on);
      // OFF intervals about 30 steps longer around 03:00
      const auto [cs, cc] = detail::daily_cosine(30.0, 3.0);
      add_duration_mean_shift(m.dur_mnlr[0], zi, cs, off_sd);
      add_duration_mean_shift(m.dur_mnlr[0], zi + 1, cc, off_sd);
      m.emission.sigma = {1.0, 15.0};
      return m;
    }
    case FixtureKind::ev2: {
      ExogSpec z{{hour_feature()}};
      const std::size_t d_max = 1440;
      auto m = model_skeleton({1.0, 3300.0}, d_max, v, z);
      set_log_probs(m.dur_mnlr[0], normal_pmf(d_max, jit(1260, 1320, 1290), 30.0));
      set_log_probs(m.dur_mnlr[1], normal_pmf(d_max, jit(120, 180, 150), 40.0, 1, 400));
      m.emission.sigma = {0.5, 30.0};
      return m;
    }
  }
  fail(ErrorKind::input, "unknown fixture kind");
}

/// Stretches the first OFF (state 0) epoch starting at or after `from` to
/// `length` steps and shifts the rest of the chain, re-cutting at `steps`.
inline std::vector<Epoch> stretch_off_epoch(std::vector<Epoch> chain, std::size_t from, std::size_t length,
                                            std::size_t steps) {
  std::vector<Epoch> out;
  bool done = false;
  std::size_t t = 0;
  for (auto e : chain) {
    if (t >= steps) break;
    e.start = t;
    e.right_censored = false;
    if (!done && e.state == 0 && e.start >= from) {
      e.duration = length;
      done = true;
    }
    if (t + e.duration >= steps) {
      e.right_censored = t + e.duration > steps;
      e.duration = steps - t;
    }
    t += e.duration;
    out.push_back(e);
  }
  return out;
}

inline SampledTrace sample_fixture(FixtureKind kind, std::uint64_t seed, std::size_t steps,
                                   const FixtureOptions& opts = {}) {
  SimConfig cfg;
  cfg.model = fixture_model(kind, seed, opts.jitter);
  cfg.steps = steps;
  cfg.seed = seed;
  cfg.start = opts.start;
  cfg.step = opts.step;
  cfg.exog = opts.exog;
  cfg.temperature = opts.temperature;
  cfg.emission_noise = opts.emission_noise;
  cfg.appliance_id = std::string(to_string(kind)) + "-" + std::to_string(seed);
  require(steps >= 1, "trace length must be >= 1");
  const ExogFrame exog = sim_exog(cfg);
  Rng rng(derive_seed(cfg.seed, 1));
  auto chain = sample_chain(cfg.model, exog, steps, rng);
  if (opts.anomaly_gap_days > 0.0) {
    require(kind == FixtureKind::ev2, "the anomaly gap applies to the ev2 fixture");
    const auto gap = static_cast<std::size_t>(std::llround(opts.anomaly_gap_days * 86400.0 / static_cast<double>(opts.step.count())));
    const auto from = static_cast<std::size_t>(opts.anomaly_at * static_cast<double>(steps));
    chain = stretch_off_epoch(std::move(chain), from, gap, steps);
  }
  return assemble_trace(cfg, std::move(chain), exog);
}

inline PowerSeries make_fixture(FixtureKind kind, std::uint64_t seed, std::size_t steps,
                                const FixtureOptions& opts = {}) {
  return sample_fixture(kind, seed, steps, opts).series;
}

/// Fleet of jittered units sharing one weather trace.
inline std::vector<PowerSeries> make_fleet(FixtureKind kind, std::size_t n_units, std::uint64_t seed, std::size_t steps,
                                           FixtureOptions opts = {}) {
  opts.jitter = true;
  if (!opts.exog) {
    const auto m = fixture_model(kind);
    opts.exog = simulated_exog(m.z_spec().merged_with(m.w_spec()), opts.start, opts.step, steps, opts.temperature,
                               derive_seed(seed, 100));
  }
  std::vector<PowerSeries> fleet;
  for (std::size_t i = 0; i < n_units; ++i) fleet.push_back(make_fixture(kind, derive_seed(seed, 1000 + i), steps, opts));
  return fleet;
}

/// Splits a series at step n into [0, n) and [n, size).
inline std::pair<PowerSeries, PowerSeries> split_series(const PowerSeries& s, std::size_t n) {
  require(n >= 1 && n < s.size(), "split point must fall inside the series");
  PowerSeries a = s, b = s;
  a.power.resize(n);
  b.power.erase(b.power.begin(), b.power.begin() + static_cast<std::ptrdiff_t>(n));
  b.start = s.time_at(n);
  for (auto& [name, col] : a.exog) col.resize(n);
  for (auto& [name, col] : b.exog) col.erase(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(n));
  return {a, b};
}

}  // namespace chsmm

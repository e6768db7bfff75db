#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chsmm/error.hpp"
#include "chsmm/ingest.hpp"
#include "chsmm/mnlr.hpp"
#include "chsmm/state_abstraction.hpp"

namespace chsmm {

enum class Pooling { pooled, state_specific };
enum class Conditioning { chsmm, hsmm_baseline };
enum class StateEncoding { one_hot, scalar };

struct Variant {
  Pooling pooling = Pooling::pooled;
  bool weighted = false;
  long long weight_a = 10;
  Conditioning conditioning = Conditioning::chsmm;
  StateEncoding state_encoding = StateEncoding::one_hot;
  bool shared_sigma = false;
  friend bool operator==(const Variant&, const Variant&) = default;
};

/// Builds MNLR feature vectors. States are one-hot (or a scalar index), the
/// previous duration is z-scored, and the encoded epoch covariates are
/// z-scored with degenerate columns dropped.
struct FeatureEncoder {
  std::size_t n_states = 0;
  StateEncoding state_encoding = StateEncoding::one_hot;
  Pooling pooling = Pooling::pooled;
  double d_mean = 0.0;
  double d_scale = 1.0;
  ExogSpec z_spec;
  std::vector<double> z_mean;   // per encoded z column
  std::vector<double> z_scale;
  std::vector<bool> z_keep;

  [[nodiscard]] std::size_t state_dim() const { return state_encoding == StateEncoding::one_hot ? n_states : 1; }
  [[nodiscard]] std::size_t z_dim() const {
    return static_cast<std::size_t>(std::count(z_keep.begin(), z_keep.end(), true));
  }
  [[nodiscard]] std::size_t transition_dim() const {
    return (pooling == Pooling::pooled ? state_dim() : 0) + 1 + z_dim();
  }
  [[nodiscard]] std::size_t duration_dim() const {
    return state_dim() * (pooling == Pooling::pooled ? 2 : 1) + 1 + z_dim();
  }

  // column offsets inside the two feature vectors
  [[nodiscard]] std::size_t transition_d_index() const { return pooling == Pooling::pooled ? state_dim() : 0; }
  [[nodiscard]] std::size_t transition_z_index() const { return transition_d_index() + 1; }
  [[nodiscard]] std::size_t duration_d_index() const { return state_dim(); }
  [[nodiscard]] std::size_t duration_next_index() const { return state_dim() + 1; }
  [[nodiscard]] std::size_t duration_z_index() const { return duration_dim() - z_dim(); }

  void push_state(std::size_t x, std::vector<double>& out) const {
    if (state_encoding == StateEncoding::one_hot) {
      for (std::size_t i = 0; i < n_states; ++i) out.push_back(i == x ? 1.0 : 0.0);
    } else {
      out.push_back(static_cast<double>(x));
    }
  }
  void push_duration(std::size_t d, std::vector<double>& out) const {
    out.push_back((static_cast<double>(d) - d_mean) / d_scale);
  }
  void push_z(std::span<const double> z, std::vector<double>& out) const {
    if (z_keep.empty()) return;
    if (z.size() != z_keep.size())
      fail(ErrorKind::input, "epoch covariate length " + std::to_string(z.size()) + " != " +
                                 std::to_string(z_keep.size()));
    for (std::size_t j = 0; j < z.size(); ++j)
      if (z_keep[j]) out.push_back((z[j] - z_mean[j]) / z_scale[j]);
  }

  [[nodiscard]] std::vector<double> transition_features(std::size_t x_prev, std::size_t d_prev,
                                                        std::span<const double> z) const {
    std::vector<double> f;
    f.reserve(transition_dim());
    if (pooling == Pooling::pooled) push_state(x_prev, f);
    push_duration(d_prev, f);
    push_z(z, f);
    return f;
  }

  [[nodiscard]] std::vector<double> duration_features(std::size_t x_prev, std::size_t d_prev, std::size_t x_next,
                                                      std::span<const double> z) const {
    std::vector<double> f;
    f.reserve(duration_dim());
    push_state(x_prev, f);
    push_duration(d_prev, f);
    if (pooling == Pooling::pooled) push_state(x_next, f);
    push_z(z, f);
    return f;
  }
  friend bool operator==(const FeatureEncoder&, const FeatureEncoder&) = default;
};

/// Gaussian emission: mean gamma[x] + phi[x] . (w - w_center[x]), sd sigma[x].
struct EmissionModel {
  std::vector<double> gamma;
  std::vector<std::vector<double>> phi;       // per state, over encoded w
  std::vector<std::vector<double>> w_center;  // per state, training mean of w
  std::vector<double> sigma;
  ExogSpec w_spec;

  [[nodiscard]] double mean(std::size_t x, std::span<const double> w) const {
    double m = gamma.at(x);
    const auto& ph = phi.at(x);
    if (ph.empty()) return m;
    if (w.size() != ph.size())
      fail(ErrorKind::input, "per-step covariate length " + std::to_string(w.size()) + " != " +
                                 std::to_string(ph.size()));
    const auto& c = w_center.at(x);
    for (std::size_t j = 0; j < ph.size(); ++j) m += ph[j] * (w[j] - c[j]);
    return m;
  }
  friend bool operator==(const EmissionModel&, const EmissionModel&) = default;
};

/// probs[x * d_max + (d - 1)] = P(first epoch is state x lasting d steps).
struct InitialDistribution {
  std::size_t n_states = 0;
  std::size_t d_max = 0;
  std::vector<double> probs;

  [[nodiscard]] double at(std::size_t x, std::size_t d) const { return probs.at(x * d_max + (d - 1)); }
  friend bool operator==(const InitialDistribution&, const InitialDistribution&) = default;
};

/// State of the appliance at the end of the training data, so a forecast can
/// start there without re-reading the series.
struct TrainingTail {
  bool valid = false;
  std::size_t x_prev = 0, d_prev = 1, x_curr = 0, elapsed = 1;
  std::int64_t last_time = 0;          // epoch seconds of the final step
  std::int64_t step_seconds = 60;
  std::vector<std::pair<std::string, double>> last_exog;  // raw covariates at the final step
  std::vector<std::pair<std::string, double>> epoch_exog;  // raw covariates at the current epoch start
  friend bool operator==(const TrainingTail&, const TrainingTail&) = default;
};

struct TrainingMeta {
  std::string appliance_id;
  std::string period_start, period_end;
  std::uint64_t seed = 0;
  std::size_t n_transition_samples = 0;
  std::size_t n_duration_samples = 0;
  std::vector<std::string> warnings;
  TrainingTail tail;
  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct ChsmModel {
  StateSpace states;
  std::size_t d_max = 1;
  Variant variant;
  FeatureEncoder features;
  std::vector<MnlrModel> state_mnlr;  // one (pooled) or one per origin state
  std::vector<MnlrModel> dur_mnlr;    // one (pooled) or one per destination state
  EmissionModel emission;
  InitialDistribution initial;
  std::vector<std::size_t> max_duration_per_state;  // observed in training, uncapped
  TrainingMeta meta;

  [[nodiscard]] std::size_t n_states() const { return states.size(); }
  [[nodiscard]] const ExogSpec& z_spec() const { return features.z_spec; }
  [[nodiscard]] const ExogSpec& w_spec() const { return emission.w_spec; }

  [[nodiscard]] const MnlrModel& transition_mnlr(std::size_t x_prev) const {
    return variant.pooling == Pooling::pooled ? state_mnlr.at(0) : state_mnlr.at(x_prev);
  }
  [[nodiscard]] const MnlrModel& duration_mnlr(std::size_t x_next) const {
    return variant.pooling == Pooling::pooled ? dur_mnlr.at(0) : dur_mnlr.at(x_next);
  }
  [[nodiscard]] std::size_t clamp_duration(std::size_t d) const { return std::clamp<std::size_t>(d, 1, d_max); }
  friend bool operator==(const ChsmModel&, const ChsmModel&) = default;
};

// ---------------------------------------------------------------------------
// Probabilities

namespace detail {

inline void check_state(const ChsmModel& m, std::size_t x) {
  if (x >= m.n_states())
    fail(ErrorKind::input, "state index " + std::to_string(x) + " out of range (" + std::to_string(m.n_states()) +
                               " states)");
}

}  // namespace detail

/// P(next state | previous generalized state, epoch covariates), with the
/// origin state excluded and the remainder renormalized.
inline std::vector<double> transition_proba(const ChsmModel& m, std::size_t x_prev, std::size_t d_prev,
                                            std::span<const double> z) {
  detail::check_state(m, x_prev);
  if (m.n_states() < 2) fail(ErrorKind::input, "a single-state model has no successor state");
  const auto f = m.features.transition_features(x_prev, m.clamp_duration(d_prev), z);
  auto p = m.transition_mnlr(x_prev).predict_proba(f);
  p[x_prev] = 0.0;
  double total = 0.0;
  for (double v : p) total += v;
  if (!(total > 0.0)) {
    // every other state underflowed; fall back to uniform over the successors
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = i == x_prev ? 0.0 : 1.0 / static_cast<double>(p.size() - 1);
    return p;
  }
  for (double& v : p) v /= total;
  return p;
}

/// P(duration d = 1..d_max | previous generalized state, next state, covariates);
/// element d-1 holds duration d.
inline std::vector<double> duration_proba(const ChsmModel& m, std::size_t x_prev, std::size_t d_prev,
                                          std::size_t x_next, std::span<const double> z) {
  detail::check_state(m, x_prev);
  detail::check_state(m, x_next);
  const auto f = m.features.duration_features(x_prev, m.clamp_duration(d_prev), x_next, z);
  return m.duration_mnlr(x_next).predict_proba(f);
}

/// Log-space scores behind transition_proba, origin state at -inf. Same
/// argmax as the probabilities but free of underflow far in the tails.
inline std::vector<double> transition_scores(const ChsmModel& m, std::size_t x_prev, std::size_t d_prev,
                                             std::span<const double> z) {
  detail::check_state(m, x_prev);
  if (m.n_states() < 2) fail(ErrorKind::input, "a single-state model has no successor state");
  auto s = m.transition_mnlr(x_prev).scores(m.features.transition_features(x_prev, m.clamp_duration(d_prev), z));
  s[x_prev] = -std::numeric_limits<double>::infinity();
  return s;
}

/// Log-space scores behind duration_proba.
inline std::vector<double> duration_scores(const ChsmModel& m, std::size_t x_prev, std::size_t d_prev,
                                           std::size_t x_next, std::span<const double> z) {
  detail::check_state(m, x_prev);
  detail::check_state(m, x_next);
  return m.duration_mnlr(x_next).scores(m.features.duration_features(x_prev, m.clamp_duration(d_prev), x_next, z));
}

/// Factorized generalized-state transition probability.
inline double generalized_transition_proba(const ChsmModel& m, std::size_t x_prev, std::size_t d_prev,
                                           std::size_t x_next, std::size_t d_next, std::span<const double> z) {
  detail::check_state(m, x_next);
  if (d_next < 1 || d_next > m.d_max) fail(ErrorKind::input, "duration out of range");
  return transition_proba(m, x_prev, d_prev, z)[x_next] * duration_proba(m, x_prev, d_prev, x_next, z)[d_next - 1];
}

inline double emission_mean(const ChsmModel& m, std::size_t x, std::span<const double> w) {
  detail::check_state(m, x);
  return m.emission.mean(x, w);
}

/// Encoded epoch covariates for row i of a frame (empty for the baseline).
inline std::vector<double> encode_z(const ChsmModel& m, const ExogFrame& frame, std::size_t i) {
  return m.z_spec().empty() ? std::vector<double>{} : encode_row(m.z_spec(), frame, i);
}

inline std::vector<double> encode_w(const ChsmModel& m, const ExogFrame& frame, std::size_t i) {
  return m.w_spec().empty() ? std::vector<double>{} : encode_row(m.w_spec(), frame, i);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t n_states = 2;
  std::optional<StateSpace> fixed_states;  // skips K-means when set
  std::uint64_t seed = 0;
  std::size_t debounce = 0;
  std::size_t d_cap = 720;
  Variant variant;
  ExogSpec z_spec;  // epoch covariates for transitions and durations
  ExogSpec w_spec;  // per-step covariates for the emission mean
  MnlrOptions mnlr;
  bool include_censored = false;
};

namespace detail {

struct EpochRef {
  const EpochSequence* seq;
  std::size_t k;
  [[nodiscard]] const Epoch& e() const { return seq->epochs[k]; }
};

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(v.size()));
}

inline std::vector<std::pair<std::string, double>> frame_row(const ExogFrame& frame, std::size_t i) {
  std::vector<std::pair<std::string, double>> row;
  for (const auto& [name, col] : frame) row.emplace_back(name, col.at(i));
  return row;
}

}  // namespace detail

/// Fits a CHSMM (or the HSMM baseline) on one or more gap-free segments.
inline ChsmModel train(std::span<const PowerSeries> segments, const TrainConfig& cfg) {
  if (segments.empty()) fail(ErrorKind::empty_input, "no training series");
  for (const auto& s : segments) s.validate();
  const bool baseline = cfg.variant.conditioning == Conditioning::hsmm_baseline;
  const ExogSpec z_spec = baseline ? ExogSpec{} : cfg.z_spec;
  const ExogSpec w_spec = baseline ? ExogSpec{} : cfg.w_spec;
  z_spec.validate();
  w_spec.validate();

  ChsmModel m;
  m.variant = cfg.variant;
  m.meta.appliance_id = segments.front().appliance_id;
  m.meta.seed = cfg.seed;
  m.meta.period_start = format_timestamp(segments.front().start);
  m.meta.period_end = format_timestamp(segments.back().time_at(segments.back().size() - 1));

  // states
  if (cfg.fixed_states) {
    cfg.fixed_states->validate();
    m.states = *cfg.fixed_states;
  } else {
    std::vector<double> all;
    for (const auto& s : segments) all.insert(all.end(), s.power.begin(), s.power.end());
    m.states = fit_kmeans_detailed(all, cfg.n_states, cfg.seed).states;
  }
  const std::size_t N = m.n_states();

  std::vector<EpochSequence> seqs;
  std::size_t n_epochs = 0;
  for (const auto& s : segments) {
    seqs.push_back(segment(s, m.states, cfg.debounce));
    n_epochs += seqs.back().epochs.size();
  }
  if (n_epochs < 2 || N < 2) fail(ErrorKind::insufficient_data, "training data yields fewer than 2 epochs");

  std::vector<Epoch> all_epochs;
  for (const auto& q : seqs) all_epochs.insert(all_epochs.end(), q.epochs.begin(), q.epochs.end());
  m.d_max = max_duration(all_epochs, cfg.d_cap);
  m.max_duration_per_state = max_duration_per_state(all_epochs, N);

  // epoch pairs (k-1, k) usable as training samples
  struct Pair {
    detail::EpochRef prev, cur;
  };
  const auto collect = [&](bool keep_censored) {
    std::vector<Pair> pairs;
    for (const auto& q : seqs)
      for (std::size_t k = 1; k < q.epochs.size(); ++k) {
        if (!keep_censored && q.epochs[k - 1].left_censored) continue;
        pairs.push_back({{&q, k - 1}, {&q, k}});
      }
    return pairs;
  };
  bool keep_censored = cfg.include_censored;
  auto pairs = collect(keep_censored);
  if (pairs.empty()) {
    keep_censored = true;
    pairs = collect(true);
    m.meta.warnings.push_back("too few complete epochs; censored epochs included in training samples");
  }

  // covariates and standardization
  FeatureEncoder& fe = m.features;
  fe.n_states = N;
  fe.state_encoding = cfg.variant.state_encoding;
  fe.pooling = cfg.variant.pooling;
  fe.z_spec = z_spec;
  std::vector<std::vector<double>> z_raw(pairs.size());
  std::vector<double> d_prev(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& cur = pairs[i].cur;
    z_raw[i] = z_spec.empty() ? std::vector<double>{} : encode_row(z_spec, cur.seq->source->exog, cur.e().start);
    d_prev[i] = static_cast<double>(m.clamp_duration(pairs[i].prev.e().duration));
  }
  {
    double sd = 0.0;
    detail::mean_std(d_prev, fe.d_mean, sd);
    fe.d_scale = sd > 0.0 ? sd : 1.0;
  }
  const std::size_t zd = z_spec.encoded_dim();
  fe.z_mean.assign(zd, 0.0);
  fe.z_scale.assign(zd, 1.0);
  fe.z_keep.assign(zd, true);
  for (std::size_t j = 0; j < zd; ++j) {
    std::vector<double> col(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) col[i] = z_raw[i][j];
    double mean = 0.0, sd = 0.0;
    detail::mean_std(col, mean, sd);
    fe.z_mean[j] = mean;
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      fe.z_scale[j] = sd;
    } else {
      fe.z_keep[j] = false;
      m.meta.warnings.push_back("epoch covariate column " + std::to_string(j) + " has zero variance; dropped");
    }
  }

  // samples
  std::vector<std::vector<WeightedSample>> trans(cfg.variant.pooling == Pooling::pooled ? 1 : N);
  std::vector<std::vector<WeightedSample>> durs(cfg.variant.pooling == Pooling::pooled ? 1 : N);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Epoch& prev = pairs[i].prev.e();
    const Epoch& cur = pairs[i].cur.e();
    const std::size_t dp = m.clamp_duration(prev.duration);
    const std::size_t dc = m.clamp_duration(cur.duration);
    const double weight =
        cfg.variant.weighted ? 1.0 + static_cast<double>(dc) / static_cast<double>(cfg.variant.weight_a) : 1.0;
    const std::size_t ti = cfg.variant.pooling == Pooling::pooled ? 0 : prev.state;
    trans[ti].push_back({fe.transition_features(prev.state, dp, z_raw[i]), cur.state, weight});
    ++m.meta.n_transition_samples;
    if (cur.right_censored && !keep_censored) continue;
    const std::size_t di = cfg.variant.pooling == Pooling::pooled ? 0 : cur.state;
    durs[di].push_back({fe.duration_features(prev.state, dp, cur.state, z_raw[i]), dc - 1, weight});
    ++m.meta.n_duration_samples;
  }
  if (cfg.variant.weighted) require(cfg.variant.weight_a >= 1, "weighting factor a must be >= 1");

  const auto fit_or_uniform = [&](const std::vector<WeightedSample>& samples, std::size_t classes, std::size_t dim,
                                  const std::string& what) {
    if (samples.empty()) {
      m.meta.warnings.push_back(what + " has no training samples; using a uniform distribution");
      return MnlrModel::zeros(classes, dim, cfg.mnlr.l2);
    }
    auto model = fit_mnlr(samples, classes, cfg.mnlr);
    if (!model.converged) m.meta.warnings.push_back(what + " stopped before reaching the gradient tolerance");
    return model;
  };
  for (std::size_t i = 0; i < trans.size(); ++i)
    m.state_mnlr.push_back(fit_or_uniform(trans[i], N, fe.transition_dim(),
                                          trans.size() == 1 ? "transition model"
                                                            : "transition model for state " + std::to_string(i)));
  for (std::size_t i = 0; i < durs.size(); ++i) {
    auto model = fit_or_uniform(durs[i], m.d_max, fe.duration_dim(),
                                durs.size() == 1 ? "duration model" : "duration model for state " + std::to_string(i));
    for (std::size_t c = 0; c < m.d_max; ++c) model.class_labels[c] = c + 1;
    m.dur_mnlr.push_back(std::move(model));
  }

  // emission
  EmissionModel& em = m.emission;
  em.w_spec = w_spec;
  em.gamma = m.states.centroids;
  const std::size_t wd = w_spec.encoded_dim();
  em.phi.assign(N, std::vector<double>(wd, 0.0));
  em.w_center.assign(N, std::vector<double>(wd, 0.0));
  em.sigma.assign(N, 0.0);
  std::vector<std::vector<double>> resid(N);
  std::vector<std::vector<std::vector<double>>> wrows(N);
  for (const auto& q : seqs)
    for (const auto& e : q.epochs)
      for (std::size_t t = e.start; t < e.end(); ++t) {
        resid[e.state].push_back(q.source->power[t] - em.gamma[e.state]);
        if (wd) wrows[e.state].push_back(encode_row(w_spec, q.source->exog, t));
      }
  for (std::size_t x = 0; x < N && wd; ++x) {
    const std::size_t n = resid[x].size();
    if (n < 2) continue;
    auto& c = em.w_center[x];
    for (const auto& r : wrows[x])
      for (std::size_t j = 0; j < wd; ++j) c[j] += r[j] / static_cast<double>(n);
    Eigen::MatrixXd A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(wd));
    Eigen::VectorXd b(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < wd; ++j)
        A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = wrows[x][i][j] - c[j];
      b(static_cast<Eigen::Index>(i)) = resid[x][i];
    }
    // drop degenerate columns
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      if (A.col(j).squaredNorm() > 1e-18 * static_cast<double>(n)) cols.push_back(j);
    if (cols.size() < wd)
      m.meta.warnings.push_back("emission covariate has zero variance in state " + std::to_string(x) + "; dropped");
    if (cols.empty()) continue;
    Eigen::MatrixXd As(A.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) As.col(static_cast<Eigen::Index>(j)) = A.col(cols[j]);
    const Eigen::VectorXd sol = As.colPivHouseholderQr().solve(b);
    for (std::size_t j = 0; j < cols.size(); ++j)
      em.phi[x][static_cast<std::size_t>(cols[j])] = sol(static_cast<Eigen::Index>(j));
  }
  double pooled_ss = 0.0;
  std::size_t pooled_n = 0;
  for (std::size_t x = 0; x < N; ++x) {
    double ss = 0.0;
    for (std::size_t i = 0; i < resid[x].size(); ++i) {
      double r = resid[x][i];
      for (std::size_t j = 0; j < wd; ++j) r -= em.phi[x][j] * (wrows[x][i][j] - em.w_center[x][j]);
      ss += r * r;
    }
    pooled_ss += ss;
    pooled_n += resid[x].size();
    em.sigma[x] = resid[x].empty() ? 0.0 : std::sqrt(ss / static_cast<double>(resid[x].size()));
  }
  constexpr double sigma_floor = 1e-6;
  for (auto& s : em.sigma) {
    if (cfg.variant.shared_sigma) s = std::sqrt(pooled_ss / static_cast<double>(std::max<std::size_t>(pooled_n, 1)));
    s = std::max(s, sigma_floor);
  }

  // initial distribution: smoothed empirical generalized-state frequencies
  InitialDistribution& init = m.initial;
  init.n_states = N;
  init.d_max = m.d_max;
  init.probs.assign(N * m.d_max, 1.0);
  double total = static_cast<double>(N * m.d_max);
  for (const auto& e : all_epochs) {
    if (e.censored() && !keep_censored) continue;
    init.probs[e.state * m.d_max + m.clamp_duration(e.duration) - 1] += 1.0;
    total += 1.0;
  }
  for (auto& p : init.probs) p /= total;

  // tail of the last segment
  const auto& last = seqs.back();
  if (last.epochs.size() >= 2) {
    TrainingTail& tail = m.meta.tail;
    const Epoch& cur = last.epochs.back();
    const Epoch& prev = last.epochs[last.epochs.size() - 2];
    tail.valid = true;
    tail.x_prev = prev.state;
    tail.d_prev = prev.duration;
    tail.x_curr = cur.state;
    tail.elapsed = cur.duration;
    tail.last_time = last.source->time_at(last.total_steps - 1).time_since_epoch().count();
    tail.step_seconds = last.source->step.count();
    tail.last_exog = detail::frame_row(last.source->exog, last.total_steps - 1);
    tail.epoch_exog = detail::frame_row(last.source->exog, cur.start);
  }
  return m;
}

inline ChsmModel train(const PowerSeries& series, const TrainConfig& cfg) {
  return train(std::span<const PowerSeries>(&series, 1), cfg);
}

}  // namespace chsmm

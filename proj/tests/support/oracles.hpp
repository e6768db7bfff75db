#pragma once

// Independent reference implementations used only by the tests. They are
// written for clarity, not speed, and share no code with the library beyond
// its plain data types.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "chsmm/chsmm.hpp"

namespace oracle {

inline std::vector<double> softmax(const std::vector<double>& s) {
  // direct definition in long double, no max subtraction
  std::vector<long double> e(s.size());
  long double z = 0;
  for (std::size_t i = 0; i < s.size(); ++i) z += (e[i] = std::exp(static_cast<long double>(s[i])));
  std::vector<double> p(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) p[i] = static_cast<double>(e[i] / z);
  return p;
}

/// Class probabilities straight from the coefficient matrix.
inline std::vector<double> mnlr_proba(const chsmm::MnlrModel& m, const std::vector<double>& x) {
  std::vector<double> s(m.n_classes);
  for (std::size_t c = 0; c < m.n_classes; ++c) {
    double acc = m.coeffs(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(m.n_features));
    for (std::size_t j = 0; j < m.n_features; ++j)
      acc += m.coeffs(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) * x[j];
    s[c] = acc;
  }
  return softmax(s);
}

// Feature vectors rebuilt from the encoder's stored statistics:
// transition = [one-hot prev state, pooled only][std d_prev][std z]
// duration   = [one-hot prev state][std d_prev][one-hot next state, pooled only][std z]
inline void push_z(const chsmm::FeatureEncoder& fe, const std::vector<double>& z, std::vector<double>& f) {
  for (std::size_t j = 0; j < fe.z_keep.size(); ++j)
    if (fe.z_keep[j]) f.push_back((z[j] - fe.z_mean[j]) / fe.z_scale[j]);
}

inline std::vector<double> transition_features(const chsmm::ChsmModel& m, std::size_t xp, std::size_t dp,
                                               const std::vector<double>& z) {
  const auto& fe = m.features;
  std::vector<double> f;
  if (fe.pooling == chsmm::Pooling::pooled)
    for (std::size_t i = 0; i < m.n_states(); ++i) f.push_back(i == xp ? 1.0 : 0.0);
  f.push_back((static_cast<double>(std::min(dp, m.d_max)) - fe.d_mean) / fe.d_scale);
  push_z(fe, z, f);
  return f;
}

inline std::vector<double> duration_features(const chsmm::ChsmModel& m, std::size_t xp, std::size_t dp,
                                             std::size_t xn, const std::vector<double>& z) {
  const auto& fe = m.features;
  std::vector<double> f;
  for (std::size_t i = 0; i < m.n_states(); ++i) f.push_back(i == xp ? 1.0 : 0.0);
  f.push_back((static_cast<double>(std::min(dp, m.d_max)) - fe.d_mean) / fe.d_scale);
  if (fe.pooling == chsmm::Pooling::pooled)
    for (std::size_t i = 0; i < m.n_states(); ++i) f.push_back(i == xn ? 1.0 : 0.0);
  push_z(fe, z, f);
  return f;
}

inline std::vector<double> next_state_proba(const chsmm::ChsmModel& m, std::size_t xp, std::size_t dp,
                                            const std::vector<double>& z) {
  const auto& model = m.features.pooling == chsmm::Pooling::pooled ? m.state_mnlr[0] : m.state_mnlr[xp];
  auto p = mnlr_proba(model, transition_features(m, xp, dp, z));
  p[xp] = 0.0;
  double t = 0.0;
  for (double v : p) t += v;
  for (double& v : p) v /= t;
  return p;
}

inline std::vector<double> duration_proba(const chsmm::ChsmModel& m, std::size_t xp, std::size_t dp, std::size_t xn,
                                          const std::vector<double>& z) {
  const auto& model = m.features.pooling == chsmm::Pooling::pooled ? m.dur_mnlr[0] : m.dur_mnlr[xn];
  return mnlr_proba(model, duration_features(m, xp, dp, xn, z));
}

/// Log-probabilities straight from the scores: s_c - log sum exp(s).
inline std::vector<double> mnlr_log_proba(const chsmm::MnlrModel& m, const std::vector<double>& x) {
  std::vector<long double> s(m.n_classes);
  for (std::size_t c = 0; c < m.n_classes; ++c) {
    long double acc = m.coeffs(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(m.n_features));
    for (std::size_t j = 0; j < m.n_features; ++j)
      acc += m.coeffs(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) * x[j];
    s[c] = acc;
  }
  const long double mx = *std::max_element(s.begin(), s.end());
  long double z = 0;
  for (auto v : s) z += std::exp(v - mx);
  std::vector<double> out;
  for (auto v : s) out.push_back(static_cast<double>(v - mx - std::log(z)));
  return out;
}

// Log-space versions for argmax decisions; the tails of trained models can
// fall below even the long double range.
inline std::vector<double> next_state_log_proba(const chsmm::ChsmModel& m, std::size_t xp, std::size_t dp,
                                                const std::vector<double>& z) {
  const auto& model = m.features.pooling == chsmm::Pooling::pooled ? m.state_mnlr[0] : m.state_mnlr[xp];
  auto p = mnlr_log_proba(model, transition_features(m, xp, dp, z));
  p[xp] = -std::numeric_limits<double>::infinity();
  return p;
}

inline std::vector<double> duration_log_proba(const chsmm::ChsmModel& m, std::size_t xp, std::size_t dp,
                                              std::size_t xn, const std::vector<double>& z) {
  const auto& model = m.features.pooling == chsmm::Pooling::pooled ? m.dur_mnlr[0] : m.dur_mnlr[xn];
  return mnlr_log_proba(model, duration_features(m, xp, dp, xn, z));
}

// first index within 1e-9 of the maximum
inline std::size_t first_max(const std::vector<double>& v, std::size_t from = 0) {
  double top = v[from];
  for (std::size_t i = from; i < v.size(); ++i) top = std::max(top, v[i]);
  std::size_t i = from;
  while (v[i] < top - 1e-9) ++i;
  return i;
}

inline double emission_mean(const chsmm::ChsmModel& m, std::size_t x, const std::vector<double>& w) {
  double mu = m.emission.gamma[x];
  for (std::size_t j = 0; j < m.emission.phi[x].size(); ++j) mu += m.emission.phi[x][j] * (w[j] - m.emission.w_center[x][j]);
  return mu;
}

struct GreedyResult {
  std::vector<double> power;
  std::vector<std::size_t> states;  // per step t+1..t+H
};

/// Step-by-step greedy rollout: walks the horizon one step at a time and
/// decides a new epoch whenever the current one has run its course.
inline GreedyResult greedy_forecast(const chsmm::ChsmModel& m, const chsmm::ForecastContext& ctx, std::size_t H) {
  GreedyResult out;
  std::size_t x = ctx.x_curr, xp = ctx.x_prev, dp = ctx.d_prev;
  std::size_t dur, left;  // total duration of the running epoch, steps left after t
  if (ctx.elapsed > m.d_max) {
    dur = m.d_max;
    left = 0;
  } else {
    const auto p = duration_log_proba(m, xp, dp, x, ctx.z_current);
    dur = first_max(p, ctx.elapsed - 1) + 1;
    left = dur - ctx.elapsed;
  }
  for (std::size_t h = 1; h <= H; ++h) {
    if (left == 0) {
      const std::vector<double> z = ctx.z_hat.empty() ? std::vector<double>{} : ctx.z_hat[h - 1];
      const std::size_t xn = first_max(next_state_log_proba(m, x, dur, z));
      const std::size_t dn = first_max(duration_log_proba(m, x, dur, xn, z)) + 1;
      xp = x;
      dp = dur;
      x = xn;
      dur = dn;
      left = dn;
    }
    const std::vector<double> w = ctx.w_hat.empty() ? std::vector<double>{} : ctx.w_hat[h - 1];
    out.power.push_back(emission_mean(m, x, w));
    out.states.push_back(x);
    --left;
  }
  (void)xp;
  (void)dp;
  return out;
}

/// Forecast error metric written directly from its definition: per window,
/// square the summed deviation of the aggregate over appliances and steps;
/// normalize the root mean by the range of the windows' aggregate totals.
inline double nrmse(const chsmm::Trajectories& y, const chsmm::Trajectories& yhat) {
  const std::size_t J = y.size(), N = y[0].size(), H = y[0][0].size();
  double num = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t j = 0; j < J; ++j) {
    double dev = 0.0, tot = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t t = 0; t < H; ++t) dev += y[j][i][t] - yhat[j][i][t], tot += y[j][i][t];
    num += dev * dev;
    lo = std::min(lo, tot), hi = std::max(hi, tot);
  }
  return std::sqrt(num / static_cast<double>(J * H)) / (hi - lo);
}

/// Exhaustive 1-D k-means: the optimal clusters of sorted values are
/// contiguous, so every placement of k-1 cut points is tried.
inline double best_inertia(std::vector<double> v, std::size_t k, std::vector<double>* centers = nullptr) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> cut(k + 1);
  const auto cost = [&](std::size_t a, std::size_t b, double* mean) {
    double m = 0.0;
    for (std::size_t i = a; i < b; ++i) m += v[i];
    m /= static_cast<double>(b - a);
    double s = 0.0;
    for (std::size_t i = a; i < b; ++i) s += (v[i] - m) * (v[i] - m);
    if (mean) *mean = m;
    return s;
  };
  // recursive enumeration of cut[1..k-1]
  std::vector<double> best_c;
  const auto rec = [&](auto&& self, std::size_t level, std::size_t from) -> void {
    if (level == k) {
      cut[k] = n;
      double total = 0.0;
      std::vector<double> c;
      for (std::size_t i = 0; i < k; ++i) {
        double m;
        total += cost(cut[i], cut[i + 1], &m);
        c.push_back(m);
      }
      if (total < best) best = total, best_c = c;
      return;
    }
    for (std::size_t c = from; c + (k - level) <= n; ++c) {
      cut[level] = c;
      self(self, level + 1, c + 1);
    }
  };
  cut[0] = 0;
  if (k == 1) {
    double m;
    best = cost(0, n, &m);
    best_c = {m};
  } else {
    rec(rec, 1, 1);
  }
  if (centers) *centers = best_c;
  return best;
}

/// Merges runs shorter than `min_len` by repeated passes over an explicit run
/// list: always the shortest (leftmost on ties) run first, into the neighbour
/// whose centroid is closer (left on ties).
inline std::vector<std::size_t> debounce_labels(std::vector<std::size_t> labels, const std::vector<double>& centroids,
                                                std::size_t min_len) {
  struct Run {
    std::size_t state, len;
  };
  std::vector<Run> runs;
  for (auto l : labels) {
    if (!runs.empty() && runs.back().state == l) ++runs.back().len;
    else runs.push_back({l, 1});
  }
  while (runs.size() > 1) {
    std::size_t pick = runs.size();
    for (std::size_t i = 0; i < runs.size(); ++i)
      if (runs[i].len < min_len && (pick == runs.size() || runs[i].len < runs[pick].len)) pick = i;
    if (pick == runs.size()) break;
    std::size_t into;
    if (pick == 0) into = 1;
    else if (pick + 1 == runs.size()) into = pick - 1;
    else {
      const double c = centroids[runs[pick].state];
      into = std::abs(centroids[runs[pick - 1].state] - c) <= std::abs(centroids[runs[pick + 1].state] - c) ? pick - 1
                                                                                                             : pick + 1;
    }
    runs[into].len += runs[pick].len;
    runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(pick));
    // coalesce equal neighbours
    std::vector<Run> merged;
    for (const auto& r : runs) {
      if (!merged.empty() && merged.back().state == r.state) merged.back().len += r.len;
      else merged.push_back(r);
    }
    runs = merged;
  }
  std::vector<std::size_t> out;
  for (const auto& r : runs) out.insert(out.end(), r.len, r.state);
  return out;
}

/// Hold-last-value fill on a minute grid given (minute index, value) samples.
inline std::vector<std::vector<double>> hold_fill(const std::vector<std::pair<long long, double>>& samples,
                                                  std::size_t max_gap) {
  std::vector<std::vector<double>> segs;
  long long prev = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto [t, v] = samples[i];
    if (i == 0 || t - prev - 1 > static_cast<long long>(max_gap)) {
      segs.push_back({v});
    } else {
      for (long long k = prev + 1; k < t; ++k) segs.back().push_back(segs.back().back());
      segs.back().push_back(v);
    }
    prev = t;
  }
  return segs;
}

}  // namespace oracle

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "chsmm/error.hpp"
#include "chsmm/ingest.hpp"
#include "chsmm/rng.hpp"

namespace chsmm {

/// Discrete operating states identified by their mean power level.
struct StateSpace {
  std::vector<double> centroids;  // W, strictly increasing

  [[nodiscard]] std::size_t size() const { return centroids.size(); }

  /// Index of the nearest centroid; exact ties go to the lower index.
  [[nodiscard]] std::size_t assign(double power) const {
    const auto it = std::lower_bound(centroids.begin(), centroids.end(), power);
    std::size_t hi = static_cast<std::size_t>(it - centroids.begin());
    if (hi == 0) return 0;
    if (hi == centroids.size()) return hi - 1;
    const std::size_t lo = hi - 1;
    return (power - centroids[lo] <= centroids[hi] - power) ? lo : hi;
  }

  [[nodiscard]] double distance(double power) const { return std::abs(power - centroids[assign(power)]); }

  void validate() const {
    require(!centroids.empty(), "state space is empty");
    for (std::size_t i = 1; i < centroids.size(); ++i)
      require(centroids[i] > centroids[i - 1], "centroids must be strictly increasing");
  }
  friend bool operator==(const StateSpace&, const StateSpace&) = default;
};

struct KMeansOptions {
  std::size_t max_iter = 300;
  double tol = 1e-6;  // W of centroid movement
};

struct KMeansResult {
  StateSpace states;
  std::vector<double> inertia_trace;  // after initial assignment, then after each Lloyd update
  std::size_t iterations = 0;
  [[nodiscard]] double inertia() const { return inertia_trace.back(); }
};

namespace detail {

/// Lloyd's algorithm on a sorted 1-D sample. Clusters are contiguous index
/// ranges, so each assignment is k-1 binary searches.
class SortedKMeans {
 public:
  explicit SortedKMeans(std::vector<double> values) : v_(std::move(values)) {
    std::sort(v_.begin(), v_.end());
    prefix_.resize(v_.size() + 1, 0.0);
    for (std::size_t i = 0; i < v_.size(); ++i) prefix_[i + 1] = prefix_[i] + v_[i];
    distinct_ = v_.empty() ? 0 : 1;
    for (std::size_t i = 1; i < v_.size(); ++i) distinct_ += v_[i] != v_[i - 1];
  }

  [[nodiscard]] std::size_t distinct() const { return distinct_; }
  [[nodiscard]] const std::vector<double>& values() const { return v_; }

  /// Maximin seeding: a seeded random first center, then repeatedly the value
  /// farthest from all chosen centers (ties to the smaller value).
  [[nodiscard]] std::vector<double> farthest_point_init(std::size_t k, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<double> c{v_[rng.index(v_.size())]};
    extend_farthest(c, k);
    return c;
  }

  void extend_farthest(std::vector<double>& c, std::size_t k) const {
    while (c.size() < k) {
      std::sort(c.begin(), c.end());
      double best = -1.0, best_v = 0.0;
      const auto consider = [&](double x) {
        double d = std::numeric_limits<double>::infinity();
        const auto it = std::lower_bound(c.begin(), c.end(), x);
        if (it != c.end()) d = std::min(d, *it - x);
        if (it != c.begin()) d = std::min(d, x - *(it - 1));
        if (d > best || (d == best && x < best_v)) {
          best = d;
          best_v = x;
        }
      };
      consider(v_.front());
      consider(v_.back());
      for (std::size_t i = 0; i + 1 < c.size(); ++i) {
        const double mid = 0.5 * (c[i] + c[i + 1]);
        const auto it = std::lower_bound(v_.begin(), v_.end(), mid);
        if (it != v_.end()) consider(*it);
        if (it != v_.begin()) consider(*(it - 1));
      }
      if (best <= 0.0) break;  // every distinct value is already a center
      c.push_back(best_v);
    }
    std::sort(c.begin(), c.end());
  }

  /// Split points: cluster i covers [bounds[i], bounds[i+1]).
  [[nodiscard]] std::vector<std::size_t> assign(const std::vector<double>& c) const {
    std::vector<std::size_t> b(c.size() + 1, 0);
    b.back() = v_.size();
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
      const double lo = c[i], hi = c[i + 1];
      // first value strictly closer to hi than to lo
      const auto it = std::partition_point(v_.begin(), v_.end(), [&](double x) { return !(x - lo > hi - x); });
      b[i + 1] = std::max(b[i], static_cast<std::size_t>(it - v_.begin()));
    }
    return b;
  }

  [[nodiscard]] double inertia(const std::vector<double>& c, const std::vector<std::size_t>& b) const {
    double total = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = b[i]; j < b[i + 1]; ++j) total += (v_[j] - c[i]) * (v_[j] - c[i]);
    return total;
  }

  [[nodiscard]] KMeansResult run(std::vector<double> c, const KMeansOptions& opts) const {
    KMeansResult r;
    auto b = assign(c);
    r.inertia_trace.push_back(inertia(c, b));
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
      double moved = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) {
        const std::size_t n = b[i + 1] - b[i];
        if (n == 0) continue;  // empty cluster keeps its center
        const double mean = (prefix_[b[i + 1]] - prefix_[b[i]]) / static_cast<double>(n);
        moved = std::max(moved, std::abs(mean - c[i]));
        c[i] = mean;
      }
      std::sort(c.begin(), c.end());
      b = assign(c);
      r.inertia_trace.push_back(inertia(c, b));
      r.iterations = it + 1;
      if (moved < opts.tol) break;
    }
    // exact means for the final partition
    for (std::size_t i = 0; i < c.size(); ++i) {
      const std::size_t n = b[i + 1] - b[i];
      if (n == 0) continue;
      double s = 0.0;
      for (std::size_t j = b[i]; j < b[i + 1]; ++j) s += v_[j];
      c[i] = s / static_cast<double>(n);
    }
    c.erase(std::unique(c.begin(), c.end()), c.end());
    r.states.centroids = std::move(c);
    return r;
  }

 private:
  std::vector<double> v_;
  std::vector<double> prefix_;
  std::size_t distinct_ = 0;
};

}  // namespace detail

/// 1-D K-means over power values: seeded farthest-point init, then Lloyd.
inline KMeansResult fit_kmeans_detailed(std::span<const double> power, std::size_t n_states, std::uint64_t seed,
                                        const KMeansOptions& opts = {}) {
  require(n_states >= 1, "n_states must be >= 1");
  if (power.empty()) fail(ErrorKind::empty_input, "cannot cluster an empty series");
  detail::SortedKMeans km({power.begin(), power.end()});
  if (n_states > km.distinct())
    fail(ErrorKind::infeasible_k, "requested " + std::to_string(n_states) + " states but only " +
                                      std::to_string(km.distinct()) + " distinct power values");
  return km.run(km.farthest_point_init(n_states, seed), opts);
}

inline StateSpace fit_kmeans(const PowerSeries& series, std::size_t n_states, std::uint64_t seed) {
  return fit_kmeans_detailed(series.power, n_states, seed).states;
}

struct ElbowResult {
  std::size_t k_elbow = 1;
  std::vector<double> inertia;  // inertia[k-1] for k = 1..k_max
};

/// Inertia curve for k = 1..k_max and the elbow (maximum second difference).
/// Each k is warm-started from the k-1 solution plus the farthest value, so the
/// curve is non-increasing; k beyond the number of distinct values repeats the
/// last feasible inertia.
inline ElbowResult suggest_n_states(std::span<const double> power, std::size_t k_max, std::uint64_t seed = 0) {
  require(k_max >= 2, "k_max must be >= 2");
  if (power.empty()) fail(ErrorKind::empty_input, "cannot cluster an empty series");
  detail::SortedKMeans km({power.begin(), power.end()});
  ElbowResult out;
  std::vector<double> centers;
  for (std::size_t k = 1; k <= k_max; ++k) {
    if (k > km.distinct()) {
      out.inertia.push_back(out.inertia.back());
      continue;
    }
    std::vector<double> init = centers;
    if (init.empty())
      init = km.farthest_point_init(1, seed);
    else
      km.extend_farthest(init, k);
    auto r = km.run(init, {});
    const double value = out.inertia.empty() ? r.inertia() : std::min(r.inertia(), out.inertia.back());
    out.inertia.push_back(value);
    centers = r.states.centroids;
  }
  const auto at = [&](std::size_t k) { return k > k_max ? out.inertia.back() : out.inertia[k - 1]; };
  double best = 0.0;
  const double scale = std::max(out.inertia.front(), std::numeric_limits<double>::min());
  for (std::size_t k = 2; k <= k_max; ++k) {
    const double d2 = at(k - 1) - 2.0 * at(k) + at(k + 1);
    if (d2 > best && d2 > 1e-12 * scale) {
      best = d2;
      out.k_elbow = k;
    }
  }
  return out;
}

inline ElbowResult suggest_n_states(const PowerSeries& series, std::size_t k_max) {
  return suggest_n_states(series.power, k_max);
}

// ---------------------------------------------------------------------------
// Epochs

/// One maximal run of a constant state. Censored epochs touch the boundary of
/// the observation window, so their true duration is unknown.
struct Epoch {
  std::size_t state = 0;
  std::size_t duration = 1;  // steps
  std::size_t start = 0;     // step index of the first observation
  bool left_censored = false;
  bool right_censored = false;

  [[nodiscard]] bool censored() const { return left_censored || right_censored; }
  [[nodiscard]] std::size_t end() const { return start + duration; }  // one past the last step
  friend bool operator==(const Epoch&, const Epoch&) = default;
};

struct EpochSequence {
  std::vector<Epoch> epochs;
  std::size_t total_steps = 0;
  std::shared_ptr<const PowerSeries> source;  // observations and per-step covariates
  double max_assignment_distance = 0.0;       // W; far-from-all-centroid diagnostic

  [[nodiscard]] std::span<const double> observations(std::size_t k) const {
    return std::span<const double>(source->power).subspan(epochs[k].start, epochs[k].duration);
  }

  /// Index of the epoch containing step t.
  [[nodiscard]] std::size_t epoch_at(std::size_t t) const {
    const auto it = std::upper_bound(epochs.begin(), epochs.end(), t,
                                     [](std::size_t x, const Epoch& e) { return x < e.start; });
    return static_cast<std::size_t>(it - epochs.begin()) - 1;
  }

  /// Per-step state labels.
  [[nodiscard]] std::vector<std::size_t> expand() const {
    std::vector<std::size_t> labels;
    labels.reserve(total_steps);
    for (const auto& e : epochs) labels.insert(labels.end(), e.duration, e.state);
    return labels;
  }
};

inline std::vector<std::size_t> label_steps(std::span<const double> power, const StateSpace& states) {
  std::vector<std::size_t> labels(power.size());
  for (std::size_t i = 0; i < power.size(); ++i) labels[i] = states.assign(power[i]);
  return labels;
}

/// Run-length encodes labels. Runs shorter than debounce are absorbed into the
/// neighbouring run whose centroid is nearer (shortest, then leftmost, first);
/// equal neighbours coalesce. The first epoch is left-censored and the last
/// right-censored.
inline std::vector<Epoch> run_length_encode(std::span<const std::size_t> labels, std::span<const double> centroids,
                                            std::size_t debounce = 0) {
  struct Run {
    std::size_t state, len, start;
    std::ptrdiff_t prev, next;
    bool alive = true;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < labels.size();) {
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    const auto idx = static_cast<std::ptrdiff_t>(runs.size());
    runs.push_back({labels[i], j - i, i, idx - 1, idx + 1});
    i = j;
  }
  if (runs.empty()) return {};
  runs.back().next = -1;

  if (debounce > 1 && runs.size() > 1) {
    // Live runs keep their creation index and indices stay in positional order,
    // so (len, index) orders the queue shortest-then-leftmost.
    std::set<std::pair<std::size_t, std::size_t>> queue;
    for (std::size_t r = 0; r < runs.size(); ++r)
      if (runs[r].len < debounce) queue.insert({runs[r].len, r});
    std::size_t alive = runs.size();
    const auto merge_into = [&](std::size_t dst, std::size_t src) {
      auto& d = runs[dst];
      auto& s = runs[src];
      queue.erase({d.len, dst});
      queue.erase({s.len, src});
      if (s.start < d.start) {
        d.start = s.start;
        d.prev = s.prev;
        if (d.prev >= 0) runs[static_cast<std::size_t>(d.prev)].next = static_cast<std::ptrdiff_t>(dst);
      } else {
        d.next = s.next;
        if (d.next >= 0) runs[static_cast<std::size_t>(d.next)].prev = static_cast<std::ptrdiff_t>(dst);
      }
      d.len += s.len;
      s.alive = false;
      --alive;
      if (d.len < debounce) queue.insert({d.len, dst});
    };
    while (!queue.empty() && alive > 1) {
      const std::size_t r = queue.begin()->second;
      const auto& run = runs[r];
      const double c = centroids[run.state];
      std::ptrdiff_t target = run.prev < 0 ? run.next : run.prev;
      if (run.prev >= 0 && run.next >= 0) {
        const double dl = std::abs(centroids[runs[static_cast<std::size_t>(run.prev)].state] - c);
        const double dr = std::abs(centroids[runs[static_cast<std::size_t>(run.next)].state] - c);
        target = dl <= dr ? run.prev : run.next;
      }
      const auto t = static_cast<std::size_t>(target);
      merge_into(t, r);
      for (const std::ptrdiff_t nb : {runs[t].prev, runs[t].next})
        if (nb >= 0 && runs[static_cast<std::size_t>(nb)].alive && runs[static_cast<std::size_t>(nb)].state == runs[t].state)
          merge_into(t, static_cast<std::size_t>(nb));
    }
  }

  std::vector<Epoch> out;
  std::size_t head = 0;
  while (!runs[head].alive) ++head;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(head); i >= 0; i = runs[static_cast<std::size_t>(i)].next) {
    const auto& run = runs[static_cast<std::size_t>(i)];
    if (!out.empty() && out.back().state == run.state) {
      out.back().duration += run.len;
      continue;
    }
    out.push_back({run.state, run.len, run.start, false, false});
  }
  out.front().left_censored = true;
  out.back().right_censored = true;
  return out;
}

/// Labels each step with its nearest centroid and run-length encodes.
inline EpochSequence segment(const PowerSeries& series, const StateSpace& states, std::size_t debounce = 0) {
  series.validate();
  states.validate();
  EpochSequence seq;
  seq.total_steps = series.size();
  seq.source = std::make_shared<const PowerSeries>(series);
  const auto labels = label_steps(series.power, states);
  for (double p : series.power) seq.max_assignment_distance = std::max(seq.max_assignment_distance, states.distance(p));
  seq.epochs = run_length_encode(labels, states.centroids, debounce);
  return seq;
}

/// Longest epoch duration, capped at d_cap.
inline std::size_t max_duration(std::span<const Epoch> epochs, std::size_t d_cap = 720) {
  require(!epochs.empty(), "epoch sequence is empty");
  require(d_cap >= 1, "d_cap must be >= 1");
  std::size_t m = 0;
  for (const auto& e : epochs) m = std::max(m, e.duration);
  return std::min(m, d_cap);
}

inline std::size_t max_duration(const EpochSequence& seq, std::size_t d_cap = 720) {
  return max_duration(seq.epochs, d_cap);
}

/// Longest observed (uncapped) duration per state; 0 for states never seen.
inline std::vector<std::size_t> max_duration_per_state(std::span<const Epoch> epochs, std::size_t n_states) {
  std::vector<std::size_t> out(n_states, 0);
  for (const auto& e : epochs)
    if (e.state < n_states) out[e.state] = std::max(out[e.state], e.duration);
  return out;
}

// ---------------------------------------------------------------------------
// Histograms for the abstraction report

struct Histogram {
  double lo = 0.0, width = 1.0;
  std::vector<std::size_t> counts;
};

inline Histogram power_histogram(std::span<const double> power, double bin_width) {
  require(bin_width > 0.0, "bin width must be positive");
  Histogram h;
  h.width = bin_width;
  if (power.empty()) return h;
  const auto [mn, mx] = std::minmax_element(power.begin(), power.end());
  h.lo = std::floor(*mn / bin_width) * bin_width;
  h.counts.assign(static_cast<std::size_t>((*mx - h.lo) / bin_width) + 1, 0);
  for (double p : power) ++h.counts[std::min(h.counts.size() - 1, static_cast<std::size_t>((p - h.lo) / bin_width))];
  return h;
}

/// counts[state][d-1] = number of epochs of that state lasting d steps.
inline std::vector<std::vector<std::size_t>> duration_histograms(std::span<const Epoch> epochs, std::size_t n_states) {
  std::vector<std::vector<std::size_t>> h(n_states);
  for (const auto& e : epochs) {
    auto& row = h.at(e.state);
    if (row.size() < e.duration) row.resize(e.duration, 0);
    ++row[e.duration - 1];
  }
  return h;
}

}  // namespace chsmm

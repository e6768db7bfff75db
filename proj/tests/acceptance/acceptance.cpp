// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "chsmm/chsmm.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"

using namespace chsmm;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---------------------------------------------------------------------------
// random small models

ChsmModel random_model(Rng& rng, std::size_t max_states, std::size_t max_d, double coef_scale) {
  const std::size_t N = 2 + rng.index(max_states - 1);
  const std::size_t d_max = 1 + rng.index(max_d);
  Variant v;
  v.pooling = rng.uniform() < 0.5 ? Pooling::pooled : Pooling::state_specific;
  ExogSpec z, w;
  if (rng.uniform() < 0.6) z = ExogSpec{{temperature_feature()}};
  if (rng.uniform() < 0.5) w = ExogSpec{{temperature_feature()}};
  std::vector<double> centroids;
  double c = rng.uniform(0, 50);
  for (std::size_t i = 0; i < N; ++i) centroids.push_back(c += rng.uniform(50, 1000));
  auto m = model_skeleton(centroids, d_max, v, z, w);
  auto& fe = m.features;
  fe.d_mean = rng.uniform(1, static_cast<double>(d_max));
  fe.d_scale = rng.uniform(0.5, 5);
  for (auto& mu : fe.z_mean) mu = rng.uniform(20, 35);
  for (auto& s : fe.z_scale) s = rng.uniform(2, 10);
  for (auto* group : {&m.state_mnlr, &m.dur_mnlr})
    for (auto& mn : *group)
      for (Eigen::Index r = 1; r < mn.coeffs.rows(); ++r)
        for (Eigen::Index j = 0; j < mn.coeffs.cols(); ++j) mn.coeffs(r, j) = rng.uniform(-coef_scale, coef_scale);
  for (std::size_t x = 0; x < N; ++x) {
    for (auto& p : m.emission.phi[x]) p = rng.uniform(-40, 40);
    for (auto& c2 : m.emission.w_center[x]) c2 = rng.uniform(20, 30);
  }
  double total = 0;
  for (auto& p : m.initial.probs) total += p = rng.uniform();
  for (auto& p : m.initial.probs) p /= total;
  return m;
}

ForecastContext random_context(Rng& rng, const ChsmModel& m, std::size_t H, std::size_t max_elapsed) {
  const auto N = m.n_states();
  ForecastContext c;
  c.x_curr = rng.index(N);
  c.x_prev = (c.x_curr + 1 + rng.index(N - 1)) % N;
  c.d_prev = 1 + rng.index(m.d_max);
  c.elapsed = 1 + rng.index(max_elapsed);
  const auto row = [&](std::size_t d) {
    std::vector<double> v;
    for (std::size_t j = 0; j < d; ++j) v.push_back(rng.uniform(15, 40));
    return v;
  };
  c.z_current = row(m.z_spec().encoded_dim());
  for (std::size_t h = 0; h < H; ++h) {
    if (!m.z_spec().empty()) c.z_hat.push_back(row(m.z_spec().encoded_dim()));
    if (!m.w_spec().empty()) c.w_hat.push_back(row(m.w_spec().encoded_dim()));
  }
  return c;
}

bool on_simplex(const std::vector<double>& p, double tol = 1e-9) {
  double s = 0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= tol;
}

// ---------------------------------------------------------------------------
// 1. probabilities

Verdict probabilities() {
  Verdict v;
  Rng rng(101);
  std::size_t checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = random_model(rng, 5, 20, trial % 10 == 0 ? 200.0 : 3.0);
    const auto N = m.n_states();
    const std::size_t xp = rng.index(N), dp = 1 + rng.index(m.d_max + 3);
    std::vector<double> z;
    for (std::size_t j = 0; j < m.z_spec().encoded_dim(); ++j) z.push_back(rng.uniform(-10, 50));
    const auto pt = transition_proba(m, xp, dp, z);
    v.require(on_simplex(pt) && pt[xp] == 0.0, "transition probabilities off the simplex");
    double total = 0;
    for (std::size_t xn = 0; xn < N; ++xn) {
      const auto pd = duration_proba(m, xp, dp, xn, z);
      v.require(on_simplex(pd), "duration probabilities off the simplex");
      for (std::size_t d = 1; d <= m.d_max; ++d) {
        const double g = generalized_transition_proba(m, xp, dp, xn, d, z);
        v.require(g == pt[xn] * pd[d - 1], "factorization is not exact");
        total += g;
      }
    }
    v.require(std::abs(total - 1.0) <= 1e-9, "generalized transition probabilities do not sum to 1");
    for (const auto* group : {&m.state_mnlr, &m.dur_mnlr})
      for (const auto& mn : *group) {
        std::vector<double> x(mn.n_features);
        for (auto& f : x) f = rng.uniform(-5, 5);
        v.require(on_simplex(mn.predict_proba(x)), "softmax off the simplex");
      }
    v.require(on_simplex(m.initial.probs), "initial distribution off the simplex");
    ++checked;
  }
  v.detail = v.pass ? std::to_string(checked) + " random models" : v.detail;
  return v;
}

// ---------------------------------------------------------------------------
// 2. gradient

Verdict gradient() {
  Verdict v;
  Rng rng(202);
  const std::size_t C = 3, F = 5;
  std::vector<WeightedSample> samples;
  for (int i = 0; i < 300; ++i) {
    WeightedSample s;
    for (std::size_t j = 0; j < F; ++j) s.features.push_back(rng.normal());
    s.label = rng.index(C);
    s.weight = rng.uniform(0.5, 3);
    samples.push_back(s);
  }
  MnlrProblem problem(samples, C);
  problem.set_l2(0.1);
  double worst = 0;
  for (int point = 0; point < 10; ++point) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(C, F + 1);
    for (Eigen::Index r = 1; r < w.rows(); ++r)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(r, j) = rng.uniform(-2, 2);
    Eigen::MatrixXd g;
    problem.evaluate(w, &g);
    double num = 0, den = 0;
    const double h = 1e-5;
    for (Eigen::Index r = 1; r < w.rows(); ++r)
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        auto a = w, b = w;
        a(r, j) += h;
        b(r, j) -= h;
        const double fd = (problem.evaluate(a, nullptr) - problem.evaluate(b, nullptr)) / (2 * h);
        num += (fd - g(r, j)) * (fd - g(r, j));
        den += g(r, j) * g(r, j);
      }
    worst = std::max(worst, std::sqrt(num / den));
  }
  v.require(worst < 1e-4, fmt("relative error %.2e", worst));
  if (v.pass) v.detail = fmt("worst relative error %.2e", worst);
  return v;
}

// ---------------------------------------------------------------------------
// 3. parameter recovery

ChsmModel recovery_truth() {
  ExogSpec z{{temperature_feature()}}, w{{temperature_feature()}};
  auto m = model_skeleton({0.0, 600.0, 2000.0}, 12, Variant{}, z, w);
  const std::size_t N = 3;
  // transition features: [one-hot prev][d_prev][temp]
  auto& tm = m.state_mnlr[0];
  const Eigen::Index d_col = N, z_col = N + 1, icpt = static_cast<Eigen::Index>(tm.n_features);
  tm.coeffs(1, d_col) = -0.15;
  tm.coeffs(2, d_col) = 0.1;
  tm.coeffs(2, z_col) = 0.08;
  tm.coeffs(2, icpt) = -3.5;
  tm.coeffs(2, 1) = -1.0;
  tm.coeffs(1, 2) = 1.0;
  // duration features: [one-hot prev][d_prev][one-hot next][temp]
  auto& dm = m.dur_mnlr[0];
  const double sd = 2.5;
  set_log_probs(dm, normal_pmf(12, 3.0, sd));
  add_duration_mean_shift(dm, 0, 1.0, sd);          // after OFF
  add_duration_mean_shift(dm, N, 0.2, sd);          // per step of the previous epoch
  add_duration_mean_shift(dm, N + 1 + 1, 1.5, sd);  // into the middle state
  add_duration_mean_shift(dm, N + 1 + 2, 4.0, sd);  // into the top state
  add_duration_mean_shift(dm, m.features.duration_z_index(), 0.05, sd);
  m.emission.phi[1] = {15.0};
  m.emission.w_center[1] = {28.0};
  m.emission.sigma = {5.0, 20.0, 40.0};
  return m;
}

Verdict recovery() {
  Verdict v;
  const auto truth = recovery_truth();
  SimConfig sim;
  sim.model = truth;
  sim.steps = 200000;
  sim.seed = 303;
  const auto trace = sample_trace(sim);
  TrainConfig cfg;
  cfg.n_states = 3;
  cfg.z_spec = truth.z_spec();
  cfg.w_spec = truth.w_spec();
  const auto fit = train(trace.series, cfg);
  v.require(fit.n_states() == 3 && fit.d_max == truth.d_max, "recovered model has the wrong shape");
  if (!v.pass) return v;
  double worst_t = 0, worst_d = 0;
  for (std::size_t xp = 0; xp < 3; ++xp)
    for (std::size_t dp = 1; dp <= truth.d_max; ++dp)
      for (double temp : {20.0, 28.0, 36.0}) {
        const std::vector<double> z{temp};
        const auto a = transition_proba(truth, xp, dp, z), b = transition_proba(fit, xp, dp, z);
        for (std::size_t x = 0; x < 3; ++x) worst_t = std::max(worst_t, std::abs(a[x] - b[x]));
        for (std::size_t xn = 0; xn < 3; ++xn) {
          if (xn == xp) continue;
          const auto c = duration_proba(truth, xp, dp, xn, z), d = duration_proba(fit, xp, dp, xn, z);
          for (std::size_t k = 0; k < c.size(); ++k) worst_d = std::max(worst_d, std::abs(c[k] - d[k]));
        }
      }
  const double phi = fit.emission.phi[1][0];
  const double phi_err = std::abs(phi - 15.0) / 15.0;
  v.require(worst_t <= 0.05, fmt("transition error %.4f", worst_t));
  v.require(worst_d <= 0.05, fmt("duration error %.4f", worst_d));
  v.require(phi_err <= 0.10, fmt("slope %.2f vs 15", phi));
  if (v.pass)
    v.detail = fmt("max |dp| transition %.4f, duration %.4f; slope %.2f vs 15", worst_t, worst_d, phi);
  return v;
}

// ---------------------------------------------------------------------------
// 4. forecast oracle

Verdict forecast_oracle() {
  Verdict v;
  Rng rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = random_model(rng, 3, 4, 2.0);
    const std::size_t H = 1 + rng.index(12);
    const auto ctx = random_context(rng, m, H, m.d_max + 1);
    const auto r = forecast(m, ctx, H);
    const auto o = oracle::greedy_forecast(m, ctx, H);
    v.require(r.power_hat == o.power, "power differs from the greedy oracle");
    std::size_t k = 0;
    for (std::size_t h = 1; h <= H; ++h) {
      while (r.chain[k].start + static_cast<long long>(r.chain[k].duration) <= static_cast<long long>(h)) ++k;
      v.require(r.chain[k].state == o.states[h - 1], "state path differs from the greedy oracle");
    }
  }
  // OFF 5 steps, ON 3 steps; from the last step of an ON epoch
  Variant sv;
  sv.pooling = Pooling::state_specific;
  auto sq = model_skeleton({0.0, 100.0}, 8, sv);
  set_log_probs(sq.dur_mnlr[0], normal_pmf(8, 5.0, 1.0));
  set_log_probs(sq.dur_mnlr[1], normal_pmf(8, 3.0, 1.0));
  ForecastContext c;
  c.x_prev = 0;
  c.d_prev = 5;
  c.x_curr = 1;
  c.elapsed = 3;
  const auto r = forecast(sq, c, 16);
  const std::vector<ChainEntry> chain{{0, 5, 1}, {1, 3, 6}, {0, 5, 9}, {1, 3, 14}};
  v.require(r.chain == chain, "hand-unrolled chain differs");
  if (v.pass) v.detail = "200 random contexts and the hand-unrolled chain";
  return v;
}

// ---------------------------------------------------------------------------
// 5. remaining duration

Verdict remaining_duration() {
  Verdict v;
  Rng rng(505);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = random_model(rng, 4, 30, 3.0);
    const auto ctx = random_context(rng, m, 1, m.d_max);
    const auto rd = predict_remaining_duration(m, ctx);
    v.require(rd.duration >= ctx.elapsed, fmt("duration %.0f below elapsed %.0f", static_cast<double>(rd.duration),
                                              static_cast<double>(ctx.elapsed)));
    const auto r = forecast(m, ctx, 1);
    if (r.chain.front().start <= 0)
      v.require(r.chain.front().duration >= ctx.elapsed, "forecast chain shortens the current epoch");
  }
  if (v.pass) v.detail = "1000 random contexts";
  return v;
}

// ---------------------------------------------------------------------------
// 6. NRMSE

Verdict nrmse_oracle() {
  Verdict v;
  Rng rng(606);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t J = 2 + rng.index(30), N = 1 + rng.index(10), H = 1 + rng.index(60);
    Trajectories y(J, std::vector<std::vector<double>>(N, std::vector<double>(H))), yh = y;
    for (auto* t : {&y, &yh})
      for (auto& w : *t)
        for (auto& a : w)
          for (auto& x : a) x = rng.uniform(0, 3000);
    const double lib = nrmse(y, yh), ref = oracle::nrmse(y, yh);
    worst = std::max(worst, std::abs(lib - ref) / ref);
    v.require(nrmse(y, y) == 0.0, "perfect forecast is not zero");
    auto ys = y, yhs = yh;
    const double k = rng.uniform(0.01, 100);
    for (auto* t : {&ys, &yhs})
      for (auto& w : *t)
        for (auto& a : w)
          for (auto& x : a) x *= k;
    v.require(std::abs(nrmse(ys, yhs) - lib) <= 1e-12 * lib, "not scale invariant");
  }
  v.require(worst <= 1e-12, fmt("relative difference %.2e", worst));
  if (v.pass) v.detail = fmt("worst relative difference %.1e", worst);
  return v;
}

// ---------------------------------------------------------------------------
// 7. fleet directions

Verdict fleet_directions() {
  Verdict v;
  const std::size_t units = 50, train_steps = 21 * 1440, steps = 28 * 1440;
  const auto fleet = make_fleet(FixtureKind::ac2, units, 707, steps);
  std::vector<PowerSeries> train_part, test_part;
  for (const auto& s : fleet) {
    auto [a, b] = split_series(s, train_steps);
    train_part.push_back(std::move(a));
    test_part.push_back(std::move(b));
  }
  EvalOptions eo;
  eo.origin_spacing = 30;
  eo.exog.policy = ExogPolicy::observed;
  const std::size_t H[] = {60};
  const std::vector<std::size_t> sizes{10, 20, 50};
  auto score = [&](const TrainConfig& cfg, double& n10, double& n20, double& n50) {
    std::vector<ChsmModel> models(units);
    parallel_for(units, 0, [&](std::size_t i) { models[i] = train(train_part[i], cfg); });
    const auto rep = sweep(models, test_part, H, sizes, eo);
    n10 = rep.mean_aggregate(10, 60);
    n20 = rep.mean_aggregate(20, 60);
    n50 = rep.mean_aggregate(50, 60);
  };
  double h10, h20, h50, b10, b20, b50, f10, f20, f50;
  score(profile("hsmm").train, h10, h20, h50);
  score(profile("ac-basic").train, b10, b20, b50);
  score(profile("ac").train, f10, f20, f50);
  std::printf("  N=50 NRMSE at 60 steps: hsmm %.4f, basic %.4f, refined %.4f\n", h50, b50, f50);
  std::printf("  refined NRMSE at 60 steps: N=10 %.4f, N=20 %.4f\n", f10, f20);
  v.require(b50 < h50, fmt("conditioned %.4f not below baseline %.4f", b50, h50));
  v.require(f50 < b50, fmt("refined %.4f not below basic %.4f", f50, b50));
  v.require(f20 < f10, fmt("N=20 %.4f not below N=10 %.4f", f20, f10));
  if (v.pass) v.detail = fmt("hsmm %.4f > basic %.4f > refined %.4f; N20 %.4f < N10", h50, b50, f50, f20);
  return v;
}

// ---------------------------------------------------------------------------
// 8. anomalies

Verdict anomalies() {
  Verdict v;
  const std::size_t units = 6, train_steps = 30 * 1440, steps = 60 * 1440;
  const TrainConfig cfg = profile("ev").train;
  EvalOptions eo;
  eo.origin_spacing = 60;
  auto run = [&](bool with_gap, std::vector<Anomaly>& found, std::size_t& max_train_off) {
    std::vector<ChsmModel> models(units);
    std::vector<PowerSeries> tests(units);
    parallel_for(units, 0, [&](std::size_t i) {
      FixtureOptions fo;
      fo.jitter = true;
      if (with_gap && i == 2) {
        fo.anomaly_gap_days = 16.0;
        fo.anomaly_at = 0.55;
      }
      auto s = make_fixture(FixtureKind::ev2, derive_seed(808, 1000 + i), steps, fo);
      s.appliance_id = "ev-" + std::to_string(i);
      auto [a, b] = split_series(s, train_steps);
      models[i] = train(a, cfg);
      tests[i] = std::move(b);
    });
    max_train_off = 0;
    for (const auto& m : models) max_train_off = std::max(max_train_off, m.max_duration_per_state[0]);
    const std::size_t hs[] = {60};
    auto rep = sweep(models, tests, hs, {}, eo);
    std::vector<EpochSequence> epochs;
    for (std::size_t i = 0; i < units; ++i) epochs.push_back(segment(tests[i], models[i].states));
    found = detect_anomalies(rep, models, epochs);
  };
  std::vector<Anomaly> with_gap, clean;
  std::size_t off_gap = 0, off_clean = 0;
  run(true, with_gap, off_gap);
  run(false, clean, off_clean);
  v.require(off_gap <= 1440 && off_clean <= 1440, "training OFF durations exceed one day");
  const bool gap_flagged = std::any_of(with_gap.begin(), with_gap.end(), [](const Anomaly& a) {
    return a.appliance_id == "ev-2" && a.reason == AnomalyReason::duration_out_of_range;
  });
  v.require(gap_flagged, "the 16-day OFF gap was not flagged");
  std::string extra;
  for (const auto& a : clean) extra += " " + a.appliance_id + ":" + to_string(a.reason);
  v.require(clean.empty(), "clean population flagged" + extra);
  if (v.pass)
    v.detail = "16-day gap flagged (" + std::to_string(with_gap.size()) + " flag(s)); clean population 0 flags";
  return v;
}

// ---------------------------------------------------------------------------
// 9. determinism and persistence

Verdict determinism() {
  Verdict v;
  for (const auto kind : {FixtureKind::fridge4, FixtureKind::ac2, FixtureKind::pump2, FixtureKind::ev2}) {
    const auto a = sample_fixture(kind, 9, 3 * 1440), b = sample_fixture(kind, 9, 3 * 1440);
    v.require(a.series.power == b.series.power && a.chain == b.chain, "traces differ for one seed");
  }
  const auto fleet = make_fleet(FixtureKind::ac2, 1, 909, 5 * 1440);
  auto [tr, te] = split_series(fleet[0], 4 * 1440);
  const auto cfg = profile("ac").train;
  const auto m1 = train(tr, cfg), m2 = train(tr, cfg);
  v.require(m1 == m2 && serialize_model(m1) == serialize_model(m2), "models differ for one seed");
  EvalOptions eo;
  eo.exog.policy = ExogPolicy::observed;
  const auto f1 = rolling_forecasts(m1, te, 60, eo), f2 = rolling_forecasts(m2, te, 60, eo);
  v.require(f1.predicted == f2.predicted, "forecasts differ for one seed");
  testing::TempDir dir;
  save_model(m1, dir / "m.model.json");
  const auto back = load_model(dir / "m.model.json");
  v.require(back == m1 && serialize_model(back) == serialize_model(m1), "save/load round trip is not exact");
  const auto f3 = rolling_forecasts(back, te, 60, eo);
  v.require(f3.predicted == f1.predicted, "forecasts change after save/load");
  if (v.pass) v.detail = "traces, models, forecasts and model files reproduce exactly";
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0: no runtime limit
    std::function<Verdict()> run;
  };
  const Criterion criteria[] = {
      {1, "probability suite", 10, probabilities},
      {2, "gradient check", 5, gradient},
      {3, "parameter recovery", 120, recovery},
      {4, "forecast oracle", 30, forecast_oracle},
      {5, "remaining duration >= elapsed", 0, remaining_duration},
      {6, "NRMSE oracle", 0, nrmse_oracle},
      {7, "fleet directions", 600, fleet_directions},
      {8, "anomaly detection", 0, anomalies},
      {9, "determinism and persistence", 0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs >= c.limit_s) {
      if (v.pass) v.detail = fmt("took %.1f s, limit %.0f s", secs, c.limit_s);
      v.pass = false;
    }
    failed += !v.pass;
    std::printf("criterion %d %s: %s (%.1f s) %s\n", c.id, c.name, v.pass ? "PASS" : "FAIL", secs, v.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}

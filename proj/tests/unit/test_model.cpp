#include <catch_amalgamated.hpp>

#include <numbers>

#include "chsmm/chsmm.hpp"
#include "oracles.hpp"

using namespace chsmm;
using Catch::Approx;

namespace {

ExogSpec hour_spec() { return ExogSpec{{hour_feature()}}; }

TrainConfig pump_config(Pooling pooling, bool weighted) {
  TrainConfig cfg;
  cfg.n_states = 2;
  cfg.z_spec = hour_spec();
  cfg.variant.pooling = pooling;
  cfg.variant.weighted = weighted;
  cfg.variant.weight_a = 10;
  cfg.mnlr.tol = 1e-9;
  return cfg;
}

const PowerSeries& pump_series() {
  static const PowerSeries s = make_fixture(FixtureKind::pump2, 11, 4 * 1440);
  return s;
}

std::vector<double> hour_z(const PowerSeries& s, std::size_t t) {
  const auto secs = s.time_at(t).time_since_epoch().count();
  const double frac = static_cast<double>(((secs % 86400) + 86400) % 86400) / 86400.0;
  return {std::sin(2 * std::numbers::pi * frac), std::cos(2 * std::numbers::pi * frac)};
}

}  // namespace

TEST_CASE("transition and duration probabilities match a direct evaluation", "[model]") {
  for (const auto pooling : {Pooling::pooled, Pooling::state_specific}) {
    const auto m = train(pump_series(), pump_config(pooling, false));
    Rng rng(1);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t xp = rng.index(2), dp = 1 + rng.index(m.d_max + 20);
      const double h = rng.uniform();
      const std::vector<double> z{std::sin(2 * std::numbers::pi * h), std::cos(2 * std::numbers::pi * h)};
      const auto pt = transition_proba(m, xp, dp, z);
      const auto qt = oracle::next_state_proba(m, xp, dp, z);
      CHECK(pt[xp] == 0.0);
      double total = 0.0;
      for (std::size_t x = 0; x < pt.size(); ++x) {
        CHECK(pt[x] == Approx(qt[x]).margin(1e-12));
        total += pt[x];
      }
      CHECK(total == Approx(1.0));
      const std::size_t xn = 1 - xp;
      const auto pd = duration_proba(m, xp, dp, xn, z);
      const auto qd = oracle::duration_proba(m, xp, dp, xn, z);
      REQUIRE(pd.size() == m.d_max);
      double dtotal = 0.0;
      for (std::size_t d = 0; d < pd.size(); ++d) {
        CHECK(pd[d] == Approx(qd[d]).margin(1e-12));
        dtotal += pd[d];
      }
      CHECK(dtotal == Approx(1.0));
    }
  }
}

TEST_CASE("generalized transition is the product of its factors and sums to one", "[model]") {
  const auto m = train(pump_series(), pump_config(Pooling::pooled, true));
  const std::vector<double> z{0.3, -0.95};
  for (std::size_t xp = 0; xp < 2; ++xp) {
    double total = 0.0;
    for (std::size_t xn = 0; xn < 2; ++xn)
      for (std::size_t d = 1; d <= m.d_max; ++d) {
        const double p = generalized_transition_proba(m, xp, 17, xn, d, z);
        CHECK(p == Approx(transition_proba(m, xp, 17, z)[xn] * duration_proba(m, xp, 17, xn, z)[d - 1]));
        total += p;
      }
    CHECK(total == Approx(1.0));
  }
  CHECK_THROWS_AS(generalized_transition_proba(m, 0, 17, 1, m.d_max + 1, z), Error);
  CHECK_THROWS_AS(transition_proba(m, 2, 17, z), Error);
}

TEST_CASE("training fits the MNLRs on the documented samples", "[model]") {
  // Rebuild the sample sets from the epochs and fit them directly.
  for (const auto pooling : {Pooling::pooled, Pooling::state_specific}) {
    const auto cfg = pump_config(pooling, true);
    const auto m = train(pump_series(), cfg);
    const auto seq = segment(pump_series(), m.states);
    const auto& ep = seq.epochs;
    REQUIRE(ep.size() > 10);

    // complete predecessor: skip the pair whose predecessor is the first epoch
    double d_sum = 0.0, d_sq = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 2; k < ep.size(); ++k) {
      const double d = static_cast<double>(std::min(ep[k - 1].duration, m.d_max));
      d_sum += d, d_sq += d * d, ++n;
    }
    const double d_mean = d_sum / static_cast<double>(n);
    CHECK(m.features.d_mean == Approx(d_mean));
    CHECK(m.features.d_scale == Approx(std::sqrt(d_sq / static_cast<double>(n) - d_mean * d_mean)));
    CHECK(m.meta.n_transition_samples == ep.size() - 2);
    CHECK(m.meta.n_duration_samples == ep.size() - 3);

    const std::size_t groups = pooling == Pooling::pooled ? 1 : 2;
    std::vector<std::vector<WeightedSample>> trans(groups), durs(groups);
    for (std::size_t k = 2; k < ep.size(); ++k) {
      const auto z = hour_z(pump_series(), ep[k].start);
      const double w = 1.0 + static_cast<double>(std::min(ep[k].duration, m.d_max)) / 10.0;
      const std::size_t xp = ep[k - 1].state, xn = ep[k].state, dp = ep[k - 1].duration;
      trans[groups == 1 ? 0 : xp].push_back({oracle::transition_features(m, xp, dp, z), xn, w});
      if (k + 1 < ep.size())
        durs[groups == 1 ? 0 : xn].push_back({oracle::duration_features(m, xp, dp, xn, z), ep[k].duration - 1, w});
    }
    for (std::size_t g = 0; g < groups; ++g) {
      const auto t = fit_mnlr(trans[g], 2, cfg.mnlr);
      const auto d = fit_mnlr(durs[g], m.d_max, cfg.mnlr);
      CHECK((t.coeffs - m.state_mnlr[g].coeffs).lpNorm<Eigen::Infinity>() < 1e-6);
      CHECK((d.coeffs - m.dur_mnlr[g].coeffs).lpNorm<Eigen::Infinity>() < 1e-6);
      CHECK(m.dur_mnlr[g].class_labels.front() == 1);
      CHECK(m.dur_mnlr[g].class_labels.back() == m.d_max);
    }
  }
}

TEST_CASE("censored epochs are excluded unless requested", "[model]") {
  auto cfg = pump_config(Pooling::pooled, false);
  const auto seq = segment(pump_series(), train(pump_series(), cfg).states);
  cfg.include_censored = true;
  const auto m = train(pump_series(), cfg);
  CHECK(m.meta.n_transition_samples == seq.epochs.size() - 1);
  CHECK(m.meta.n_duration_samples == seq.epochs.size() - 1);
}

TEST_CASE("too few complete epochs falls back to censored samples with a warning", "[model]") {
  PowerSeries s;
  s.appliance_id = "tiny";
  s.power = {0, 0, 0, 100, 100};
  TrainConfig cfg;
  cfg.fixed_states = StateSpace{{0.0, 100.0}};
  const auto m = train(s, cfg);
  CHECK(m.meta.n_transition_samples == 1);
  CHECK(m.meta.n_duration_samples == 1);
  REQUIRE_FALSE(m.meta.warnings.empty());
  CHECK(m.meta.warnings.front().find("censored") != std::string::npos);
}

TEST_CASE("a single epoch is insufficient data", "[model]") {
  PowerSeries s;
  s.power = {100, 100, 100};
  TrainConfig cfg;
  cfg.fixed_states = StateSpace{{0.0, 100.0}};
  try {
    (void)train(s, cfg);
    FAIL("expected insufficient data");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::insufficient_data);
  }
  CHECK_THROWS_AS(train(std::span<const PowerSeries>{}, cfg), Error);
}

TEST_CASE("emission regression recovers the temperature sensitivity", "[model]") {
  // ON power = 1000 + 25 (temp - 25) + noise, alternating fixed-length epochs
  Rng rng(2);
  PowerSeries s;
  s.appliance_id = "ac";
  auto& temp = s.exog["temp_c"];
  for (int k = 0; k < 400; ++k) {
    const bool on = k % 2 == 1;
    const int len = on ? 15 : 25;
    for (int i = 0; i < len; ++i) {
      const double t = 25 + 6 * std::sin(static_cast<double>(s.power.size()) / 300.0) + rng.normal(0, 1);
      temp.push_back(t);
      s.power.push_back(on ? 1000 + 25 * (t - 25) + rng.normal(0, 30) : std::max(0.0, 10 + rng.normal(0, 2)));
    }
  }
  TrainConfig cfg;
  cfg.w_spec = ExogSpec{{temperature_feature()}};
  const auto m = train(s, cfg);
  CHECK(m.emission.phi[1][0] == Approx(25.0).margin(1.0));
  CHECK(m.emission.sigma[1] == Approx(30.0).margin(2.0));
  CHECK(std::abs(m.emission.phi[0][0]) < 0.2);
  CHECK(m.emission.sigma[0] == Approx(2.0).margin(0.3));
  // fitted mean passes through the state's training average
  double mean_on = 0, mean_t = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.power[i] > 500) mean_on += s.power[i], mean_t += temp[i], ++n;
  mean_on /= static_cast<double>(n), mean_t /= static_cast<double>(n);
  CHECK(emission_mean(m, 1, std::vector<double>{mean_t}) == Approx(mean_on).margin(1e-3));
}

TEST_CASE("baseline ignores covariates and shared sigma pools residuals", "[model]") {
  auto cfg = pump_config(Pooling::state_specific, false);
  cfg.variant.conditioning = Conditioning::hsmm_baseline;
  cfg.variant.shared_sigma = true;
  const auto m = train(pump_series(), cfg);
  CHECK(m.features.z_dim() == 0);
  CHECK(m.z_spec().empty());
  CHECK(m.emission.sigma[0] == m.emission.sigma[1]);
  CHECK(transition_proba(m, 0, 10, std::vector<double>{}).size() == 2);
}

TEST_CASE("constant covariates are dropped with a warning", "[model]") {
  auto s = pump_series();
  s.exog["temp_c"] = std::vector<double>(s.size(), 21.0);
  auto cfg = pump_config(Pooling::pooled, false);
  cfg.z_spec.features.push_back(temperature_feature());
  const auto m = train(s, cfg);
  REQUIRE(m.features.z_keep.size() == 3);
  CHECK(m.features.z_keep[2] == false);
  CHECK(m.features.z_dim() == 2);
  const bool warned = std::any_of(m.meta.warnings.begin(), m.meta.warnings.end(),
                                  [](const std::string& w) { return w.find("zero variance") != std::string::npos; });
  CHECK(warned);
}

TEST_CASE("duration cap and initial distribution", "[model]") {
  auto cfg = pump_config(Pooling::pooled, false);
  const auto seq = segment(pump_series(), train(pump_series(), cfg).states);
  const std::size_t longest = max_duration(seq.epochs, 100000);
  cfg.d_cap = longest - 5;
  const auto m = train(pump_series(), cfg);
  CHECK(m.d_max == longest - 5);
  CHECK(std::max(m.max_duration_per_state[0], m.max_duration_per_state[1]) == longest);
  double total = 0.0;
  for (double p : m.initial.probs) {
    CHECK(p > 0.0);
    total += p;
  }
  CHECK(total == Approx(1.0));
  CHECK(m.initial.probs.size() == 2 * m.d_max);
}

TEST_CASE("training tail records the final epochs", "[model]") {
  const auto m = train(pump_series(), pump_config(Pooling::pooled, false));
  const auto seq = segment(pump_series(), m.states);
  const auto& tail = m.meta.tail;
  REQUIRE(tail.valid);
  CHECK(tail.x_curr == seq.epochs.back().state);
  CHECK(tail.elapsed == seq.epochs.back().duration);
  CHECK(tail.x_prev == seq.epochs[seq.epochs.size() - 2].state);
  CHECK(tail.d_prev == seq.epochs[seq.epochs.size() - 2].duration);
  CHECK(tail.last_time == pump_series().time_at(pump_series().size() - 1).time_since_epoch().count());
}

TEST_CASE("training is deterministic", "[model]") {
  const auto cfg = pump_config(Pooling::state_specific, true);
  CHECK(train(pump_series(), cfg) == train(pump_series(), cfg));
}

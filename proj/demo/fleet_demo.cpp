// Simulates a small air-conditioner fleet, trains the unconditioned baseline
// and the temperature-conditioned model per unit, and compares aggregate
// forecast error at a one-hour horizon.

#include <cstdio>
#include <vector>

#include "chsmm/chsmm.hpp"

using namespace chsmm;

int main() {
  const std::size_t units = 10, train_steps = 14 * 1440, steps = 17 * 1440;
  const auto fleet = make_fleet(FixtureKind::ac2, units, 42, steps);
  std::vector<PowerSeries> train_part, test_part;
  for (const auto& s : fleet) {
    auto [a, b] = split_series(s, train_steps);
    train_part.push_back(std::move(a));
    test_part.push_back(std::move(b));
  }

  EvalOptions eo;
  eo.exog.policy = ExogPolicy::observed;
  const std::size_t H[] = {15, 60};
  const std::vector<std::size_t> sizes{5, 10};

  for (const char* name : {"hsmm", "ac-basic", "ac"}) {
    const TrainConfig cfg = profile(name).train;
    std::vector<ChsmModel> models(units);
    parallel_for(units, 0, [&](std::size_t i) { models[i] = train(train_part[i], cfg); });
    const auto rep = sweep(models, test_part, H, sizes, eo);
    std::printf("%-9s individual@60 %.4f  N=5@60 %.4f  N=10@15 %.4f  N=10@60 %.4f\n", name,
                rep.mean_individual(60), rep.mean_aggregate(5, 60), rep.mean_aggregate(10, 15),
                rep.mean_aggregate(10, 60));
  }

  // one forecast from the end of the first unit's training data
  const auto m = train(train_part[0], profile("ac").train);
  ExogForecastOptions xo;
  const auto tail = tail_context(m, 60, xo);
  const auto r = forecast(m, tail.ctx, 60);
  std::printf("\n%s from %s: %zu epochs ahead\n", m.meta.appliance_id.c_str(), format_timestamp(tail.origin).c_str(),
              r.chain.size());
  for (const auto& e : r.chain)
    std::printf("  state %zu (%.0f W) for %zu steps from offset %lld\n", e.state, m.states.centroids[e.state],
                e.duration, e.start);
  return 0;
}

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chsmm/error.hpp"
#include "chsmm/evaluate.hpp"
#include "chsmm/forecast.hpp"
#include "chsmm/ingest.hpp"
#include "chsmm/model.hpp"
#include "chsmm/model_io.hpp"

namespace chsmm {

/// Named training preset for an appliance type.
struct Profile {
  std::string name;
  std::string description;
  TrainConfig train;
};

inline std::vector<std::string> profile_names() { return {"ac", "ac-basic", "fridge", "pump", "ev", "hsmm"}; }

inline Profile profile(const std::string& name) {
  const ExogFeature temp{"temp_c", ExogSource::column, ExogEncoding::raw, "", false};
  const ExogFeature hour{"hour", ExogSource::hour_of_day, ExogEncoding::sin_cos, "", false};
  Profile p;
  p.name = name;
  TrainConfig& t = p.train;
  if (name == "ac" || name == "ac-basic") {
    t.n_states = 2;
    t.z_spec = {{temp, hour}};
    t.w_spec = {{temp}};
    if (name == "ac") {
      t.variant.pooling = Pooling::state_specific;
      t.variant.weighted = true;
      t.variant.weight_a = 10;
      p.description = "air conditioner: temperature and hour conditioning, temperature-linear ON power, weighted state-specific models";
    } else {
      p.description = "air conditioner without refinements: pooled, unweighted models";
    }
  } else if (name == "fridge") {
    t.n_states = 4;
    t.z_spec = {{hour}};
    p.description = "refrigerator: hour-of-day conditioning, four states";
  } else if (name == "pump") {
    t.n_states = 2;
    t.z_spec = {{hour}};
    p.description = "pool pump: hour-of-day conditioning";
  } else if (name == "ev") {
    t.n_states = 2;
    t.z_spec = {{hour}};
    t.d_cap = 2880;
    p.description = "EV charger: hour-of-day conditioning, durations up to two days";
  } else if (name == "hsmm") {
    t.n_states = 2;
    t.variant.conditioning = Conditioning::hsmm_baseline;
    p.description = "unconditioned semi-Markov baseline";
  } else {
    fail(ErrorKind::input, "unknown profile '" + name + "'");
  }
  return p;
}

inline nlohmann::json to_json(const TrainConfig& t) {
  nlohmann::json j = {
      {"n_states", t.n_states},
      {"seed", t.seed},
      {"debounce", t.debounce},
      {"d_cap", t.d_cap},
      {"variant", io::to_json(t.variant)},
      {"z", io::to_json(t.z_spec)},
      {"w", io::to_json(t.w_spec)},
      {"mnlr",
       {{"l2", t.mnlr.l2},
        {"tol", t.mnlr.tol},
        {"max_iter", t.mnlr.max_iter},
        {"solver", t.mnlr.solver == MnlrSolver::lbfgs ? "lbfgs" : "gradient-ascent"},
        {"memory", t.mnlr.memory},
        {"ftol", t.mnlr.ftol}}},
      {"include_censored", t.include_censored},
  };
  if (t.fixed_states) j["centroids"] = t.fixed_states->centroids;
  return j;
}

/// Overrides fields of t with those present in j (same layout as to_json).
inline void apply_json(TrainConfig& t, const nlohmann::json& j) {
  try {
    if (j.contains("n_states")) t.n_states = j.at("n_states").get<std::size_t>();
    if (j.contains("seed")) t.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("debounce")) t.debounce = j.at("debounce").get<std::size_t>();
    if (j.contains("d_cap")) t.d_cap = j.at("d_cap").get<std::size_t>();
    if (j.contains("include_censored")) t.include_censored = j.at("include_censored").get<bool>();
    if (j.contains("centroids")) t.fixed_states = StateSpace{j.at("centroids").get<std::vector<double>>()};
    if (j.contains("z")) t.z_spec = io::exog_spec_from_json(j.at("z"));
    if (j.contains("w")) t.w_spec = io::exog_spec_from_json(j.at("w"));
    if (j.contains("variant")) {
      const auto& v = j.at("variant");
      if (v.contains("pooling")) t.variant.pooling = io::parse_pooling(v.at("pooling").get<std::string>());
      if (v.contains("weighted")) t.variant.weighted = v.at("weighted").get<bool>();
      if (v.contains("weight_a")) t.variant.weight_a = v.at("weight_a").get<long long>();
      if (v.contains("conditioning"))
        t.variant.conditioning = io::parse_conditioning(v.at("conditioning").get<std::string>());
      if (v.contains("state_encoding"))
        t.variant.state_encoding = io::parse_state_encoding(v.at("state_encoding").get<std::string>());
      if (v.contains("shared_sigma")) t.variant.shared_sigma = v.at("shared_sigma").get<bool>();
    }
    if (j.contains("mnlr")) {
      const auto& m = j.at("mnlr");
      if (m.contains("l2")) t.mnlr.l2 = m.at("l2").get<double>();
      if (m.contains("tol")) t.mnlr.tol = m.at("tol").get<double>();
      if (m.contains("max_iter")) t.mnlr.max_iter = m.at("max_iter").get<std::size_t>();
      if (m.contains("memory")) t.mnlr.memory = m.at("memory").get<std::size_t>();
      if (m.contains("ftol")) t.mnlr.ftol = m.at("ftol").get<double>();
      if (m.contains("solver")) {
        const auto s = m.at("solver").get<std::string>();
        if (s == "lbfgs") t.mnlr.solver = MnlrSolver::lbfgs;
        else if (s == "gradient-ascent") t.mnlr.solver = MnlrSolver::gradient_ascent;
        else fail(ErrorKind::input, "unknown solver '" + s + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::input, std::string("bad training configuration: ") + e.what());
  }
  require(t.d_cap >= 1, "d_cap must be >= 1");
  require(t.variant.weight_a >= 1, "weight_a must be >= 1");
}

// ---------------------------------------------------------------------------
// Run configuration shared by the command-line subcommands

struct IngestSettings {
  CsvSchema schema;
  Seconds step{60};
  GapPolicy gap;
  JoinOptions join;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string profile = "ac";
  TrainConfig train = chsmm::profile("ac").train;
  IngestSettings ingest;
  std::size_t horizon = 60;
  std::vector<std::size_t> horizons{15, 30, 60};
  std::vector<std::size_t> group_sizes{10, 20, 50};
  std::size_t origin_spacing = 30;
  std::optional<ExogPolicy> exog_policy;  // unset: subcommand default
  AnomalyOptions anomaly;
};

/// Switches the profile and resets the training settings to its preset.
inline void set_profile(RunConfig& rc, const std::string& name) {
  rc.train = profile(name).train;
  rc.profile = name;
}

/// Applies a configuration document. A "profile" key is applied first so
/// that "train" entries refine the preset.
inline void apply_json(RunConfig& rc, const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::input, "configuration must be a JSON object");
  try {
    if (j.contains("profile")) set_profile(rc, j.at("profile").get<std::string>());
    if (j.contains("seed")) rc.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("jobs")) rc.jobs = j.at("jobs").get<std::size_t>();
    if (j.contains("train")) apply_json(rc.train, j.at("train"));
    if (j.contains("ingest")) {
      const auto& g = j.at("ingest");
      auto& in = rc.ingest;
      if (g.contains("timestamp_column")) in.schema.timestamp_column = g.at("timestamp_column").get<std::string>();
      if (g.contains("power_column")) in.schema.power_column = g.at("power_column").get<std::string>();
      if (g.contains("power_scale")) in.schema.power_scale = g.at("power_scale").get<double>();
      if (g.contains("step_seconds")) in.step = Seconds{g.at("step_seconds").get<long long>()};
      if (g.contains("max_gap_steps")) in.gap.max_gap_steps = g.at("max_gap_steps").get<std::size_t>();
      if (g.contains("exog_max_gap_seconds")) in.join.max_gap = Seconds{g.at("exog_max_gap_seconds").get<long long>()};
      if (g.contains("utc_offset_minutes"))
        in.join.utc_offset = std::chrono::minutes{g.at("utc_offset_minutes").get<long long>()};
    }
    if (j.contains("horizon")) rc.horizon = j.at("horizon").get<std::size_t>();
    if (j.contains("horizons")) rc.horizons = j.at("horizons").get<std::vector<std::size_t>>();
    if (j.contains("group_sizes")) rc.group_sizes = j.at("group_sizes").get<std::vector<std::size_t>>();
    if (j.contains("origin_spacing")) rc.origin_spacing = j.at("origin_spacing").get<std::size_t>();
    if (j.contains("exog_policy")) rc.exog_policy = parse_exog_policy(j.at("exog_policy").get<std::string>());
    if (j.contains("anomaly")) {
      const auto& a = j.at("anomaly");
      if (a.contains("k_mad")) rc.anomaly.k_mad = a.at("k_mad").get<double>();
      if (a.contains("duration_margin")) rc.anomaly.duration_margin = a.at("duration_margin").get<double>();
      if (a.contains("horizon")) rc.anomaly.horizon = a.at("horizon").get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::input, std::string("bad configuration: ") + e.what());
  }
  require(rc.ingest.step.count() > 0, "step_seconds must be positive");
}

inline nlohmann::json to_json(const RunConfig& rc) {
  nlohmann::json j = {
      {"profile", rc.profile},
      {"seed", rc.seed},
      {"jobs", rc.jobs},
      {"train", to_json(rc.train)},
      {"ingest",
       {{"timestamp_column", rc.ingest.schema.timestamp_column},
        {"power_column", rc.ingest.schema.power_column},
        {"power_scale", rc.ingest.schema.power_scale},
        {"step_seconds", rc.ingest.step.count()},
        {"max_gap_steps", rc.ingest.gap.max_gap_steps},
        {"exog_max_gap_seconds", rc.ingest.join.max_gap.count()},
        {"utc_offset_minutes", rc.ingest.join.utc_offset.count()}}},
      {"horizon", rc.horizon},
      {"horizons", rc.horizons},
      {"group_sizes", rc.group_sizes},
      {"origin_spacing", rc.origin_spacing},
      {"anomaly",
       {{"k_mad", rc.anomaly.k_mad},
        {"duration_margin", rc.anomaly.duration_margin},
        {"horizon", rc.anomaly.horizon}}},
  };
  if (rc.exog_policy) j["exog_policy"] = to_string(*rc.exog_policy);
  return j;
}

}  // namespace chsmm

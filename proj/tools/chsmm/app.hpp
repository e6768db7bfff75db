#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chsmm/chsmm.hpp"

namespace chsmm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* tool_version = "1.0.0";

enum ExitCode { ok = 0, other = 1, usage = 2, data = 3, version = 4 };

/// Argument problem found after parsing (conflicting or missing flags).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void usage_require(bool cond, const std::string& msg) {
  if (!cond) throw UsageError(msg);
}

inline std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorKind::input, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, p.string() + ": " + e.what());
  }
}

/// Refuses to overwrite any input file.
inline void check_outputs(const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  for (const auto& o : outputs)
    for (const auto& i : inputs) {
      std::error_code ec;
      if (fs::exists(o) && fs::exists(i) && fs::equivalent(o, i, ec))
        throw UsageError("output " + o.string() + " would overwrite input " + i.string());
    }
}

inline void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

inline void write_output(const fs::path& p, const std::string& contents) {
  ensure_parent(p);
  write_file_atomic(p, contents);
}

/// Series of one appliance, split at long gaps, with the covariates the spec reads.
inline std::vector<PowerSeries> load_segments(const fs::path& input, const std::optional<fs::path>& exog,
                                              const ExogSpec& spec, const IngestSettings& in,
                                              const std::string& id = {}) {
  auto segs = load_csv_segments(input, in.schema, in.step, in.gap, id);
  bool needs_table = false;
  for (const auto& f : spec.features) needs_table |= f.source == ExogSource::column;
  if (!needs_table) {
    for (auto& s : segs) s = add_derived_features(std::move(s), spec, in.join.utc_offset);
    return segs;
  }
  const ExogTable table = read_exog_csv(exog.value_or(input), in.schema.timestamp_column);
  for (auto& s : segs) s = join_exog(std::move(s), table, spec, in.join);
  return segs;
}

inline PowerSeries load_single(const fs::path& input, const std::optional<fs::path>& exog, const ExogSpec& spec,
                               const IngestSettings& in, const std::string& id = {}) {
  auto segs = load_segments(input, exog, spec, in, id);
  if (segs.size() > 1)
    fail(ErrorKind::alignment, input.string() + ": gap after " +
                                   format_timestamp(segs[0].time_at(segs[0].size() - 1)) + " exceeds max-gap");
  return std::move(segs.front());
}

inline void write_run_record(const fs::path& path, const std::string& subcommand, const std::vector<std::string>& argv,
                             const RunConfig& rc, const json& extra) {
  json j = {{"tool", "chsmm"},
            {"version", tool_version},
            {"subcommand", subcommand},
            {"argv", argv},
            {"seed", rc.seed},
            {"config", to_json(rc)}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_output(path, j.dump(2) + "\n");
}

inline fs::path run_record_path(const fs::path& primary) {
  fs::path p = primary;
  p += ".run.json";
  return p;
}

inline std::string epochs_csv(const std::vector<Epoch>& epochs, const PowerSeries* series, std::size_t segment = 0,
                              bool header = true) {
  std::string out = header ? "segment,state,start,start_time,duration,left_censored,right_censored\n" : "";
  for (const auto& e : epochs) {
    out += std::to_string(segment) + "," + std::to_string(e.state) + "," + std::to_string(e.start) + ",";
    out += series ? format_timestamp(series->time_at(e.start)) : "";
    out += "," + std::to_string(e.duration) + "," + (e.left_censored ? "1" : "0") + "," +
           (e.right_censored ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace detail

/// Parses argv, runs the subcommand and maps failures onto exit codes.
/// Errors go to err as one line: error:<category>:<message>.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace detail;
  std::vector<std::string> args(argv + 1, argv + argc);

  CLI::App app{"Conditional semi-Markov models of appliance power: abstraction, training, forecasting, "
               "simulation, evaluation and anomaly detection.",
               "chsmm"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version);

  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  auto* o_config = app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* o_seed = app.add_option("--seed", seed, "random seed (default 0)");
  auto* o_jobs = app.add_option("--jobs", jobs, "worker threads for fleet work; 0 = all cores");

  // ingest flags shared by the data-reading subcommands
  std::string ts_col, power_col;
  double power_scale = 1.0;
  long long step_seconds = 60;
  std::size_t max_gap_steps = 5;
  std::string exog_path;
  std::vector<CLI::Option*> ingest_opts;
  auto add_ingest = [&](CLI::App* sub) {
    ingest_opts.push_back(sub->add_option("--timestamp-column", ts_col, "timestamp column (default timestamp)"));
    ingest_opts.push_back(sub->add_option("--power-column", power_col, "power column (default power_w)"));
    ingest_opts.push_back(sub->add_option("--power-scale", power_scale, "multiplier to W, e.g. 1000 for kW"));
    ingest_opts.push_back(sub->add_option("--step-seconds", step_seconds, "grid step (default 60)")->check(CLI::PositiveNumber));
    ingest_opts.push_back(sub->add_option("--max-gap-steps", max_gap_steps, "longest gap held across (default 5)"));
    sub->add_option("--exog", exog_path, "covariate CSV (default: columns of the input file)")->check(CLI::ExistingFile);
  };

  // train-config flags
  std::string profile_name;
  std::size_t n_states = 0, debounce = 0, d_cap = 0;
  double l2 = 0.0;
  std::vector<CLI::Option*> train_opts;
  auto add_train = [&](CLI::App* sub) {
    train_opts.push_back(sub->add_option("--profile", profile_name, "appliance preset")->check(CLI::IsMember(profile_names())));
    train_opts.push_back(sub->add_option("--n-states", n_states, "number of power states")->check(CLI::PositiveNumber));
    train_opts.push_back(sub->add_option("--debounce", debounce, "merge epochs shorter than this many steps"));
    train_opts.push_back(sub->add_option("--d-cap", d_cap, "largest duration class")->check(CLI::PositiveNumber));
    train_opts.push_back(sub->add_option("--l2", l2, "MNLR ridge penalty")->check(CLI::NonNegativeNumber));
  };

  // abstract
  auto* s_abs = app.add_subcommand("abstract", "cluster power into states; write epochs and histograms");
  std::string abs_input, abs_out_dir;
  std::size_t k_max = 8;
  double bin_width = 10.0;
  bool abs_svg = false;
  s_abs->add_option("--input", abs_input, "power CSV")->required()->check(CLI::ExistingFile);
  s_abs->add_option("--out-dir", abs_out_dir, "output directory")->required();
  s_abs->add_option("--k-max", k_max, "largest k of the elbow curve (default 8)")->check(CLI::PositiveNumber);
  s_abs->add_option("--bin-width", bin_width, "power histogram bin width in W (default 10)")->check(CLI::PositiveNumber);
  s_abs->add_flag("--svg", abs_svg, "also write SVG plots");
  add_ingest(s_abs);
  add_train(s_abs);

  // train
  auto* s_train = app.add_subcommand("train", "fit a model per appliance");
  std::vector<std::string> train_inputs;
  std::string train_out, train_out_dir, train_id;
  s_train->add_option("--input", train_inputs, "power CSV; repeat for a fleet")->required()->check(CLI::ExistingFile);
  auto* o_train_out = s_train->add_option("--out", train_out, "model file (single appliance)");
  auto* o_train_dir = s_train->add_option("--out-dir", train_out_dir, "model directory (fleet)");
  s_train->add_option("--id", train_id, "appliance id (default: input file name)");
  o_train_out->excludes(o_train_dir);
  add_ingest(s_train);
  add_train(s_train);

  // predict
  auto* s_pred = app.add_subcommand("predict", "forecast the next H steps");
  std::string pred_model, pred_input, pred_origin, pred_out, pred_chain, pred_policy, pred_exog_fc;
  std::size_t horizon = 60;
  s_pred->add_option("--model", pred_model, "model file")->required()->check(CLI::ExistingFile);
  s_pred->add_option("--input", pred_input, "recent power CSV (default: end of the training data)")
      ->check(CLI::ExistingFile);
  s_pred->add_option("--origin", pred_origin, "forecast origin timestamp (default: last input step)");
  auto* o_horizon = s_pred->add_option("--horizon", horizon, "steps ahead (default 60)")->check(CLI::PositiveNumber);
  auto* o_pred_policy = s_pred->add_option("--exog-policy", pred_policy, "persistence, observed or from-file")
                            ->check(CLI::IsMember({"persistence", "observed", "from-file"}));
  s_pred->add_option("--exog-forecast", pred_exog_fc, "covariate forecast CSV for from-file")->check(CLI::ExistingFile);
  s_pred->add_option("--out", pred_out, "forecast CSV (default: standard output)");
  s_pred->add_option("--chain", pred_chain, "also write the predicted state chain as JSON");
  add_ingest(s_pred);

  // simulate
  auto* s_sim = app.add_subcommand("simulate", "sample synthetic traces in the ingest CSV schema");
  std::string sim_kind, sim_model, sim_out, sim_out_dir, sim_start, sim_chain;
  std::size_t sim_steps = 0, sim_units = 1, sim_split = 0;
  double gap_days = 0.0, gap_at = 0.25;
  bool no_noise = false;
  auto* o_kind = s_sim->add_option("--kind", sim_kind, "fixture: fridge4, ac2, pump2 or ev2")
                     ->check(CLI::IsMember({"fridge4", "ac2", "pump2", "ev2"}));
  auto* o_sim_model = s_sim->add_option("--model", sim_model, "sample from a trained model instead")->check(CLI::ExistingFile);
  o_kind->excludes(o_sim_model);
  s_sim->add_option("--steps", sim_steps, "trace length")->required()->check(CLI::PositiveNumber);
  s_sim->add_option("--units", sim_units, "fleet size with shared weather (default 1)")->check(CLI::PositiveNumber);
  s_sim->add_option("--split", sim_split, "write <id>-train.csv with this many steps and <id>-test.csv with the rest");
  s_sim->add_option("--out", sim_out, "output CSV (single unit)");
  s_sim->add_option("--out-dir", sim_out_dir, "output directory (fleets and splits)");
  s_sim->add_option("--start", sim_start, "first timestamp (default 2024-07-01T00:00:00Z)");
  s_sim->add_option("--anomaly-gap-days", gap_days, "ev2: stretch one OFF epoch to this many days")
      ->check(CLI::NonNegativeNumber);
  s_sim->add_option("--anomaly-at", gap_at, "fraction of the trace where the stretched epoch starts")
      ->check(CLI::Range(0.0, 1.0));
  s_sim->add_flag("--no-noise", no_noise, "emit emission means without Gaussian noise");
  s_sim->add_option("--chain", sim_chain, "also write the true epochs as CSV (single unit)");
  add_ingest(s_sim);

  // evaluate and detect-anomalies share their inputs
  std::vector<std::string> eval_models, eval_tests;
  std::string manifest, eval_prefix, eval_policy, eval_exog_fc;
  std::vector<std::size_t> horizons, group_sizes;
  std::size_t spacing = 30;
  bool eval_svg = false;
  double k_mad = 3.0, margin = 1.5;
  std::size_t anomaly_h = 0;
  std::vector<CLI::Option*> eval_opts;
  auto add_fleet_inputs = [&](CLI::App* sub) {
    sub->add_option("--model", eval_models, "model file; repeat, paired with --test in order")->check(CLI::ExistingFile);
    sub->add_option("--test", eval_tests, "test CSV; repeat")->check(CLI::ExistingFile);
    sub->add_option("--manifest", manifest, "CSV with columns model,test (paths relative to the manifest)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out-prefix", eval_prefix, "output path prefix")->required();
    eval_opts.push_back(sub->add_option("--origin-spacing", spacing, "steps between forecast origins (default 30)")
                            ->check(CLI::PositiveNumber));
    eval_opts.push_back(sub->add_option("--exog-policy", eval_policy, "observed (default), persistence or from-file")
                            ->check(CLI::IsMember({"persistence", "observed", "from-file"})));
    sub->add_option("--exog-forecast", eval_exog_fc, "covariate forecast CSV for from-file")->check(CLI::ExistingFile);
    add_ingest(sub);
  };
  auto* s_eval = app.add_subcommand("evaluate", "rolling-origin NRMSE per appliance and per aggregate");
  add_fleet_inputs(s_eval);
  auto* o_h = s_eval->add_option("--horizons", horizons, "comma-separated horizons (default 15,30,60)")->delimiter(',');
  auto* o_g = s_eval->add_option("--group-sizes", group_sizes, "comma-separated aggregate sizes (default 10,20,50)")
                  ->delimiter(',');
  s_eval->add_flag("--svg", eval_svg, "also write NRMSE curves as SVG");

  auto* s_anom = app.add_subcommand("detect-anomalies", "flag appliances with outlying error or durations");
  add_fleet_inputs(s_anom);
  auto* o_kmad = s_anom->add_option("--k-mad", k_mad, "multiplier of the MAD scaled to a standard deviation (default 3)")->check(CLI::NonNegativeNumber);
  auto* o_margin = s_anom->add_option("--duration-margin", margin, "flag durations above margin x training max (default 1.5)")
                       ->check(CLI::PositiveNumber);
  auto* o_ah = s_anom->add_option("--horizon", anomaly_h, "horizon of the error rule (default 60)")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return ExitCode::ok;
    }
    err << "error:usage:" << one_line(e.what()) << "\n";
    return ExitCode::usage;
  }

  try {
    RunConfig rc;
    if (*o_config) apply_json(rc, read_json_file(config_path));
    if (*o_seed) rc.seed = seed;
    if (*o_jobs) rc.jobs = jobs;
    bool n_states_given = false;
    for (auto* o : train_opts)
      if (*o && o->get_name() == "--profile") set_profile(rc, profile_name);
    for (auto* o : train_opts) {
      if (!*o) continue;
      const std::string name = o->get_name();
      if (name == "--n-states") rc.train.n_states = n_states, n_states_given = true;
      else if (name == "--debounce") rc.train.debounce = debounce;
      else if (name == "--d-cap") rc.train.d_cap = d_cap;
      else if (name == "--l2") rc.train.mnlr.l2 = l2;
    }
    rc.train.seed = rc.seed;
    for (auto* o : ingest_opts) {
      if (!*o) continue;
      const std::string name = o->get_name();
      if (name == "--timestamp-column") rc.ingest.schema.timestamp_column = ts_col;
      else if (name == "--power-column") rc.ingest.schema.power_column = power_col;
      else if (name == "--power-scale") rc.ingest.schema.power_scale = power_scale;
      else if (name == "--step-seconds") rc.ingest.step = Seconds{step_seconds};
      else if (name == "--max-gap-steps") rc.ingest.gap.max_gap_steps = max_gap_steps;
    }
    const std::optional<fs::path> exog = exog_path.empty() ? std::nullopt : std::optional<fs::path>(exog_path);

    // ------------------------------------------------------------------ abstract
    if (*s_abs) {
      const fs::path dir = abs_out_dir;
      const auto segs = load_segments(abs_input, std::nullopt, {}, rc.ingest);
      std::vector<double> all;
      for (const auto& s : segs) all.insert(all.end(), s.power.begin(), s.power.end());
      const ElbowResult elbow = suggest_n_states(all, k_max, rc.seed);
      const std::size_t K = n_states_given ? n_states : elbow.k_elbow;
      const StateSpace states = fit_kmeans_detailed(all, K, rc.seed).states;
      std::string ep;
      std::vector<Epoch> all_epochs;
      for (std::size_t i = 0; i < segs.size(); ++i) {
        const auto seq = segment(segs[i], states, rc.train.debounce);
        ep += epochs_csv(seq.epochs, &segs[i], i, i == 0);
        all_epochs.insert(all_epochs.end(), seq.epochs.begin(), seq.epochs.end());
      }
      const Histogram ph = power_histogram(all, bin_width);
      std::string phc = "bin_lo_w,bin_hi_w,count\n";
      PlotSeries pps{"steps", {}, {}};
      for (std::size_t b = 0; b < ph.counts.size(); ++b) {
        const double lo = ph.lo + ph.width * static_cast<double>(b);
        phc += fmt(lo) + "," + fmt(lo + ph.width) + "," + std::to_string(ph.counts[b]) + "\n";
        pps.x.push_back(lo + ph.width / 2);
        pps.y.push_back(static_cast<double>(ph.counts[b]));
      }
      const auto dh = duration_histograms(all_epochs, K);
      std::string dhc = "state,duration,count\n";
      std::vector<PlotSeries> dps;
      for (std::size_t x = 0; x < K; ++x) {
        PlotSeries s{"state " + std::to_string(x), {}, {}};
        for (std::size_t d = 0; d < dh[x].size(); ++d)
          if (dh[x][d] > 0) {
            dhc += std::to_string(x) + "," + std::to_string(d + 1) + "," + std::to_string(dh[x][d]) + "\n";
            s.x.push_back(static_cast<double>(d + 1));
            s.y.push_back(static_cast<double>(dh[x][d]));
          }
        dps.push_back(std::move(s));
      }
      json sj = {{"n_states", K},
                 {"centroids_w", states.centroids},
                 {"elbow", {{"k_max", k_max}, {"suggested_k", elbow.k_elbow}, {"inertia", elbow.inertia}}},
                 {"segments", segs.size()},
                 {"epochs", all_epochs.size()}};
      check_outputs({abs_input}, {dir / "states.json", dir / "epochs.csv"});
      fs::create_directories(dir);
      write_output(dir / "states.json", sj.dump(2) + "\n");
      write_output(dir / "epochs.csv", ep);
      write_output(dir / "power_histogram.csv", phc);
      write_output(dir / "duration_histogram.csv", dhc);
      if (abs_svg) {
        write_output(dir / "power_histogram.svg", svg_chart("Power histogram", "power (W)", "steps", {pps}, true));
        write_output(dir / "duration_histogram.svg", svg_chart("Epoch durations", "duration (steps)", "epochs", dps, true));
      }
      write_run_record(dir / "run.json", "abstract", args, rc, {{"inputs", {abs_input}}});
      out << "states " << K << " (elbow suggests " << elbow.k_elbow << "):";
      for (double c : states.centroids) out << " " << fmt_short(c);
      out << " W; " << all_epochs.size() << " epochs\n";
      return ExitCode::ok;
    }

    // ------------------------------------------------------------------ train
    if (*s_train) {
      const bool fleet = train_inputs.size() > 1;
      usage_require(fleet ? !train_out_dir.empty() : (!train_out.empty() || !train_out_dir.empty()),
                    fleet ? "training several inputs needs --out-dir" : "train needs --out or --out-dir");
      usage_require(!fleet || train_id.empty(), "--id applies to a single input");
      std::vector<fs::path> outs(train_inputs.size());
      for (std::size_t i = 0; i < train_inputs.size(); ++i)
        outs[i] = train_out.empty() ? fs::path(train_out_dir) / (fs::path(train_inputs[i]).stem().string() + ".model.json")
                                    : fs::path(train_out);
      std::vector<fs::path> ins(train_inputs.begin(), train_inputs.end());
      if (exog) ins.push_back(*exog);
      check_outputs(ins, outs);
      const ExogSpec spec = rc.train.z_spec.merged_with(rc.train.w_spec);
      std::vector<ChsmModel> models(train_inputs.size());
      parallel_for(train_inputs.size(), rc.jobs, [&](std::size_t i) {
        const auto segs = load_segments(train_inputs[i], exog, spec, rc.ingest, train_id);
        models[i] = train(segs, rc.train);
      });
      for (std::size_t i = 0; i < models.size(); ++i) {
        const auto& m = models[i];
        save_model(m, (ensure_parent(outs[i]), outs[i]));
        for (const auto& w : m.meta.warnings) err << "warning:" << m.meta.appliance_id << ": " << one_line(w) << "\n";
        out << m.meta.appliance_id << ": " << m.n_states() << " states [";
        for (std::size_t x = 0; x < m.n_states(); ++x) out << (x ? " " : "") << fmt_short(m.states.centroids[x]);
        out << "] W, d_max " << m.d_max << ", " << m.meta.n_transition_samples << " transition and "
            << m.meta.n_duration_samples << " duration samples -> " << outs[i].string() << "\n";
      }
      json extra = {{"inputs", train_inputs}, {"profile", rc.profile}};
      write_run_record(fleet || train_out.empty() ? fs::path(train_out_dir) / "train.run.json" : run_record_path(train_out),
                       "train", args, rc, extra);
      return ExitCode::ok;
    }

    // ------------------------------------------------------------------ predict
    if (*s_pred) {
      if (*o_horizon) rc.horizon = horizon;
      if (*o_pred_policy) rc.exog_policy = parse_exog_policy(pred_policy);
      const ExogPolicy policy = rc.exog_policy.value_or(ExogPolicy::persistence);
      usage_require(policy != ExogPolicy::from_file || !pred_exog_fc.empty(), "from-file policy needs --exog-forecast");
      usage_require(!pred_input.empty() || pred_origin.empty(), "--origin needs --input");
      const ChsmModel m = load_model(pred_model);
      std::optional<ExogTable> fc_table;
      if (!pred_exog_fc.empty()) fc_table = read_exog_csv(pred_exog_fc, rc.ingest.schema.timestamp_column);
      ExogForecastOptions xo{policy, fc_table ? &*fc_table : nullptr, rc.ingest.join.max_gap, rc.ingest.join.utc_offset};
      const std::size_t H = rc.horizon;

      ForecastContext ctx;
      Timestamp origin{};
      Seconds step{60};
      if (pred_input.empty()) {
        auto tc = tail_context(m, H, xo);
        ctx = std::move(tc.ctx);
        origin = tc.origin;
        step = tc.step;
      } else {
        const PowerSeries series = load_single(pred_input, exog, m.z_spec().merged_with(m.w_spec()), rc.ingest,
                                               m.meta.appliance_id);
        std::size_t t = series.size() - 1;
        if (!pred_origin.empty()) {
          const auto ts = parse_timestamp(pred_origin);
          usage_require(ts.has_value(), "malformed --origin '" + pred_origin + "'");
          const auto off = (*ts - series.start).count();
          if (off < 0 || off % series.step.count() != 0 ||
              static_cast<std::size_t>(off / series.step.count()) >= series.size())
            fail(ErrorKind::input, "origin " + pred_origin + " is not a step of the input series");
          t = static_cast<std::size_t>(off / series.step.count());
        }
        const EpochSequence seq = segment(series, m.states);
        ctx = make_context(m, seq, t, H, xo);
        origin = series.time_at(t);
        step = series.step;
      }
      const ForecastResult r = forecast(m, ctx, H);
      std::string csv = "timestamp,power_w_hat\n";
      for (std::size_t h = 1; h <= H; ++h)
        csv += format_timestamp(origin + step * static_cast<long long>(h)) + "," + fmt(r.power_hat[h - 1]) + "\n";
      std::vector<fs::path> ins{pred_model};
      if (!pred_input.empty()) ins.emplace_back(pred_input);
      std::vector<fs::path> outs;
      if (!pred_out.empty()) outs.emplace_back(pred_out);
      if (!pred_chain.empty()) outs.emplace_back(pred_chain);
      check_outputs(ins, outs);
      if (pred_out.empty()) out << csv;
      else write_output(pred_out, csv);
      if (!pred_chain.empty()) {
        json chain = json::array();
        for (const auto& e : r.chain)
          chain.push_back({{"state", e.state},
                           {"duration", e.duration},
                           {"start_offset", e.start},
                           {"start_time", format_timestamp(origin + step * e.start)}});
        write_output(pred_chain, json({{"origin", format_timestamp(origin)},
                                       {"horizon", H},
                                       {"chain", chain},
                                       {"truncated_last", r.truncated_last},
                                       {"elapsed_exceeded", r.elapsed_exceeded}})
                                     .dump(2) +
                                     "\n");
      }
      if (r.elapsed_exceeded)
        err << "warning:" << m.meta.appliance_id << ": elapsed time exceeds the longest duration class\n";
      if (!pred_out.empty())
        write_run_record(run_record_path(pred_out), "predict", args, rc,
                         {{"model", pred_model}, {"input", pred_input}, {"origin", format_timestamp(origin)}});
      return ExitCode::ok;
    }

    // ------------------------------------------------------------------ simulate
    if (*s_sim) {
      usage_require(!sim_kind.empty() || !sim_model.empty(), "simulate needs --kind or --model");
      const bool many = sim_units > 1 || sim_split > 0;
      usage_require(many ? !sim_out_dir.empty() : (!sim_out.empty() || !sim_out_dir.empty()),
                    many ? "fleets and splits need --out-dir" : "simulate needs --out or --out-dir");
      usage_require(sim_split == 0 || sim_split < sim_steps, "--split must be below --steps");
      usage_require(sim_model.empty() || sim_units == 1, "--units applies to fixtures");
      usage_require(gap_days == 0.0 || sim_kind == "ev2", "--anomaly-gap-days applies to ev2");
      Timestamp start = std::chrono::sys_days{std::chrono::year{2024} / 7 / 1};
      if (!sim_start.empty()) {
        const auto ts = parse_timestamp(sim_start);
        usage_require(ts.has_value(), "malformed --start '" + sim_start + "'");
        start = *ts;
      }
      const Seconds step = rc.ingest.step;

      // covariates from a file, when given, replace the synthetic weather
      std::optional<ExogFrame> frame;
      const ChsmModel reference = sim_model.empty() ? fixture_model(parse_fixture_kind(sim_kind)) : load_model(sim_model);
      if (exog) {
        PowerSeries grid;
        grid.start = start;
        grid.step = step;
        grid.power.assign(sim_steps, 0.0);
        frame = join_exog(std::move(grid), *exog, reference.z_spec().merged_with(reference.w_spec()), rc.ingest.join).exog;
      }

      std::vector<SampledTrace> traces;
      if (!sim_model.empty()) {
        SimConfig cfg;
        cfg.model = reference;
        cfg.steps = sim_steps;
        cfg.seed = rc.seed;
        cfg.start = start;
        cfg.step = step;
        cfg.exog = frame;
        cfg.emission_noise = !no_noise;
        cfg.appliance_id = reference.meta.appliance_id.empty() ? "sim" : reference.meta.appliance_id + "-sim";
        traces.push_back(sample_trace(cfg));
      } else {
        const FixtureKind kind = parse_fixture_kind(sim_kind);
        FixtureOptions fo;
        fo.anomaly_gap_days = gap_days;
        fo.anomaly_at = gap_at;
        fo.start = start;
        fo.step = step;
        fo.exog = frame;
        fo.emission_noise = !no_noise;
        if (sim_units == 1) {
          traces.push_back(sample_fixture(kind, rc.seed, sim_steps, fo));
          traces.back().series.appliance_id = sim_kind;
        } else {
          fo.jitter = true;
          if (!fo.exog) {
            const auto m = fixture_model(kind);
            fo.exog = simulated_exog(m.z_spec().merged_with(m.w_spec()), start, step, sim_steps, fo.temperature,
                                     derive_seed(rc.seed, 100));
          }
          traces.resize(sim_units);
          parallel_for(sim_units, rc.jobs, [&](std::size_t i) {
            traces[i] = sample_fixture(kind, derive_seed(rc.seed, 1000 + i), sim_steps, fo);
            char id[32];
            std::snprintf(id, sizeof id, "%s-u%03zu", sim_kind.c_str(), i);
            traces[i].series.appliance_id = id;
          });
        }
      }

      std::vector<fs::path> ins;
      if (!sim_model.empty()) ins.emplace_back(sim_model);
      if (exog) ins.push_back(*exog);
      std::vector<std::string> written;
      auto emit = [&](const fs::path& p, const PowerSeries& s) {
        check_outputs(ins, {p});
        write_output(p, to_csv(s));
        written.push_back(p.string());
      };
      for (const auto& tr : traces) {
        const auto& s = tr.series;
        if (sim_split > 0) {
          auto [a, b] = split_series(s, sim_split);
          emit(fs::path(sim_out_dir) / (s.appliance_id + "-train.csv"), a);
          emit(fs::path(sim_out_dir) / (s.appliance_id + "-test.csv"), b);
        } else if (!sim_out.empty()) {
          emit(sim_out, s);
        } else {
          emit(fs::path(sim_out_dir) / (s.appliance_id + ".csv"), s);
        }
      }
      if (!sim_chain.empty()) {
        usage_require(traces.size() == 1, "--chain applies to a single unit");
        check_outputs(ins, {sim_chain});
        write_output(sim_chain, epochs_csv(traces[0].chain, &traces[0].series));
      }
      const fs::path record =
          !sim_out.empty() ? run_record_path(sim_out) : fs::path(sim_out_dir) / "simulate.run.json";
      write_run_record(record, "simulate", args, rc, {{"outputs", written}});
      out << "wrote " << written.size() << " file" << (written.size() == 1 ? "" : "s") << " of " << sim_steps
          << " steps\n";
      return ExitCode::ok;
    }

    // ------------------------------------------------------------------ evaluate / detect-anomalies
    if (*s_eval || *s_anom) {
      const bool detect = s_anom->parsed();
      std::vector<std::pair<fs::path, fs::path>> pairs;
      usage_require(eval_models.size() == eval_tests.size(), "--model and --test must be given the same number of times");
      for (std::size_t i = 0; i < eval_models.size(); ++i) pairs.emplace_back(eval_models[i], eval_tests[i]);
      if (!manifest.empty()) {
        const CsvTable t = read_csv(manifest);
        const auto mc = t.column("model"), tc = t.column("test");
        const fs::path base = fs::path(manifest).parent_path();
        for (const auto& row : t.rows) pairs.emplace_back(base / row[mc], base / row[tc]);
      }
      usage_require(!pairs.empty(), "no appliances given; use --model/--test or --manifest");
      for (auto* o : eval_opts) {
        if (!*o) continue;
        if (o->get_name() == "--origin-spacing") rc.origin_spacing = spacing;
        if (o->get_name() == "--exog-policy") rc.exog_policy = parse_exog_policy(eval_policy);
      }
      if (!detect && *o_h) rc.horizons = horizons;
      if (!detect && *o_g) rc.group_sizes = group_sizes;
      if (detect && *o_kmad) rc.anomaly.k_mad = k_mad;
      if (detect && *o_margin) rc.anomaly.duration_margin = margin;
      if (detect && *o_ah) rc.anomaly.horizon = anomaly_h;
      const ExogPolicy policy = rc.exog_policy.value_or(ExogPolicy::observed);
      usage_require(policy != ExogPolicy::from_file || !eval_exog_fc.empty(), "from-file policy needs --exog-forecast");

      std::vector<ChsmModel> models(pairs.size());
      std::vector<PowerSeries> tests(pairs.size());
      parallel_for(pairs.size(), rc.jobs, [&](std::size_t i) {
        models[i] = load_model(pairs[i].first);
        tests[i] = load_single(pairs[i].second, exog, models[i].z_spec().merged_with(models[i].w_spec()), rc.ingest,
                               models[i].meta.appliance_id);
      });
      std::optional<ExogTable> fc_table;
      if (!eval_exog_fc.empty()) fc_table = read_exog_csv(eval_exog_fc, rc.ingest.schema.timestamp_column);
      EvalOptions eo;
      eo.origin_spacing = rc.origin_spacing;
      eo.exog = {policy, fc_table ? &*fc_table : nullptr, rc.ingest.join.max_gap, rc.ingest.join.utc_offset};
      eo.jobs = rc.jobs;

      std::vector<fs::path> ins;
      for (const auto& [a, b] : pairs) ins.push_back(a), ins.push_back(b);
      const std::string prefix = eval_prefix;
      auto out_path = [&](const std::string& suffix) { return fs::path(prefix + suffix); };
      json inputs = json::array();
      for (const auto& [a, b] : pairs) inputs.push_back({{"model", a.string()}, {"test", b.string()}});

      if (!detect) {
        const EvaluationReport report = sweep(models, tests, rc.horizons, rc.group_sizes, eo);
        check_outputs(ins, {out_path(".csv"), out_path(".json"), out_path("-curves.csv")});
        write_output(out_path(".csv"), report_csv(report));
        write_output(out_path(".json"), report_json(report).dump(2) + "\n");
        write_output(out_path("-curves.csv"), curves_csv(report));
        if (eval_svg) {
          std::vector<PlotSeries> by_n;
          std::vector<std::size_t> sizes;
          for (const auto& a : report.aggregates)
            if (std::find(sizes.begin(), sizes.end(), a.group_size) == sizes.end()) sizes.push_back(a.group_size);
          std::vector<std::size_t> hs = rc.horizons;
          std::sort(hs.begin(), hs.end());
          PlotSeries ind{"individual", {}, {}};
          for (auto H : hs) {
            ind.x.push_back(static_cast<double>(H));
            ind.y.push_back(report.mean_individual(H));
          }
          by_n.push_back(ind);
          for (auto N : sizes) {
            PlotSeries s{"N=" + std::to_string(N), {}, {}};
            for (auto H : hs) {
              s.x.push_back(static_cast<double>(H));
              s.y.push_back(report.mean_aggregate(N, H));
            }
            by_n.push_back(std::move(s));
          }
          write_output(out_path("-curves.svg"), svg_chart("NRMSE by horizon", "horizon (steps)", "NRMSE", by_n));
        }
        for (const auto& w : report.warnings) err << "warning:" << one_line(w) << "\n";
        for (auto H : rc.horizons) {
          out << "H=" << H;
          try {
            out << " individual " << fmt_short(report.mean_individual(H));
          } catch (const Error&) {
          }
          for (auto N : rc.group_sizes) try {
              out << " N" << N << " " << fmt_short(report.mean_aggregate(N, H));
            } catch (const Error&) {
            }
          out << "\n";
        }
        write_run_record(run_record_path(out_path(".json")), "evaluate", args, rc, {{"inputs", inputs}});
        return ExitCode::ok;
      }

      const std::size_t H = rc.anomaly.horizon ? rc.anomaly.horizon : rc.horizon;
      const std::size_t hs[] = {H};
      EvaluationReport report = sweep(models, tests, hs, {}, eo);
      std::vector<EpochSequence> epochs(models.size());
      for (std::size_t i = 0; i < models.size(); ++i) epochs[i] = segment(tests[i], models[i].states);
      AnomalyOptions ao = rc.anomaly;
      ao.horizon = H;
      const auto anomalies = detect_anomalies(report, models, epochs, ao);
      check_outputs(ins, {out_path(".csv"), out_path(".json")});
      write_output(out_path(".csv"), anomalies_csv(anomalies));
      write_output(out_path(".json"), report_json(report).dump(2) + "\n");
      for (const auto& w : report.warnings) err << "warning:" << one_line(w) << "\n";
      for (const auto& a : anomalies) out << a.appliance_id << " " << to_string(a.reason) << ": " << a.detail << "\n";
      out << "flagged " << anomalies.size() << " of " << models.size() << " appliances\n";
      write_run_record(run_record_path(out_path(".json")), "detect-anomalies", args, rc, {{"inputs", inputs}});
      return ExitCode::ok;
    }
    err << "error:usage:no subcommand\n";
    return ExitCode::usage;
  } catch (const UsageError& e) {
    err << "error:usage:" << one_line(e.what()) << "\n";
    return ExitCode::usage;
  } catch (const Error& e) {
    err << "error:" << to_string(e.kind()) << ":" << one_line(e.what()) << "\n";
    return e.kind() == ErrorKind::version ? ExitCode::version : ExitCode::data;
  } catch (const fs::filesystem_error& e) {
    err << "error:io-error:" << one_line(e.what()) << "\n";
    return ExitCode::other;
  } catch (const std::exception& e) {
    err << "error:internal:" << one_line(e.what()) << "\n";
    return ExitCode::other;
  }
}

}  // namespace chsmm::cli

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "chsmm/csv.hpp"
#include "chsmm/error.hpp"
#include "chsmm/model.hpp"

namespace chsmm {

inline constexpr const char* model_file_type = "chsmm-model";
inline constexpr int model_file_version = 1;

namespace io {

using nlohmann::json;

inline json to_json(const ExogSpec& spec) {
  json arr = json::array();
  for (const auto& f : spec.features)
    arr.push_back({{"name", f.name},
                   {"source", to_string(f.source)},
                   {"encoding", to_string(f.encoding)},
                   {"column", f.column},
                   {"fahrenheit", f.fahrenheit}});
  return arr;
}

inline ExogSpec exog_spec_from_json(const json& j) {
  ExogSpec spec;
  for (const auto& f : j) {
    ExogFeature feat;
    feat.name = f.at("name").get<std::string>();
    feat.source = parse_exog_source(f.at("source").get<std::string>());
    feat.encoding = parse_exog_encoding(f.at("encoding").get<std::string>());
    feat.column = f.value("column", std::string{});
    feat.fahrenheit = f.value("fahrenheit", false);
    spec.features.push_back(std::move(feat));
  }
  return spec;
}

inline json to_json(const Variant& v) {
  return {{"pooling", v.pooling == Pooling::pooled ? "pooled" : "state-specific"},
          {"weighted", v.weighted},
          {"weight_a", v.weight_a},
          {"conditioning", v.conditioning == Conditioning::chsmm ? "chsmm" : "hsmm-baseline"},
          {"state_encoding", v.state_encoding == StateEncoding::one_hot ? "one-hot" : "scalar"},
          {"shared_sigma", v.shared_sigma}};
}

inline Pooling parse_pooling(const std::string& s) {
  if (s == "pooled") return Pooling::pooled;
  if (s == "state-specific") return Pooling::state_specific;
  fail(ErrorKind::input, "unknown pooling '" + s + "'");
}
inline Conditioning parse_conditioning(const std::string& s) {
  if (s == "chsmm") return Conditioning::chsmm;
  if (s == "hsmm-baseline" || s == "hsmm") return Conditioning::hsmm_baseline;
  fail(ErrorKind::input, "unknown conditioning '" + s + "'");
}
inline StateEncoding parse_state_encoding(const std::string& s) {
  if (s == "one-hot") return StateEncoding::one_hot;
  if (s == "scalar") return StateEncoding::scalar;
  fail(ErrorKind::input, "unknown state encoding '" + s + "'");
}

inline Variant variant_from_json(const json& j) {
  Variant v;
  v.pooling = parse_pooling(j.at("pooling").get<std::string>());
  v.weighted = j.at("weighted").get<bool>();
  v.weight_a = j.at("weight_a").get<long long>();
  v.conditioning = parse_conditioning(j.at("conditioning").get<std::string>());
  v.state_encoding = parse_state_encoding(j.at("state_encoding").get<std::string>());
  v.shared_sigma = j.at("shared_sigma").get<bool>();
  return v;
}

inline json to_json(const MnlrModel& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.coeffs.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.coeffs.cols(); ++c) row.push_back(m.coeffs(r, c));
    rows.push_back(std::move(row));
  }
  return {{"n_classes", m.n_classes}, {"n_features", m.n_features}, {"coeffs", rows},
          {"class_labels", m.class_labels}, {"l2", m.l2}, {"iterations", m.iterations},
          {"converged", m.converged}};
}

inline MnlrModel mnlr_from_json(const json& j) {
  MnlrModel m;
  m.n_classes = j.at("n_classes").get<std::size_t>();
  m.n_features = j.at("n_features").get<std::size_t>();
  const auto& rows = j.at("coeffs");
  if (rows.size() != m.n_classes) fail(ErrorKind::load, "coefficient matrix has wrong row count");
  m.coeffs.resize(static_cast<Eigen::Index>(m.n_classes), static_cast<Eigen::Index>(m.n_features + 1));
  for (std::size_t r = 0; r < m.n_classes; ++r) {
    if (rows[r].size() != m.n_features + 1) fail(ErrorKind::load, "coefficient matrix has wrong column count");
    for (std::size_t c = 0; c <= m.n_features; ++c)
      m.coeffs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
  }
  m.class_labels = j.at("class_labels").get<std::vector<std::size_t>>();
  m.l2 = j.at("l2").get<double>();
  m.iterations = j.at("iterations").get<std::size_t>();
  m.converged = j.at("converged").get<bool>();
  return m;
}

inline json pairs_to_json(const std::vector<std::pair<std::string, double>>& v) {
  json arr = json::array();
  for (const auto& [k, x] : v) arr.push_back({k, x});
  return arr;
}

inline std::vector<std::pair<std::string, double>> pairs_from_json(const json& j) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& e : j) out.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
  return out;
}

}  // namespace io

/// Canonical JSON document for a model. Doubles are written with
/// round-trip precision, so loading reproduces every numeric field bitwise.
inline nlohmann::json model_to_json(const ChsmModel& m) {
  using io::json;
  const auto& fe = m.features;
  json state_models = json::array(), dur_models = json::array();
  for (const auto& s : m.state_mnlr) state_models.push_back(io::to_json(s));
  for (const auto& s : m.dur_mnlr) dur_models.push_back(io::to_json(s));
  std::vector<int> keep(fe.z_keep.begin(), fe.z_keep.end());
  const auto& t = m.meta.tail;
  return {
      {"type", model_file_type},
      {"version", model_file_version},
      {"centroids", m.states.centroids},
      {"d_max", m.d_max},
      {"variant", io::to_json(m.variant)},
      {"features",
       {{"d_mean", fe.d_mean}, {"d_scale", fe.d_scale}, {"z_spec", io::to_json(fe.z_spec)},
        {"z_mean", fe.z_mean}, {"z_scale", fe.z_scale}, {"z_keep", keep}}},
      {"state_mnlr", state_models},
      {"dur_mnlr", dur_models},
      {"emission",
       {{"gamma", m.emission.gamma}, {"phi", m.emission.phi}, {"w_center", m.emission.w_center},
        {"sigma", m.emission.sigma}, {"w_spec", io::to_json(m.emission.w_spec)}}},
      {"initial", m.initial.probs},
      {"max_duration_per_state", m.max_duration_per_state},
      {"training_meta",
       {{"appliance_id", m.meta.appliance_id},
        {"period_start", m.meta.period_start},
        {"period_end", m.meta.period_end},
        {"seed", m.meta.seed},
        {"n_transition_samples", m.meta.n_transition_samples},
        {"n_duration_samples", m.meta.n_duration_samples},
        {"warnings", m.meta.warnings},
        {"tail",
         {{"valid", t.valid}, {"x_prev", t.x_prev}, {"d_prev", t.d_prev}, {"x_curr", t.x_curr},
          {"elapsed", t.elapsed}, {"last_time", t.last_time}, {"step_seconds", t.step_seconds},
          {"last_exog", io::pairs_to_json(t.last_exog)}, {"epoch_exog", io::pairs_to_json(t.epoch_exog)}}}}},
  };
}

inline ChsmModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("type", std::string{}) != model_file_type)
    fail(ErrorKind::load, "not a model file");
  if (!j.contains("version") || !j["version"].is_number_integer()) fail(ErrorKind::load, "model file has no version");
  const int version = j["version"].get<int>();
  if (version != model_file_version)
    fail(ErrorKind::version, "model file version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(model_file_version) + ")");
  try {
    ChsmModel m;
    m.states.centroids = j.at("centroids").get<std::vector<double>>();
    m.states.validate();
    m.d_max = j.at("d_max").get<std::size_t>();
    m.variant = io::variant_from_json(j.at("variant"));
    const auto& f = j.at("features");
    auto& fe = m.features;
    fe.n_states = m.states.size();
    fe.state_encoding = m.variant.state_encoding;
    fe.pooling = m.variant.pooling;
    fe.d_mean = f.at("d_mean").get<double>();
    fe.d_scale = f.at("d_scale").get<double>();
    fe.z_spec = io::exog_spec_from_json(f.at("z_spec"));
    fe.z_mean = f.at("z_mean").get<std::vector<double>>();
    fe.z_scale = f.at("z_scale").get<std::vector<double>>();
    for (int k : f.at("z_keep").get<std::vector<int>>()) fe.z_keep.push_back(k != 0);
    for (const auto& s : j.at("state_mnlr")) m.state_mnlr.push_back(io::mnlr_from_json(s));
    for (const auto& s : j.at("dur_mnlr")) m.dur_mnlr.push_back(io::mnlr_from_json(s));
    const auto& e = j.at("emission");
    m.emission.gamma = e.at("gamma").get<std::vector<double>>();
    m.emission.phi = e.at("phi").get<std::vector<std::vector<double>>>();
    m.emission.w_center = e.at("w_center").get<std::vector<std::vector<double>>>();
    m.emission.sigma = e.at("sigma").get<std::vector<double>>();
    m.emission.w_spec = io::exog_spec_from_json(e.at("w_spec"));
    m.initial.n_states = m.states.size();
    m.initial.d_max = m.d_max;
    m.initial.probs = j.at("initial").get<std::vector<double>>();
    m.max_duration_per_state = j.at("max_duration_per_state").get<std::vector<std::size_t>>();
    const auto& meta = j.at("training_meta");
    m.meta.appliance_id = meta.at("appliance_id").get<std::string>();
    m.meta.period_start = meta.at("period_start").get<std::string>();
    m.meta.period_end = meta.at("period_end").get<std::string>();
    m.meta.seed = meta.at("seed").get<std::uint64_t>();
    m.meta.n_transition_samples = meta.at("n_transition_samples").get<std::size_t>();
    m.meta.n_duration_samples = meta.at("n_duration_samples").get<std::size_t>();
    m.meta.warnings = meta.at("warnings").get<std::vector<std::string>>();
    const auto& t = meta.at("tail");
    auto& tail = m.meta.tail;
    tail.valid = t.at("valid").get<bool>();
    tail.x_prev = t.at("x_prev").get<std::size_t>();
    tail.d_prev = t.at("d_prev").get<std::size_t>();
    tail.x_curr = t.at("x_curr").get<std::size_t>();
    tail.elapsed = t.at("elapsed").get<std::size_t>();
    tail.last_time = t.at("last_time").get<std::int64_t>();
    tail.step_seconds = t.at("step_seconds").get<std::int64_t>();
    tail.last_exog = io::pairs_from_json(t.at("last_exog"));
    tail.epoch_exog = io::pairs_from_json(t.at("epoch_exog"));

    // structural checks
    const std::size_t N = m.states.size();
    const std::size_t n_models = m.variant.pooling == Pooling::pooled ? 1 : N;
    if (m.d_max < 1 || m.state_mnlr.size() != n_models || m.dur_mnlr.size() != n_models)
      fail(ErrorKind::load, "model structure does not match its variant");
    for (const auto& s : m.state_mnlr)
      if (s.n_classes != N || s.n_features != fe.transition_dim()) fail(ErrorKind::load, "transition model shape");
    for (const auto& s : m.dur_mnlr)
      if (s.n_classes != m.d_max || s.n_features != fe.duration_dim()) fail(ErrorKind::load, "duration model shape");
    if (fe.z_mean.size() != fe.z_spec.encoded_dim() || fe.z_scale.size() != fe.z_mean.size() ||
        fe.z_keep.size() != fe.z_mean.size())
      fail(ErrorKind::load, "covariate scaling shape");
    const std::size_t wd = m.emission.w_spec.encoded_dim();
    if (m.emission.gamma.size() != N || m.emission.sigma.size() != N || m.emission.phi.size() != N ||
        m.emission.w_center.size() != N)
      fail(ErrorKind::load, "emission shape");
    for (std::size_t x = 0; x < N; ++x)
      if (m.emission.phi[x].size() != wd || m.emission.w_center[x].size() != wd)
        fail(ErrorKind::load, "emission coefficient shape");
    if (m.initial.probs.size() != N * m.d_max) fail(ErrorKind::load, "initial distribution shape");
    if (m.max_duration_per_state.size() != N) fail(ErrorKind::load, "per-state duration shape");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::load, std::string("malformed model file: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::load) throw;
    fail(ErrorKind::load, std::string("malformed model file: ") + e.what());
  }
}

inline std::string serialize_model(const ChsmModel& m) { return model_to_json(m).dump(1) + "\n"; }

inline ChsmModel deserialize_model(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::load, std::string("corrupt model file: ") + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const ChsmModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(m));
}

inline ChsmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::load, "cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace chsmm

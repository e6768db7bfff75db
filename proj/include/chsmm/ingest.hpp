#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "chsmm/csv.hpp"
#include "chsmm/error.hpp"
#include "chsmm/time.hpp"

namespace chsmm {

/// Named covariate columns, each aligned 1:1 with a power sequence.
using ExogFrame = std::map<std::string, std::vector<double>>;

/// Uniformly sampled real-power trajectory with aligned covariates.
struct PowerSeries {
  std::string appliance_id;
  Timestamp start{};
  Seconds step{60};
  std::vector<double> power;  // W
  ExogFrame exog;

  [[nodiscard]] std::size_t size() const { return power.size(); }
  [[nodiscard]] Timestamp time_at(std::size_t i) const { return start + step * static_cast<long long>(i); }

  /// Throws ErrorKind::input when an invariant does not hold.
  void validate() const {
    require(!power.empty(), "power series is empty");
    require(step.count() > 0, "step must be positive");
    for (std::size_t i = 0; i < power.size(); ++i)
      require(std::isfinite(power[i]) && power[i] >= 0.0,
              "power at index " + std::to_string(i) + " is negative or not finite");
    for (const auto& [name, col] : exog)
      require(col.size() == power.size(), "exogenous column '" + name + "' length mismatch");
  }
};

// ---------------------------------------------------------------------------
// Exogenous feature specification

enum class ExogSource { column, hour_of_day };
enum class ExogEncoding { raw, sin_cos, one_hot_24 };

struct ExogFeature {
  std::string name;
  ExogSource source = ExogSource::column;
  ExogEncoding encoding = ExogEncoding::raw;
  std::string column;      // source column in the exogenous file; empty = name
  bool fahrenheit = false;  // convert to °C on join

  [[nodiscard]] std::size_t encoded_dim() const {
    switch (encoding) {
      case ExogEncoding::raw: return 1;
      case ExogEncoding::sin_cos: return 2;
      case ExogEncoding::one_hot_24: return 24;
    }
    return 0;
  }
  [[nodiscard]] const std::string& source_column() const { return column.empty() ? name : column; }
  friend bool operator==(const ExogFeature&, const ExogFeature&) = default;
};

struct ExogSpec {
  std::vector<ExogFeature> features;

  [[nodiscard]] std::size_t encoded_dim() const {
    std::size_t d = 0;
    for (const auto& f : features) d += f.encoded_dim();
    return d;
  }
  [[nodiscard]] bool empty() const { return features.empty(); }

  void validate() const {
    for (std::size_t i = 0; i < features.size(); ++i)
      for (std::size_t j = i + 1; j < features.size(); ++j)
        require(features[i].name != features[j].name, "duplicate exogenous feature '" + features[i].name + "'");
  }

  /// Union of two specs by feature name, first occurrence wins.
  [[nodiscard]] ExogSpec merged_with(const ExogSpec& other) const {
    ExogSpec out = *this;
    for (const auto& f : other.features) {
      const bool seen = std::any_of(out.features.begin(), out.features.end(),
                                    [&](const ExogFeature& g) { return g.name == f.name; });
      if (!seen) out.features.push_back(f);
    }
    return out;
  }
  friend bool operator==(const ExogSpec&, const ExogSpec&) = default;
};

inline const char* to_string(ExogSource s) { return s == ExogSource::column ? "column" : "hour-of-day"; }
inline const char* to_string(ExogEncoding e) {
  switch (e) {
    case ExogEncoding::raw: return "raw";
    case ExogEncoding::sin_cos: return "sin-cos";
    case ExogEncoding::one_hot_24: return "one-hot-24";
  }
  return "?";
}
inline ExogSource parse_exog_source(const std::string& s) {
  if (s == "column") return ExogSource::column;
  if (s == "hour-of-day" || s == "derived-hour-of-day") return ExogSource::hour_of_day;
  fail(ErrorKind::input, "unknown exogenous source '" + s + "'");
}
inline ExogEncoding parse_exog_encoding(const std::string& s) {
  if (s == "raw") return ExogEncoding::raw;
  if (s == "sin-cos") return ExogEncoding::sin_cos;
  if (s == "one-hot-24") return ExogEncoding::one_hot_24;
  fail(ErrorKind::input, "unknown exogenous encoding '" + s + "'");
}

/// Appends the encoding of one raw feature value to out.
inline void encode_feature_value(const ExogFeature& f, double value, std::vector<double>& out) {
  switch (f.encoding) {
    case ExogEncoding::raw: out.push_back(value); break;
    case ExogEncoding::sin_cos: {
      // hour-of-day values are fractions of a day; raw columns are taken as-is
      const double angle = 2.0 * std::numbers::pi * value;
      out.push_back(std::sin(angle));
      out.push_back(std::cos(angle));
      break;
    }
    case ExogEncoding::one_hot_24: {
      const double frac = value - std::floor(value);
      const auto hour = std::min<std::size_t>(23, static_cast<std::size_t>(frac * 24.0));
      for (std::size_t h = 0; h < 24; ++h) out.push_back(h == hour ? 1.0 : 0.0);
      break;
    }
  }
}

/// Encodes row i of a frame according to spec.
inline std::vector<double> encode_row(const ExogSpec& spec, const ExogFrame& frame, std::size_t i) {
  std::vector<double> out;
  out.reserve(spec.encoded_dim());
  for (const auto& f : spec.features) {
    const auto it = frame.find(f.name);
    if (it == frame.end()) fail(ErrorKind::input, "exogenous feature '" + f.name + "' missing from data");
    if (i >= it->second.size()) fail(ErrorKind::input, "exogenous feature '" + f.name + "' too short");
    encode_feature_value(f, it->second[i], out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loading and regularization

struct CsvSchema {
  std::string timestamp_column = "timestamp";
  std::string power_column = "power_w";
  double power_scale = 1.0;  // multiply raw values to obtain W (1000 for kW input)
};

struct GapPolicy {
  std::size_t max_gap_steps = 5;  // gaps up to this many missing steps are held
};

struct TimedValue {
  Timestamp t;
  double value;
};

/// Contiguous stretch of regular samples.
struct RegularSegment {
  Timestamp start;
  std::vector<double> values;
};

/// Sorts, collapses duplicate timestamps by mean, bins onto the step grid
/// (bin mean), holds the last value across short gaps and splits on long ones.
inline std::vector<RegularSegment> regularize(std::vector<TimedValue> samples, Seconds step, GapPolicy gap) {
  using namespace std::chrono;
  require(step.count() > 0, "step must be positive");
  if (samples.empty()) fail(ErrorKind::empty_input, "no samples");
  std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.t < b.t; });

  const auto bin_of = [&](Timestamp t) {
    const long long s = t.time_since_epoch().count();
    const long long q = step.count();
    return s >= 0 ? s / q : -((-s + q - 1) / q);
  };

  // duplicates first, then bins; with step equal to the native cadence these coincide
  std::vector<TimedValue> dedup;
  dedup.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < samples.size() && samples[j].t == samples[i].t) sum += samples[j++].value;
    dedup.push_back({samples[i].t, sum / static_cast<double>(j - i)});
    i = j;
  }

  std::vector<std::pair<long long, double>> bins;
  for (std::size_t i = 0; i < dedup.size();) {
    const long long b = bin_of(dedup[i].t);
    std::size_t j = i;
    double sum = 0.0;
    while (j < dedup.size() && bin_of(dedup[j].t) == b) sum += dedup[j++].value;
    bins.emplace_back(b, sum / static_cast<double>(j - i));
    i = j;
  }

  std::vector<RegularSegment> out;
  RegularSegment cur{Timestamp{seconds{bins.front().first * step.count()}}, {bins.front().second}};
  for (std::size_t i = 1; i < bins.size(); ++i) {
    const long long missing = bins[i].first - bins[i - 1].first - 1;
    if (missing > static_cast<long long>(gap.max_gap_steps)) {
      out.push_back(std::move(cur));
      cur = RegularSegment{Timestamp{seconds{bins[i].first * step.count()}}, {}};
    } else {
      for (long long m = 0; m < missing; ++m) cur.values.push_back(cur.values.back());
    }
    cur.values.push_back(bins[i].second);
  }
  out.push_back(std::move(cur));
  return out;
}

/// Hold-last-value fill over a sequence with missing entries; runs of more than
/// max_gap missing entries split the output. Leading missing entries are dropped.
inline std::vector<std::vector<double>> fill_gaps(const std::vector<std::optional<double>>& values,
                                                  std::size_t max_gap) {
  std::vector<std::vector<double>> out;
  std::vector<double> cur;
  std::size_t missing = 0;
  for (const auto& v : values) {
    if (!v) {
      ++missing;
      continue;
    }
    if (!cur.empty()) {
      if (missing > max_gap) {
        out.push_back(std::move(cur));
        cur.clear();
      } else {
        for (std::size_t m = 0; m < missing; ++m) cur.push_back(cur.back());
      }
    }
    missing = 0;
    cur.push_back(*v);
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Block-mean down-sampling by an integer factor; a trailing partial block is dropped.
inline PowerSeries downsample(const PowerSeries& s, std::size_t factor) {
  require(factor >= 1, "downsample factor must be >= 1");
  PowerSeries out;
  out.appliance_id = s.appliance_id;
  out.start = s.start;
  out.step = s.step * static_cast<long long>(factor);
  const std::size_t n = s.size() / factor;
  const auto block_mean = [&](const std::vector<double>& v, std::size_t b) {
    double sum = 0.0;
    for (std::size_t k = 0; k < factor; ++k) sum += v[b * factor + k];
    return sum / static_cast<double>(factor);
  };
  for (std::size_t b = 0; b < n; ++b) out.power.push_back(block_mean(s.power, b));
  for (const auto& [name, col] : s.exog) {
    auto& dst = out.exog[name];
    for (std::size_t b = 0; b < n; ++b) dst.push_back(block_mean(col, b));
  }
  return out;
}

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Loads a power CSV into gap-split regular segments.
inline std::vector<PowerSeries> load_csv_segments(const std::filesystem::path& path, const CsvSchema& schema,
                                                  Seconds step, GapPolicy gap = {},
                                                  std::string appliance_id = {}) {
  const CsvTable table = read_csv(path);
  const std::size_t ts_col = table.column(schema.timestamp_column);
  const std::size_t p_col = table.column(schema.power_column);
  std::vector<TimedValue> samples;
  samples.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto row_label = "row " + std::to_string(table.line_numbers[r]);
    const auto ts = parse_timestamp(table.rows[r][ts_col]);
    if (!ts) fail(ErrorKind::parse, row_label + ": malformed timestamp '" + table.rows[r][ts_col] + "'");
    const auto p = detail::parse_double(table.rows[r][p_col]);
    if (!p || !std::isfinite(*p))
      fail(ErrorKind::parse, row_label + ": invalid power value '" + table.rows[r][p_col] + "'");
    // small negative readings are meter offset, not reverse flow
    samples.push_back({*ts, std::max(0.0, *p * schema.power_scale)});
  }
  if (appliance_id.empty()) appliance_id = path.stem().string();
  std::vector<PowerSeries> out;
  for (auto& seg : regularize(std::move(samples), step, gap)) {
    PowerSeries s;
    s.appliance_id = appliance_id;
    s.start = seg.start;
    s.step = step;
    s.power = std::move(seg.values);
    out.push_back(std::move(s));
  }
  return out;
}

/// Single-segment load; a gap longer than the policy allows is an error here.
inline PowerSeries load_csv(const std::filesystem::path& path, const CsvSchema& schema, Seconds step,
                            GapPolicy gap = {}, std::string appliance_id = {}) {
  auto segs = load_csv_segments(path, schema, step, gap, std::move(appliance_id));
  if (segs.size() > 1)
    fail(ErrorKind::alignment, path.string() + ": gap after " + format_timestamp(segs[0].time_at(segs[0].size() - 1)) +
                                   " exceeds max-gap; use load_csv_segments");
  return std::move(segs.front());
}

// ---------------------------------------------------------------------------
// Exogenous join

/// Timestamped covariate table with NaN for missing cells.
struct ExogTable {
  std::vector<Timestamp> times;
  ExogFrame columns;
};

inline ExogTable read_exog_csv(const std::filesystem::path& path, const std::string& timestamp_column = "timestamp") {
  const CsvTable table = read_csv(path);
  const std::size_t ts_col = table.column(timestamp_column);
  std::vector<std::size_t> order(table.rows.size());
  std::vector<Timestamp> times(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto ts = parse_timestamp(table.rows[r][ts_col]);
    if (!ts) fail(ErrorKind::parse, "row " + std::to_string(table.line_numbers[r]) + ": malformed timestamp");
    times[r] = *ts;
    order[r] = r;
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });
  ExogTable out;
  for (auto r : order) out.times.push_back(times[r]);
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == ts_col) continue;
    auto& col = out.columns[table.header[c]];
    for (auto r : order) {
      const auto v = detail::parse_double(table.rows[r][c]);
      col.push_back(v && std::isfinite(*v) ? *v : std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

struct JoinOptions {
  Seconds max_gap{2 * 3600};  // largest interpolation span tolerated in the covariate data
  std::chrono::minutes utc_offset{0};  // applied to derived hour-of-day
};

/// Linear interpolation of one covariate column at the given times.
inline std::vector<double> interpolate_column(const std::vector<Timestamp>& times, const std::vector<double>& values,
                                              const std::vector<Timestamp>& at, Seconds max_gap,
                                              const std::string& name) {
  std::vector<Timestamp> t;
  std::vector<double> v;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (!std::isnan(values[i])) {
      if (!t.empty() && t.back() == times[i]) {
        v.back() = 0.5 * (v.back() + values[i]);
        continue;
      }
      t.push_back(times[i]);
      v.push_back(values[i]);
    }
  if (t.empty()) fail(ErrorKind::alignment, "exogenous column '" + name + "' has no values");
  std::vector<double> out(at.size());
  std::size_t j = 0;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const Timestamp x = at[i];
    while (j + 1 < t.size() && t[j + 1] <= x) ++j;
    if (x < t.front()) {
      if (t.front() - x > max_gap)
        fail(ErrorKind::alignment, "'" + name + "' does not cover " + format_timestamp(x) + " (data starts " +
                                       format_timestamp(t.front()) + ")");
      out[i] = v.front();
    } else if (j + 1 >= t.size()) {
      if (x - t.back() > max_gap)
        fail(ErrorKind::alignment, "'" + name + "' does not cover " + format_timestamp(x) + " (data ends " +
                                       format_timestamp(t.back()) + ")");
      out[i] = v.back();
    } else {
      const auto span = t[j + 1] - t[j];
      if (span > max_gap)
        fail(ErrorKind::alignment, "'" + name + "' gap from " + format_timestamp(t[j]) + " to " +
                                       format_timestamp(t[j + 1]) + " exceeds max-gap");
      const double frac = static_cast<double>((x - t[j]).count()) / static_cast<double>(span.count());
      out[i] = v[j] + frac * (v[j + 1] - v[j]);
    }
  }
  return out;
}

/// Adds derived hour-of-day columns for every hour_of_day feature in spec.
inline PowerSeries add_derived_features(PowerSeries series, const ExogSpec& spec,
                                        std::chrono::minutes utc_offset = std::chrono::minutes{0}) {
  for (const auto& f : spec.features) {
    if (f.source != ExogSource::hour_of_day) continue;
    auto& col = series.exog[f.name];
    col.resize(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) col[i] = hour_fraction(series.time_at(i), utc_offset);
  }
  return series;
}

inline PowerSeries join_exog(PowerSeries series, const ExogTable& table, const ExogSpec& spec,
                             const JoinOptions& opts = {}) {
  spec.validate();
  std::vector<Timestamp> at(series.size());
  for (std::size_t i = 0; i < at.size(); ++i) at[i] = series.time_at(i);
  for (const auto& f : spec.features) {
    if (f.source != ExogSource::column) continue;
    const auto it = table.columns.find(f.source_column());
    if (it == table.columns.end())
      fail(ErrorKind::input, "exogenous column '" + f.source_column() + "' not in exogenous data");
    auto col = interpolate_column(table.times, it->second, at, opts.max_gap, f.name);
    if (f.fahrenheit)
      for (auto& v : col) v = (v - 32.0) * 5.0 / 9.0;
    series.exog[f.name] = std::move(col);
  }
  return add_derived_features(std::move(series), spec, opts.utc_offset);
}

inline PowerSeries join_exog(PowerSeries series, const std::filesystem::path& exog_path, const ExogSpec& spec,
                             const JoinOptions& opts = {}) {
  bool needs_file = false;
  for (const auto& f : spec.features) needs_file |= f.source == ExogSource::column;
  if (!needs_file) return add_derived_features(std::move(series), spec, opts.utc_offset);
  return join_exog(std::move(series), read_exog_csv(exog_path), spec, opts);
}

/// Writes the standard ingest schema: timestamp, power_w, then exogenous columns.
inline std::string to_csv(const PowerSeries& s, bool include_exog = true) {
  std::string out = "timestamp,power_w";
  std::vector<const std::vector<double>*> cols;
  if (include_exog)
    for (const auto& [name, col] : s.exog) {
      out += "," + name;
      cols.push_back(&col);
    }
  out += "\n";
  char buf[64];
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += format_timestamp(s.time_at(i));
    std::snprintf(buf, sizeof buf, ",%.17g", s.power[i]);
    out += buf;
    for (const auto* c : cols) {
      std::snprintf(buf, sizeof buf, ",%.17g", (*c)[i]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace chsmm

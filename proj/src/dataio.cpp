#include "scatterfusion/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "scatterfusion/errors.hpp"
#include "scatterfusion/rng.hpp"
#include "scatterfusion/scattering.hpp"

namespace scatterfusion {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool parse_double(const std::string& raw, double& out) {
  const std::string s = trim(raw);
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

bool parse_timestamp(const std::string& raw, double& out) {
  const std::string s = trim(raw);
  if (parse_double(s, out)) return std::isfinite(out);
  static const char* kFormats[] = {"%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S",
                                   "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M", "%Y-%m-%d"};
  for (const char* fmt : kFormats) {
    std::tm tm = {};
    std::istringstream ss(s);
    ss >> std::get_time(&tm, fmt);
    if (!ss.fail() && ss.peek() == EOF) {
      out = static_cast<double>(timegm(&tm));
      return true;
    }
  }
  return false;
}

bool looks_like_time_column(const std::string& name) {
  const std::string n = lower(trim(name));
  return n == "date" || n == "time" || n == "timestamp" || n == "datetime" || n == "ds";
}

[[noreturn]] void cell_error(const std::string& path, long line,
                             const std::string& column, const std::string& why) {
  throw DataError("csv " + path + ": line " + std::to_string(line) + ", column '" +
                  column + "': " + why);
}

void fill_gaps(std::vector<double>& col, const std::vector<long>& lines,
               const std::string& path, const std::string& name, MissingPolicy policy) {
  const long n = static_cast<long>(col.size());
  long last_finite = -1;
  for (long i = 0; i < n; ++i) {
    if (std::isfinite(col[i])) {
      last_finite = i;
      continue;
    }
    if (policy == MissingPolicy::Reject)
      cell_error(path, lines[i], name, "missing value");
    long next = i + 1;
    while (next < n && !std::isfinite(col[next])) ++next;
    if (last_finite < 0 || next >= n)
      cell_error(path, lines[i], name,
                 "cannot interpolate missing value at the series edge");
    const double lo = col[last_finite];
    const double hi = col[next];
    const double span = static_cast<double>(next - last_finite);
    for (long k = i; k < next; ++k)
      col[k] = lo + (hi - lo) * static_cast<double>(k - last_finite) / span;
    last_finite = next;
    i = next;
  }
}

void format_value(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvOptions& opt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> raw_lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    raw_lines.push_back(line);
  }
  while (!raw_lines.empty() && trim(raw_lines.back()).empty()) raw_lines.pop_back();
  if (raw_lines.empty()) throw DataError("csv " + path + ": missing header row");

  std::vector<std::string> header = split_fields(raw_lines[0]);
  for (std::string& h : header) h = trim(h);

  long time_col = -1;
  if (!opt.timestamp_column.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == opt.timestamp_column) time_col = static_cast<long>(i);
    if (time_col < 0)
      throw DataError("csv " + path + ": no column named '" + opt.timestamp_column + "'");
  } else {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (looks_like_time_column(header[i])) {
        time_col = static_cast<long>(i);
        break;
      }
  }

  Dataset ds;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (static_cast<long>(i) != time_col) ds.columns.push_back(header[i]);
  const long c_total = static_cast<long>(header.size());
  const long c_vals = static_cast<long>(ds.columns.size());
  if (c_vals < 1) throw DataError("csv " + path + ": no numeric columns");

  const long n = static_cast<long>(raw_lines.size()) - 1;
  if (n < 1) throw DataError("csv " + path + ": no data rows");

  std::vector<std::vector<double>> cols(c_vals, std::vector<double>(n));
  std::vector<long> line_no(n);
  const double kMissing = std::nan("");
  for (long r = 0; r < n; ++r) {
    const long file_line = r + 2;
    line_no[r] = file_line;
    const std::vector<std::string> fields = split_fields(raw_lines[r + 1]);
    if (static_cast<long>(fields.size()) != c_total)
      throw DataError("csv " + path + ": line " + std::to_string(file_line) + ": expected " +
                      std::to_string(c_total) + " fields, got " +
                      std::to_string(fields.size()));
    long out_c = 0;
    for (long c = 0; c < c_total; ++c) {
      if (c == time_col) {
        double ts = 0.0;
        if (!parse_timestamp(fields[c], ts))
          cell_error(path, file_line, header[c], "cannot parse '" + trim(fields[c]) + "'");
        if (!ds.timestamps.empty() && ts <= ds.timestamps.back())
          cell_error(path, file_line, header[c], "timestamps not strictly increasing");
        ds.timestamps.push_back(ts);
        continue;
      }
      const std::string cell = trim(fields[c]);
      double v = kMissing;
      if (!cell.empty() && !parse_double(cell, v))
        cell_error(path, file_line, header[c], "cannot parse '" + cell + "'");
      cols[out_c][r] = std::isfinite(v) ? v : kMissing;
      ++out_c;
    }
  }

  for (long c = 0; c < c_vals; ++c)
    fill_gaps(cols[c], line_no, path, ds.columns[c], opt.on_missing);

  ds.values = Tensor::zeros({n, c_vals});
  for (long r = 0; r < n; ++r)
    for (long c = 0; c < c_vals; ++c) ds.values.at(r, c) = cols[c][r];
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  std::string text;
  const bool timed = !ds.timestamps.empty();
  if (timed) text += "timestamp,";
  for (std::size_t i = 0; i < ds.columns.size(); ++i) {
    if (i) text += ',';
    text += ds.columns[i];
  }
  text += '\n';
  for (long r = 0; r < ds.values.rows(); ++r) {
    if (timed) {
      format_value(text, ds.timestamps[r]);
      text += ',';
    }
    for (long c = 0; c < ds.values.cols(); ++c) {
      if (c) text += ',';
      format_value(text, ds.values.at(r, c));
    }
    text += '\n';
  }
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

SplitRanges split(const Dataset& ds, const SplitSpec& spec, long t_s, long t_p,
                  bool strict_boundary) {
  if (!(spec.train_frac >= 0.0) || !(spec.val_frac >= 0.0) || !(spec.test_frac >= 0.0) ||
      std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  if (t_s < 1 || t_p < 1) throw ConfigError("split: T_s and T_p must be positive");

  const long n = ds.values.rows();
  SplitRanges r;
  r.train_end = static_cast<long>(std::floor(spec.train_frac * static_cast<double>(n) + 1e-9));
  r.val_begin = r.train_end;
  r.val_end = r.val_begin +
              static_cast<long>(std::floor(spec.val_frac * static_cast<double>(n) + 1e-9));
  r.test_begin = r.val_end;
  r.test_end = n;
  const long lookback = strict_boundary ? 0 : t_s - 1;
  r.val_window_begin = std::max(0L, r.val_begin - lookback);
  r.test_window_begin = std::max(0L, r.test_begin - lookback);

  const long need = t_s + t_p;
  if (r.train_end - r.train_begin < need || r.val_end - r.val_window_begin < need ||
      r.test_end - r.test_window_begin < need)
    throw DataError("split: N = " + std::to_string(n) +
                    " leaves a split too small for one window of T_s + T_p = " +
                    std::to_string(need));
  return r;
}

long window_count(long len, long t_s, long t_p, long stride) {
  if (len < t_s + t_p) return 0;
  return (len - t_s - t_p) / stride + 1;
}

WindowSet make_windows(const Dataset& ds, long begin, long end, long t_s, long t_p,
                       long stride) {
  if (stride < 1) throw ContractError("make_windows: stride must be positive");
  if (begin < 0 || end > ds.values.rows() || begin > end)
    throw ContractError("make_windows: range outside the dataset");
  const long len = end - begin;
  if (len < t_s + t_p)
    throw DataError("make_windows: range of length " + std::to_string(len) +
                    " cannot hold one window of T_s + T_p = " + std::to_string(t_s + t_p));

  const long c = ds.values.cols();
  WindowSet w;
  const long count = window_count(len, t_s, t_p, stride);
  for (long k = 0; k < count; ++k) {
    const long s = begin + k * stride;
    Tensor x = Tensor::zeros({t_s, c});
    for (long t = 0; t < t_s; ++t)
      for (long ch = 0; ch < c; ++ch) x.at(t, ch) = ds.values.at(s + t, ch);
    Tensor y = Tensor::zeros({t_p, c});
    for (long t = 0; t < t_p; ++t)
      for (long ch = 0; ch < c; ++ch) y.at(t, ch) = ds.values.at(s + t_s + t, ch);
    w.inputs.push_back(std::move(x));
    w.targets.push_back(std::move(y));
    w.starts.push_back(s);
  }
  return w;
}

Dataset synth(const std::string& kind, const SynthParams& p, long n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("synth: N must be positive");
  if (p.channels < 1) throw ConfigError("synth: channels must be positive");
  if (!(p.period > 0.0) || !(p.mod_period > 0.0))
    throw ConfigError("synth: periods must be positive");
  if (!(p.warp_eps >= 0.0) || p.warp_eps >= 1.0 || p.warp_cycles < 1)
    throw ConfigError("synth: warp slope must lie in [0, 1) with at least one cycle");
  const bool known = kind == "sine" || kind == "sine+trend" || kind == "sine+trend+noise" ||
                     kind == "am-modulated" || kind == "warped";
  if (!known) throw ConfigError("synth: unknown kind '" + kind + "'");

  const double two_pi = 8.0 * std::atan(1.0);
  Dataset ds;
  ds.values = Tensor::zeros({n, p.channels});
  for (long c = 0; c < p.channels; ++c)
    ds.columns.push_back("c" + std::to_string(c));

  for (long c = 0; c < p.channels; ++c) {
    const double phase = static_cast<double>(c) * two_pi / 12.0;
    for (long t = 0; t < n; ++t) {
      const double td = static_cast<double>(t);
      double v = p.amplitude * std::sin(two_pi * td / p.period + phase);
      if (kind == "am-modulated")
        v *= 1.0 + 0.5 * std::sin(two_pi * td / p.mod_period);
      if (kind == "sine+trend" || kind == "sine+trend+noise") v += p.trend * td;
      ds.values.at(t, c) = v;
    }
  }

  if (kind == "sine+trend+noise") {
    Rng rng(seed);
    for (long t = 0; t < n; ++t)
      for (long c = 0; c < p.channels; ++c) ds.values.at(t, c) += p.noise * rng.normal();
  }

  if (kind == "warped") {
    Tensor tau = Tensor::zeros({n, 1});
    const double cyc = static_cast<double>(p.warp_cycles);
    const double scale = p.warp_eps * static_cast<double>(n) / (two_pi * cyc);
    for (long t = 0; t < n; ++t)
      tau.at(t, 0) = scale * std::sin(two_pi * cyc * static_cast<double>(t) /
                                      static_cast<double>(n));
    const DeformationField field = make_deformation(std::move(tau));
    for (long c = 0; c < p.channels; ++c) {
      Tensor col = Tensor::zeros({n, 1});
      for (long t = 0; t < n; ++t) col.at(t, 0) = ds.values.at(t, c);
      const Tensor warped = apply_deformation(col, field);
      for (long t = 0; t < n; ++t) ds.values.at(t, c) = warped.at(t, 0);
    }
  }
  return ds;
}

void write_predictions_csv(const std::string& path, const std::vector<Tensor>& y_true,
                           const std::vector<Tensor>& y_pred) {
  if (y_true.size() != y_pred.size())
    throw DimensionError("write_predictions_csv: truth and prediction counts differ");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  std::string text = "window_id,t,channel,y_true,y_pred\n";
  for (std::size_t k = 0; k < y_true.size(); ++k) {
    if (!y_true[k].same_shape(y_pred[k]))
      throw DimensionError("write_predictions_csv: shape mismatch in window " +
                           std::to_string(k));
    for (long t = 0; t < y_true[k].rows(); ++t)
      for (long c = 0; c < y_true[k].cols(); ++c) {
        text += std::to_string(k) + ',' + std::to_string(t) + ',' + std::to_string(c) + ',';
        format_value(text, y_true[k].at(t, c));
        text += ',';
        format_value(text, y_pred[k].at(t, c));
        text += '\n';
      }
  }
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace scatterfusion

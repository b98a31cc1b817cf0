#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scatterfusion/tensor.hpp"

namespace scatterfusion {

// A fully ingested series: numeric values plus optional parsed timestamps.
// Timestamps, when present, are strictly increasing (seconds or raw numbers).
struct Dataset {
  Tensor values;                     // [N x C]
  std::vector<std::string> columns;  // channel names, size C
  std::vector<double> timestamps;    // empty when the file has no time column
};

enum class MissingPolicy { Reject, Interpolate };

struct CsvOptions {
  std::string timestamp_column;  // empty: auto-detect by common names
  MissingPolicy on_missing = MissingPolicy::Reject;
};

// Header row required. Cells are 64-bit floats; blank or non-finite cells
// follow the missing-value policy. Errors carry file line and column names.
Dataset load_csv(const std::string& path, const CsvOptions& opt = {});

void write_csv(const Dataset& ds, const std::string& path);

// Chronological partition train -> val -> test.
struct SplitSpec {
  double train_frac = 0.7;
  double val_frac = 0.1;
  double test_frac = 0.2;
};

struct SplitRanges {
  long train_begin = 0, train_end = 0;  // half-open row ranges, disjoint,
  long val_begin = 0, val_end = 0;      // covering all N rows in order
  long test_begin = 0, test_end = 0;
  // Where window extraction may start for val/test. Equal to the partition
  // boundary in strict mode; extended back by T_s - 1 rows otherwise so the
  // lookback may cross the boundary while every window still touches its
  // own split.
  long val_window_begin = 0;
  long test_window_begin = 0;
};

SplitRanges split(const Dataset& ds, const SplitSpec& spec, long t_s, long t_p,
                  bool strict_boundary = false);

// Sliding input/target windows copied out of the dataset rows.
struct WindowSet {
  std::vector<Tensor> inputs;   // each [T_s x C]
  std::vector<Tensor> targets;  // each [T_p x C]
  std::vector<long> starts;     // absolute row index of each input window
};

WindowSet make_windows(const Dataset& ds, long begin, long end, long t_s,
                       long t_p, long stride = 1);

long window_count(long len, long t_s, long t_p, long stride);

// Deterministic synthetic generators. Kinds: sine, sine+trend,
// sine+trend+noise, am-modulated, warped.
struct SynthParams {
  long channels = 1;
  double period = 24.0;
  double amplitude = 1.0;
  double trend = 0.01;       // slope per step
  double noise = 0.1;        // stddev of additive noise
  double mod_period = 97.0;  // envelope period for am-modulated
  double warp_eps = 0.02;    // max |tau'| for warped
  long warp_cycles = 4;
};

Dataset synth(const std::string& kind, const SynthParams& p, long n,
              std::uint64_t seed);

// Prediction dump: columns window_id, t, channel, y_true, y_pred.
void write_predictions_csv(const std::string& path,
                           const std::vector<Tensor>& y_true,
                           const std::vector<Tensor>& y_pred);

}  // namespace scatterfusion

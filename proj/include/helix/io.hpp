#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "helix/tensor.hpp"

namespace helix {

/// A wide multivariate series: one row per time stamp, one column per feature.
struct Series {
  std::vector<std::string> names;   // feature column headers
  std::vector<std::int64_t> time;   // strictly increasing
  Tensor values;                    // [N, F], 0 where missing
  Tensor mask;                      // [N, F], 1 where observed

  std::size_t length() const { return values.dim(0); }
  std::size_t features() const { return values.dim(1); }
};

// Series with default `feat_i` headers and times 0..N-1.
Series make_series(Tensor values, Tensor mask);

// CSV `time,feat_0,...`; empty cells and `NaN` are missing.
Series load_dataset(const std::filesystem::path& path);
Series parse_dataset(const std::string& text, const std::string& source = "<memory>");
// Missing cells are written empty; numbers use the shortest round-trip form.
void write_dataset(const std::filesystem::path& path, const Series& series);
std::string format_dataset(const Series& series);

struct Coord {
  double x = 0.0;
  double y = 0.0;
};

// `feature_id,x,y`, one row per feature in order 0..F-1.
std::vector<Coord> load_coords(const std::filesystem::path& path);
void write_coords(const std::filesystem::path& path, const std::vector<Coord>& coords);

double distance(const Coord& a, const Coord& b);

/// Per-feature z-score statistics.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kStdFloor = 1e-8;

// Fits on observed entries of rows [row_begin, row_end).
NormStats normalize_fit(const Tensor& values, const Tensor& mask, std::size_t row_begin,
                        std::size_t row_end);
// Observed entries become (x - mean) / std; missing entries stay 0.
Tensor normalize_apply(const Tensor& values, const Tensor& mask, const NormStats& stats);
Tensor normalize_inverse(const Tensor& values, const NormStats& stats);

/// Chronological 70/10/20 assignment of windows.
struct Split {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  std::size_t val_begin() const { return train; }
  std::size_t test_begin() const { return train + val; }
};

Split chronological_split(std::size_t windows);

/// Fixed-length windows over a [N, F] series.
struct Windows {
  std::size_t length = 0;
  std::size_t stride = 0;
  std::vector<std::size_t> starts;
  Split split;
  Tensor values;  // [W, T, F]
  Tensor mask;    // [W, T, F]

  std::size_t count() const { return starts.size(); }
  // Last series row covered by windows [begin, end), exclusive.
  std::size_t row_end(std::size_t end) const { return starts[end - 1] + length; }
};

Windows make_windows(const Tensor& values, const Tensor& mask, std::size_t length,
                     std::size_t stride = 0);
// Copies windows [begin, end) of a [W, T, F] tensor.
Tensor slice_windows(const Tensor& windows, std::size_t begin, std::size_t end);
// Writes [W, T, F] window data back into a [N, F] series at `starts`.
void scatter_windows(const Tensor& windows, const std::vector<std::size_t>& starts, Tensor& series);

}  // namespace helix

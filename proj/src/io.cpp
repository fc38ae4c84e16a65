#include "helix/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "helix/errors.hpp"

namespace helix {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    pos = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    cells.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

std::string where(const std::string& source, std::size_t row, std::size_t col) {
  return source + ": row " + std::to_string(row) + ", column " + std::to_string(col);
}

template <typename T>
bool parse_number(const std::string& cell, T& out) {
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Series make_series(Tensor values, Tensor mask) {
  if (values.rank() != 2 || mask.shape() != values.shape())
    throw DimensionError("make_series: values " + shape_str(values.shape()) + ", mask " +
                         shape_str(mask.shape()));
  Series s;
  for (std::size_t f = 0; f < values.dim(1); ++f) s.names.push_back("feat_" + std::to_string(f));
  for (std::size_t t = 0; t < values.dim(0); ++t) s.time.push_back(static_cast<std::int64_t>(t));
  s.values = std::move(values);
  s.mask = std::move(mask);
  return s;
}

Series parse_dataset(const std::string& text, const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(source + ": empty file");
  const auto header = split_cells(lines[0]);
  if (header.size() < 2 || header[0] != "time")
    throw ParseError(where(source, 1, 1) + ": header must start with 'time' and name at least one feature");
  const std::size_t F = header.size() - 1;
  const std::size_t N = lines.size() - 1;
  if (N == 0) throw ParseError(source + ": no data rows");

  Series s;
  s.names.assign(header.begin() + 1, header.end());
  s.values = Tensor(Shape{N, F});
  s.mask = Tensor(Shape{N, F});
  for (std::size_t r = 0; r < N; ++r) {
    const std::size_t row = r + 2;
    const auto cells = split_cells(lines[r + 1]);
    if (cells.size() != F + 1)
      throw ParseError(where(source, row, cells.size()) + ": expected " + std::to_string(F + 1) +
                       " cells, found " + std::to_string(cells.size()));
    std::int64_t t = 0;
    if (!parse_number(cells[0], t)) throw ParseError(where(source, row, 1) + ": time '" + cells[0] + "' is not an integer");
    if (!s.time.empty() && t <= s.time.back())
      throw ParseError(where(source, row, 1) + ": time " + std::to_string(t) + " is not increasing");
    s.time.push_back(t);
    for (std::size_t f = 0; f < F; ++f) {
      const auto& cell = cells[f + 1];
      if (cell.empty() || cell == "NaN" || cell == "nan") continue;
      double v = 0.0;
      if (!parse_number(cell, v) || !std::isfinite(v))
        throw ParseError(where(source, row, f + 2) + ": '" + cell + "' is not a number");
      s.values[r * F + f] = v;
      s.mask[r * F + f] = 1.0;
    }
  }
  return s;
}

Series load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path), path.string()); }

std::string format_dataset(const Series& series) {
  const std::size_t N = series.length(), F = series.features();
  if (series.names.size() != F || series.time.size() != N)
    throw DimensionError("format_dataset: header/time do not match values " + shape_str(series.values.shape()));
  std::string out = "time";
  for (const auto& n : series.names) out += "," + n;
  out += '\n';
  for (std::size_t r = 0; r < N; ++r) {
    out += std::to_string(series.time[r]);
    for (std::size_t f = 0; f < F; ++f) {
      out += ',';
      if (series.mask[r * F + f] != 0.0) out += format_double(series.values[r * F + f]);
    }
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const Series& series) {
  write_file(path, format_dataset(series));
}

std::vector<Coord> load_coords(const std::filesystem::path& path) {
  const auto lines = split_lines(read_file(path));
  const std::string source = path.string();
  if (lines.empty() || split_cells(lines[0]) != std::vector<std::string>{"feature_id", "x", "y"})
    throw ParseError(where(source, 1, 1) + ": header must be 'feature_id,x,y'");
  std::vector<Coord> coords;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split_cells(lines[r]);
    if (cells.size() != 3) throw ParseError(where(source, r + 1, cells.size()) + ": expected 3 cells");
    std::size_t id = 0;
    Coord c;
    if (!parse_number(cells[0], id) || id != coords.size())
      throw ParseError(where(source, r + 1, 1) + ": feature ids must be 0..F-1 in order");
    if (!parse_number(cells[1], c.x)) throw ParseError(where(source, r + 1, 2) + ": bad x");
    if (!parse_number(cells[2], c.y)) throw ParseError(where(source, r + 1, 3) + ": bad y");
    coords.push_back(c);
  }
  return coords;
}

void write_coords(const std::filesystem::path& path, const std::vector<Coord>& coords) {
  std::string out = "feature_id,x,y\n";
  for (std::size_t i = 0; i < coords.size(); ++i)
    out += std::to_string(i) + "," + format_double(coords[i].x) + "," + format_double(coords[i].y) + "\n";
  write_file(path, out);
}

double distance(const Coord& a, const Coord& b) { return std::hypot(a.x - b.x, a.y - b.y); }

NormStats normalize_fit(const Tensor& values, const Tensor& mask, std::size_t row_begin, std::size_t row_end) {
  if (values.rank() != 2 || mask.shape() != values.shape())
    throw DimensionError("normalize_fit: expected matching [N,F] values and mask");
  const std::size_t F = values.dim(1);
  if (row_end > values.dim(0) || row_begin >= row_end) throw RangeError("normalize_fit: bad row range");
  NormStats stats{std::vector<double>(F, 0.0), std::vector<double>(F, 0.0)};
  for (std::size_t f = 0; f < F; ++f) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t r = row_begin; r < row_end; ++r)
      if (mask[r * F + f] != 0.0) {
        sum += values[r * F + f];
        ++n;
      }
    if (n < 2)
      throw DataError("normalize_fit: feature " + std::to_string(f) + " has " + std::to_string(n) +
                      " observed training entries, need at least 2");
    const double mu = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = row_begin; r < row_end; ++r)
      if (mask[r * F + f] != 0.0) ss += (values[r * F + f] - mu) * (values[r * F + f] - mu);
    stats.mean[f] = mu;
    stats.std[f] = std::max(std::sqrt(ss / static_cast<double>(n)), kStdFloor);
  }
  return stats;
}

Tensor normalize_apply(const Tensor& values, const Tensor& mask, const NormStats& stats) {
  const std::size_t F = values.shape().back();
  if (stats.mean.size() != F) throw DimensionError("normalize_apply: stats cover " + std::to_string(stats.mean.size()) + " features, data has " + std::to_string(F));
  Tensor out(values.shape(), 0.0);
  for (std::size_t i = 0; i < values.numel(); ++i)
    if (mask[i] != 0.0) out[i] = (values[i] - stats.mean[i % F]) / stats.std[i % F];
  return out;
}

Tensor normalize_inverse(const Tensor& values, const NormStats& stats) {
  const std::size_t F = values.shape().back();
  if (stats.mean.size() != F) throw DimensionError("normalize_inverse: feature count mismatch");
  Tensor out(values.shape());
  for (std::size_t i = 0; i < values.numel(); ++i) out[i] = values[i] * stats.std[i % F] + stats.mean[i % F];
  return out;
}

Split chronological_split(std::size_t windows) {
  Split s;
  s.train = windows * 7 / 10;
  s.val = windows / 10;
  s.test = windows - s.train - s.val;
  return s;
}

Windows make_windows(const Tensor& values, const Tensor& mask, std::size_t length, std::size_t stride) {
  if (values.rank() != 2 || mask.shape() != values.shape())
    throw DimensionError("make_windows: expected matching [N,F] values and mask");
  if (length == 0) throw ConfigError("make_windows: window length must be positive");
  if (stride == 0) stride = length;
  const std::size_t N = values.dim(0), F = values.dim(1);
  if (N < length)
    throw DataError("make_windows: series has " + std::to_string(N) + " rows, shorter than window " +
                    std::to_string(length));
  Windows w;
  w.length = length;
  w.stride = stride;
  for (std::size_t s = 0; s + length <= N; s += stride) w.starts.push_back(s);
  const std::size_t W = w.starts.size();
  w.split = chronological_split(W);
  w.values = Tensor(Shape{W, length, F});
  w.mask = Tensor(Shape{W, length, F});
  for (std::size_t i = 0; i < W; ++i)
    for (std::size_t j = 0; j < length * F; ++j) {
      w.values[i * length * F + j] = values[w.starts[i] * F + j];
      w.mask[i * length * F + j] = mask[w.starts[i] * F + j];
    }
  return w;
}

Tensor slice_windows(const Tensor& windows, std::size_t begin, std::size_t end) {
  if (windows.rank() != 3 || end > windows.dim(0) || begin >= end)
    throw RangeError("slice_windows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") of " + shape_str(windows.shape()));
  const std::size_t block = windows.dim(1) * windows.dim(2);
  Shape shape = windows.shape();
  shape[0] = end - begin;
  return Tensor(shape, std::vector<double>(windows.data().begin() + begin * block,
                                           windows.data().begin() + end * block));
}

void scatter_windows(const Tensor& windows, const std::vector<std::size_t>& starts, Tensor& series) {
  const std::size_t T = windows.dim(1), F = windows.dim(2);
  if (series.rank() != 2 || series.dim(1) != F || starts.size() != windows.dim(0))
    throw DimensionError("scatter_windows: windows " + shape_str(windows.shape()) + " into series " +
                         shape_str(series.shape()));
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (starts[i] + T > series.dim(0)) throw RangeError("scatter_windows: window past series end");
    std::copy_n(windows.data().begin() + i * T * F, T * F, series.data().begin() + starts[i] * F);
  }
}

}  // namespace helix

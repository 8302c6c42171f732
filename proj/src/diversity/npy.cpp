#include "ediv/npy.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace ediv::npy {
namespace {

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("npy " + path.string() + ": " + what);
}

std::string header_value(const std::string& header, const std::string& key, const std::filesystem::path& path) {
  const auto k = header.find("'" + key + "'");
  if (k == std::string::npos) fail(path, "header lacks '" + key + "'");
  auto v = header.find(':', k);
  if (v == std::string::npos) fail(path, "malformed header");
  ++v;
  while (v < header.size() && header[v] == ' ') ++v;
  std::size_t end = v;
  if (header[v] == '(') {
    end = header.find(')', v);
    if (end == std::string::npos) fail(path, "malformed shape");
    return header.substr(v, end - v + 1);
  }
  while (end < header.size() && header[end] != ',' && header[end] != '}') ++end;
  std::string s = header.substr(v, end - v);
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

std::vector<std::size_t> parse_shape(const std::string& tuple, const std::filesystem::path& path) {
  std::vector<std::size_t> shape;
  std::string inner = tuple.substr(1, tuple.size() - 2);
  std::stringstream ss(inner);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(' ');
    if (b == std::string::npos) continue;
    try {
      shape.push_back(std::stoull(item.substr(b)));
    } catch (const std::exception&) {
      fail(path, "bad shape entry '" + item + "'");
    }
  }
  return shape;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    const auto b = cell.find_first_not_of(' ');
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b));
  }
  return out;
}

double to_double(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::runtime_error("csv " + path.string() + ":" + std::to_string(line) + ": not a number: '" + s + "'");
}

}  // namespace

void write(const std::filesystem::path& path, const std::vector<std::size_t>& shape, std::span<const double> data) {
  std::size_t n = 1;
  std::string dims;
  for (std::size_t d : shape) {
    n *= d;
    dims += std::to_string(d) + ", ";
  }
  if (n != data.size()) throw std::invalid_argument("npy write: shape does not match data size");
  if (shape.size() > 1) dims.resize(dims.size() - 2);
  else if (shape.empty()) dims.clear();
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + dims + "), }";
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header += '\n';
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  out.put(static_cast<char>(len & 0xff));
  out.put(static_cast<char>(len >> 8));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!out) fail(path, "write failed");
}

Array read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, "\x93NUMPY", 6) != 0) fail(path, "missing NPY magic");
  std::uint32_t len = 0;
  unsigned char b[4] = {};
  if (magic[6] == 1) {
    if (!in.read(reinterpret_cast<char*>(b), 2)) fail(path, "truncated header");
    len = b[0] | (b[1] << 8);
  } else if (magic[6] == 2 || magic[6] == 3) {
    if (!in.read(reinterpret_cast<char*>(b), 4)) fail(path, "truncated header");
    len = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t{b[3]} << 24);
  } else {
    fail(path, "unsupported NPY version " + std::to_string(magic[6]));
  }
  std::string header(len, '\0');
  if (!in.read(header.data(), len)) fail(path, "truncated header");
  if (header_value(header, "fortran_order", path) != "False") fail(path, "Fortran order is not supported");
  const std::string descr = header_value(header, "descr", path);
  Array a;
  a.shape = parse_shape(header_value(header, "shape", path), path);
  std::size_t n = 1;
  for (std::size_t d : a.shape) n *= d;
  a.data.resize(n);
  auto load = [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> raw(n);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(T))))
      fail(path, "truncated data");
    for (std::size_t i = 0; i < n; ++i) a.data[i] = static_cast<double>(raw[i]);
  };
  if (descr == "'<f8'") load(double{});
  else if (descr == "'<f4'") load(float{});
  else if (descr == "'<i8'") load(std::int64_t{});
  else if (descr == "'<i4'") load(std::int32_t{});
  else if (descr == "'|u1'") load(std::uint8_t{});
  else fail(path, "unsupported dtype " + descr);
  return a;
}

Array read_prediction_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv " + path.string() + ": cannot open");
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> rows;
  std::size_t M = 0, N = 0, C = 0, lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto cells = split_csv(line);
    if (cells.empty() || (cells.size() == 1 && cells[0].empty())) continue;
    if (lineno == 1 && cells[0] == "model") continue;
    if (cells.size() < 3)
      throw std::runtime_error("csv " + path.string() + ":" + std::to_string(lineno) + ": expected model,sample,p...");
    const double m = to_double(cells[0], path, lineno), s = to_double(cells[1], path, lineno);
    if (m < 0 || s < 0 || m != static_cast<double>(static_cast<std::size_t>(m)) ||
        s != static_cast<double>(static_cast<std::size_t>(s)))
      throw std::runtime_error("csv " + path.string() + ":" + std::to_string(lineno) + ": bad model/sample index");
    std::vector<double> p;
    for (std::size_t i = 2; i < cells.size(); ++i) p.push_back(to_double(cells[i], path, lineno));
    if (C == 0) C = p.size();
    if (p.size() != C)
      throw std::runtime_error("csv " + path.string() + ":" + std::to_string(lineno) + ": class count changes");
    const auto key = std::make_pair(static_cast<std::size_t>(m), static_cast<std::size_t>(s));
    if (!rows.emplace(key, std::move(p)).second)
      throw std::runtime_error("csv " + path.string() + ":" + std::to_string(lineno) + ": duplicate row");
    M = std::max(M, key.first + 1);
    N = std::max(N, key.second + 1);
  }
  if (rows.empty()) throw std::runtime_error("csv " + path.string() + ": no prediction rows");
  if (rows.size() != M * N) throw std::runtime_error("csv " + path.string() + ": missing (model, sample) rows");
  Array a;
  a.shape = {M, N, C};
  a.data.reserve(M * N * C);
  for (const auto& [key, p] : rows) a.data.insert(a.data.end(), p.begin(), p.end());
  return a;
}

std::vector<int> read_label_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv " + path.string() + ": cannot open");
  std::vector<int> labels;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto cells = split_csv(line);
    if (cells.empty() || cells.back().empty()) continue;
    if (lineno == 1 && (cells[0] == "sample" || cells[0] == "label")) continue;
    const double v = to_double(cells.back(), path, lineno);
    if (v < 0 || v != static_cast<double>(static_cast<int>(v)))
      throw std::runtime_error("csv " + path.string() + ":" + std::to_string(lineno) + ": bad label");
    labels.push_back(static_cast<int>(v));
  }
  return labels;
}

void write_prediction_csv(const std::filesystem::path& path, const Array& predictions) {
  if (predictions.shape.size() != 3) throw std::invalid_argument("prediction csv: expected (M, N, C) array");
  const std::size_t M = predictions.shape[0], N = predictions.shape[1], C = predictions.shape[2];
  std::ofstream out(path);
  if (!out) throw std::runtime_error("csv " + path.string() + ": cannot open for writing");
  out << "model,sample";
  for (std::size_t c = 0; c < C; ++c) out << ",p" << c;
  out << '\n';
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t n = 0; n < N; ++n) {
      out << m << ',' << n;
      for (std::size_t c = 0; c < C; ++c) out << ',' << nlohmann::json(predictions.data[(m * N + n) * C + c]).dump();
      out << '\n';
    }
}

}  // namespace ediv::npy

#include "mcmult/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mcmult {

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  double out = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc{}) {
    throw IoError("not a number: '" + text + "'");
  }
  return out;
}

void write_csv_matrix(const std::filesystem::path& file, const Matrix& m) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + file.string());
}

Matrix read_csv_matrix(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const double v = parse_double(cell);
      if (!std::isfinite(v)) {
        throw IoError("non-finite value in " + file.string());
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("ragged rows in " + file.string());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty matrix file " + file.string());
  Matrix m(static_cast<Index>(rows.size()),
           static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rows[i][j];
    }
  }
  return m;
}

std::vector<std::pair<std::string, std::string>> read_kv(
    const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (strip(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError(file.string() + ":" + std::to_string(line_no) +
                    ": expected key=value");
    }
    kv.emplace_back(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
  return kv;
}

void write_kv(const std::filesystem::path& file,
              const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  if (!out) throw IoError("write failed for " + file.string());
}

void save_parameters(const ParameterStore& params,
                     const std::filesystem::path& file) {
  nlohmann::json j;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    nlohmann::json entry;
    entry["rows"] = p.value.rows();
    entry["cols"] = p.value.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(p.value.size()));
    for (Index r = 0; r < p.value.rows(); ++r) {
      for (Index c = 0; c < p.value.cols(); ++c) {
        data.push_back(p.value(r, c));
      }
    }
    entry["data"] = std::move(data);
    j[p.name] = std::move(entry);
  }
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << j.dump();
  if (!out) throw IoError("write failed for " + file.string());
}

void load_parameters(ParameterStore& params,
                     const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad parameter file " + file.string() + ": " + e.what());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (!j.contains(p.name)) {
      throw IoError("parameter file misses '" + p.name + "'");
    }
    const auto& entry = j.at(p.name);
    const Index rows = entry.at("rows").get<Index>();
    const Index cols = entry.at("cols").get<Index>();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw IoError("parameter '" + p.name + "' has shape " +
                    shape_string(rows, cols) + ", expected " +
                    shape_string(p.value));
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != static_cast<std::size_t>(p.value.size())) {
      throw IoError("parameter '" + p.name + "' has wrong element count");
    }
    std::size_t at = 0;
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) {
        if (!std::isfinite(data[at])) {
          throw IoError("non-finite value in parameter '" + p.name + "'");
        }
        p.value(r, c) = data[at++];
      }
    }
  }
}

}  // namespace mcmult

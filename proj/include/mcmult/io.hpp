#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mcmult/common.hpp"
#include "mcmult/optim.hpp"

namespace mcmult {

/// Shortest decimal form that round-trips the double; locale-independent.
std::string format_double(double v);
double parse_double(const std::string& text);

/// Headerless CSV, one row per line.
void write_csv_matrix(const std::filesystem::path& file, const Matrix& m);
Matrix read_csv_matrix(const std::filesystem::path& file);

/// Flat key=value text; '#' starts a comment. `read_kv` keeps file order.
std::vector<std::pair<std::string, std::string>> read_kv(
    const std::filesystem::path& file);
void write_kv(const std::filesystem::path& file,
              const std::vector<std::pair<std::string, std::string>>& kv);

/// Parameter values as JSON keyed by parameter name.
void save_parameters(const ParameterStore& params,
                     const std::filesystem::path& file);
void load_parameters(ParameterStore& params,
                     const std::filesystem::path& file);

}  // namespace mcmult

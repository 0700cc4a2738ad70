#pragma once

#include <string>
#include <vector>

#include "tiltlab/types.hpp"

namespace tiltlab {

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double value);

std::string csv_escape(const std::string& field);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Rows including the header row. Handles RFC 4180 quoting.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

// Serialization of the tabular artifacts: one row per (prompt,response).
// `extra` appends a constant trailing column (utility kind, policy label).
void write_table_csv(const std::string& path, const WorldShape& shape, const Table& table,
                     const std::string& value_column, const std::string& extra_column = "",
                     const std::string& extra_value = "");

}  // namespace tiltlab

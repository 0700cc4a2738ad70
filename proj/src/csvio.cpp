#include "tiltlab/csvio.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>
#include <system_error>

namespace tiltlab {

std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  auto emit = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out << ',';
      out << csv_escape(row[i]);
    }
    out << '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_started = false;
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        row_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_started || !field.empty()) {
          row.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(row));
          row.clear();
        }
        row_started = false;
        break;
      default:
        field += c;
        row_started = true;
        break;
    }
  }
  if (row_started || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_table_csv(const std::string& path, const WorldShape& shape, const Table& table,
                     const std::string& value_column, const std::string& extra_column,
                     const std::string& extra_value) {
  if (!shape.congruent(table)) throw std::invalid_argument("write_table_csv: table does not match shape");
  std::vector<std::string> header = {"prompt_id", "response_id", value_column};
  if (!extra_column.empty()) header.push_back(extra_column);
  std::vector<std::vector<std::string>> rows;
  for (int p = 0; p < shape.num_prompts(); ++p) {
    for (int r = 0; r < shape.num_responses(p); ++r) {
      std::vector<std::string> row = {shape.prompt_ids[p], shape.response_ids[p][r],
                                      format_double(table[p][r])};
      if (!extra_column.empty()) row.push_back(extra_value);
      rows.push_back(std::move(row));
    }
  }
  write_csv(path, header, rows);
}

}  // namespace tiltlab

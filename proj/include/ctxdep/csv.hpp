#pragma once

#include <string>
#include <vector>

namespace ctxdep {

// Shortest round-trip decimal form; CSV re-parse reproduces the double exactly.
std::string format_double(double v);
double parse_double(const std::string& s);

std::string csv_row(const std::vector<std::string>& cells);
std::vector<std::string> split_csv_row(const std::string& line);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace ctxdep

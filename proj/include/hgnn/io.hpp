#pragma once

#include <string>
#include <vector>

namespace hgnn {

// Shortest round-trip decimal form, always with a decimal point or exponent
// ("1.0", "0.5", "6.25e-07"). Parsing the result gives back the same double.
std::string format_double(double v);

double parse_double(const std::string& s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Splits one CSV line on commas (no quoting; none of the formats need it).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace hgnn

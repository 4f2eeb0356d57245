#include "hgnn/io.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hgnn/errors.hpp"
#include "hgnn/pairs.hpp"

namespace hgnn {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, ptr);
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
    s += ".0";
  return s;
}

double parse_double(const std::string& s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw DataError("bad number: '" + s + "'");
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write: " + path);
  os << content;
  if (!os) throw DataError("short write: " + path);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<PairExample> load_pairs(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open pair file: " + path);
  std::vector<PairExample> pairs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("device_a", 0) == 0) continue;  // header
    auto cols = split_csv_line(line);
    if (cols.size() != 3)
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": expected device_a,device_b,label");
    int label;
    if (cols[2] == "0")
      label = 0;
    else if (cols[2] == "1")
      label = 1;
    else
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": label must be 0 or 1, got '" + cols[2] + "'");
    pairs.push_back({cols[0], cols[1], label});
  }
  return pairs;
}

void save_pairs(const std::vector<PairExample>& pairs, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write pair file: " + path);
  os << "device_a,device_b,label\n";
  for (const auto& p : pairs)
    os << p.device_a << "," << p.device_b << "," << p.label << "\n";
  if (!os) throw DataError("short write: " + path);
}

void save_scores(const std::vector<PairExample>& pairs,
                 const std::vector<double>& scores, const std::string& path) {
  if (pairs.size() != scores.size())
    throw DataError("score count does not match pair count");
  std::ofstream os(path);
  if (!os) throw DataError("cannot write score file: " + path);
  os << "device_a,device_b,score\n";
  for (size_t i = 0; i < pairs.size(); ++i)
    os << pairs[i].device_a << "," << pairs[i].device_b << ","
       << format_double(scores[i]) << "\n";
  if (!os) throw DataError("short write: " + path);
}

}  // namespace hgnn

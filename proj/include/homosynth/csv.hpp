#pragma once

// CSV diagnostics: one row per frame, full double precision (17 significant
// digits) so dumps can serve as oracles. Real matrices use columns q0,q1,...;
// complex matrices interleave re0,im0,re1,im1,...

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "homosynth/errors.hpp"
#include "homosynth/stft.hpp"

namespace homosynth::csv {

namespace detail {

inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_real_matrix(const std::string& path,
                              const std::vector<std::vector<double>>& rows,
                              const std::string& col_prefix = "q") {
  std::ofstream out(path);
  require(out.good(), "csv: cannot open file for writing: " + path);
  const std::size_t cols = rows.empty() ? 0 : rows[0].size();
  out << "frame";
  for (std::size_t c = 0; c < cols; ++c) out << ',' << col_prefix << c;
  out << '\n';
  for (std::size_t t = 0; t < rows.size(); ++t) {
    require(rows[t].size() == cols, "csv: ragged rows");
    out << t;
    for (double v : rows[t]) out << ',' << detail::format_value(v);
    out << '\n';
  }
  out.flush();
  require(out.good(), "csv: write failed: " + path);
}

inline void write_complex_matrix(const std::string& path, const signal::ComplexSpectrum& spec) {
  std::ofstream out(path);
  require(out.good(), "csv: cannot open file for writing: " + path);
  const int bins = spec.num_bins();
  out << "frame";
  for (int c = 0; c < bins; ++c) out << ",re" << c << ",im" << c;
  out << '\n';
  for (int t = 0; t < spec.num_frames(); ++t) {
    out << t;
    for (const auto& v : spec.frames[t])
      out << ',' << detail::format_value(v.real()) << ',' << detail::format_value(v.imag());
    out << '\n';
  }
  out.flush();
  require(out.good(), "csv: write failed: " + path);
}

struct Table {
  std::string header;
  std::vector<std::vector<double>> rows;  // includes the leading frame column
};

inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "csv: cannot open file: " + path);
  Table table;
  std::string line;
  require(static_cast<bool>(std::getline(in, table.header)), "csv: missing header: " + path);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail("csv: malformed numeric cell '" + cell + "' in " + path);
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace homosynth::csv

#pragma once

// Plain-text outputs: CSV tables carrying a '#' provenance preamble, and the
// protocol file format (t, kappa, g, s_pred) read back by the validator.

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "feshbach/core.hpp"

namespace feshbach {

using Provenance = std::vector<std::pair<std::string, std::string>>;

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const Provenance& prov, const std::vector<std::string>& columns)
      : out_(path) {
    if (!out_) throw Error("cannot write '" + path + "'");
    for (const auto& [k, v] : prov) out_ << "# " << k << " = " << v << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << '\n';
    out_ << std::setprecision(12);
    width_ = columns.size();
  }

  void row(const std::vector<double>& values) {
    if (values.size() != width_) throw InvalidArgument("CsvWriter: row width differs from header");
    for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  std::size_t width_ = 0;
};

inline const std::vector<std::string>& protocol_columns() {
  static const std::vector<std::string> cols{"t [1/w0]", "kappa [m w0^2]", "g [hbar w0 L_ho]", "s_pred [L_ho^2]"};
  return cols;
}

inline void write_protocol_csv(const std::string& path, const Protocol& pr, const Provenance& prov) {
  CsvWriter w(path, prov, protocol_columns());
  for (std::size_t i = 0; i < pr.size(); ++i) w.row({pr.times[i], pr.kappa[i], pr.g[i], pr.s_pred[i]});
}

inline Protocol read_protocol_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open protocol file '" + path + "'");
  Protocol pr;
  bool header = true;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::stringstream ss(line);
    double v[4];
    char sep = 0;
    if (!(ss >> v[0] >> sep >> v[1] >> sep >> v[2] >> sep >> v[3]))
      throw InvalidArgument(path + ":" + std::to_string(line_no) + ": expected 4 numeric columns");
    pr.times.push_back(v[0]);
    pr.kappa.push_back(v[1]);
    pr.g.push_back(v[2]);
    pr.s_pred.push_back(v[3]);
  }
  pr.validate();
  pr.refresh_flags();
  return pr;
}

}  // namespace feshbach

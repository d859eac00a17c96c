#include "nnaee/export.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace nnaee::exporting {

std::uint8_t grey_level(double c, double lo, double hi) {
  if (!(hi > lo)) throw InvalidArgument("display range must satisfy lo < hi");
  const double g = std::clamp((c - lo) / (hi - lo), 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::lround(g));
}

std::vector<std::uint8_t> field_pgm(const SOSField &field, double lo, double hi) {
  const std::string header =
      "P5\n" + std::to_string(field.cols()) + " " + std::to_string(field.rows()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + field.values.size());
  for (std::size_t r = field.rows(); r-- > 0;)
    for (std::size_t c = 0; c < field.cols(); ++c) out.push_back(grey_level(field.values(r, c), lo, hi));
  return out;
}

std::string field_csv(const SOSField &field) {
  std::ostringstream out;
  out << std::setprecision(9);
  for (std::size_t r = field.rows(); r-- > 0;) {
    for (std::size_t c = 0; c < field.cols(); ++c) out << (c ? "," : "") << field.values(r, c);
    out << '\n';
  }
  return out.str();
}

std::string trace_csv(const MeasurementSet &m, int transmitter, int receiver) {
  if (transmitter < 0 || transmitter >= m.n_transmitters || receiver < 0 ||
      receiver >= m.n_receivers)
    throw InvalidArgument("trace (" + std::to_string(transmitter) + ", " +
                          std::to_string(receiver) + ") outside " +
                          std::to_string(m.n_transmitters) + " x " +
                          std::to_string(m.n_receivers) + " measurements");
  std::ostringstream out;
  out << "t,time,pressure\n" << std::setprecision(9);
  const auto tr = m.trace(transmitter, receiver);
  for (int t = 0; t < m.n_samples; ++t) out << t << ',' << (t + 1) * m.dt << ',' << tr[t] << '\n';
  return out.str();
}

std::string report_table_csv(const std::string &text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "case,method,n_train,rmse,seconds")
    throw InvalidArgument("not a report.csv (unexpected header)");
  std::vector<std::string> methods;
  std::map<int, std::map<std::string, std::pair<double, int>>> sums;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string c, method, n, rmse;
    if (!std::getline(fields, c, ',') || !std::getline(fields, method, ',') ||
        !std::getline(fields, n, ',') || !std::getline(fields, rmse, ','))
      throw InvalidArgument("report.csv line " + std::to_string(lineno) + " is malformed");
    if (std::find(methods.begin(), methods.end(), method) == methods.end()) methods.push_back(method);
    try {
      auto &cell = sums[std::stoi(n)][method];
      cell.first += std::stod(rmse);
      ++cell.second;
    } catch (const std::exception &) {
      throw InvalidArgument("report.csv line " + std::to_string(lineno) + " is malformed");
    }
  }
  std::ostringstream out;
  out << "n_train";
  for (const auto &m : methods) out << ',' << m;
  out << '\n' << std::setprecision(9);
  for (const auto &[n, row] : sums) {
    out << n;
    for (const auto &m : methods) {
      out << ',';
      if (auto it = row.find(m); it != row.end()) out << it->second.first / it->second.second;
    }
    out << '\n';
  }
  return out.str();
}

} // namespace nnaee::exporting

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nnaee/model.hpp"

namespace nnaee::exporting {

/// Display range of sound-speed images, m/s.
inline constexpr double kDisplayLo = kMinSoundSpeed;
inline constexpr double kDisplayHi = kMaxSoundSpeed;

/// Grey level of a sound speed: linear from [lo, hi] onto [0, 255], clamped, rounded.
std::uint8_t grey_level(double c, double lo = kDisplayLo, double hi = kDisplayHi);

/// Binary portable graymap (P5). Row 0 of the field is the bottom image row.
std::vector<std::uint8_t> field_pgm(const SOSField &field, double lo = kDisplayLo,
                                    double hi = kDisplayHi);

/// One CSV line per grid row, values in m/s; the first line is the top (last) grid row.
std::string field_csv(const SOSField &field);

/// t,time,pressure for one transmitter-receiver pair.
std::string trace_csv(const MeasurementSet &m, int transmitter, int receiver);

/// Learning-curve table from a report.csv text: one row per n_train, one column per method.
std::string report_table_csv(const std::string &report_csv_text);

} // namespace nnaee::exporting

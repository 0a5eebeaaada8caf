#pragma once

#include <cstdint>
#include <string>

#include "kmsig/detector.hpp"
#include "kmsig/frame.hpp"

namespace kmsig::io {

// Header `time,<id_1>,...`; every number printed with 17 significant digits so
// a write/read cycle reproduces doubles bitwise.
void write_frame_csv(const TimeSeriesFrame& frame, const std::string& path);

// Parses a frame CSV. Cell problems are reported with 1-based row and column;
// timestamps must be uniform within 1e-6 relative tolerance. Pass
// sample_period <= 0 to adopt the file's spacing.
TimeSeriesFrame read_frame_csv(const std::string& path, Channel channel,
                               double sample_period);

// Header `window_time,<id_1>,...`, one row of scores per window. NaN cells are
// legal here: they mark windows whose model fit failed.
void write_scores_csv(const detect::DeltaScoreSeries& series, const std::string& path);
detect::DeltaScoreSeries read_scores_csv(const std::string& path);

std::uint64_t fnv1a64(const std::string& bytes);
std::uint64_t fnv1a64_file(const std::string& path);

} // namespace kmsig::io

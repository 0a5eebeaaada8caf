#include "kmsig/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "kmsig/errors.hpp"

namespace kmsig::io {

namespace {

std::string formatted(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

std::vector<std::string> split_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::size_t at = 0;
    while (true) {
        const std::size_t comma = line.find(',', at);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(at));
            return cells;
        }
        cells.push_back(line.substr(at, comma - at));
        at = comma + 1;
    }
}

struct Table {
    std::vector<std::string> ids;       // header minus the time column
    std::vector<double> times;          // first column
    Eigen::MatrixXd values;             // p x rows
};

// Shared CSV reader; finite_only rejects nan/inf cells with their location.
Table read_table(const std::string& path, const char* time_header, bool finite_only) {
    std::ifstream in(path);
    if (!in) throw ConfigError("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("csv: " + path + " is empty");
    std::vector<std::string> header = split_line(line);
    if (header.size() < 2 || header[0] != time_header)
        throw ConfigError("csv: " + path + " header must be `" + time_header +
                          ",<id_1>,...`");
    Table table;
    table.ids.assign(header.begin() + 1, header.end());
    const std::size_t width = header.size();

    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() && in.peek() == std::ifstream::traits_type::eof()) break;
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != width)
            throw ConfigError("csv: " + path + " row " + std::to_string(lineno) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(width));
        std::vector<double> parsed(width);
        for (std::size_t c = 0; c < width; ++c) {
            const std::string& cell = cells[c];
            const std::string where = " row " + std::to_string(lineno) + " column " +
                                      std::to_string(c + 1);
            if (cell.empty())
                throw ConfigError("csv: " + path + where + " is empty");
            char* end = nullptr;
            parsed[c] = std::strtod(cell.c_str(), &end);
            if (end != cell.c_str() + cell.size())
                throw ConfigError("csv: " + path + where + " is not a number");
            if ((finite_only || c == 0) && !std::isfinite(parsed[c]))
                throw ConfigError("csv: " + path + where + " is not finite");
        }
        rows.push_back(std::move(parsed));
    }
    const int m = static_cast<int>(rows.size());
    const int p = static_cast<int>(table.ids.size());
    table.times.resize(m);
    table.values.resize(p, m);
    for (int k = 0; k < m; ++k) {
        table.times[k] = rows[k][0];
        for (int i = 0; i < p; ++i) table.values(i, k) = rows[k][i + 1];
    }
    return table;
}

void write_table(const std::string& path, const char* time_header,
                 const std::vector<std::string>& ids, const std::vector<double>& times,
                 const Eigen::MatrixXd& values) {
    std::ofstream out(path);
    if (!out) throw RuntimeError("csv: cannot write " + path);
    out << time_header;
    for (const std::string& id : ids) out << ',' << id;
    out << '\n';
    for (std::size_t k = 0; k < times.size(); ++k) {
        out << formatted(times[k]);
        for (Eigen::Index i = 0; i < values.rows(); ++i)
            out << ',' << formatted(values(i, static_cast<Eigen::Index>(k)));
        out << '\n';
    }
    if (!out) throw RuntimeError("csv: write failed for " + path);
}

} // namespace

void write_frame_csv(const TimeSeriesFrame& frame, const std::string& path) {
    frame.validate();
    write_table(path, "time", frame.sensor_ids, frame.times, frame.values);
}

TimeSeriesFrame read_frame_csv(const std::string& path, Channel channel,
                               double sample_period) {
    Table table = read_table(path, "time", true);
    TimeSeriesFrame frame;
    frame.channel = channel;
    frame.sensor_ids = std::move(table.ids);
    frame.times = std::move(table.times);
    frame.values = std::move(table.values);
    if (sample_period > 0.0)
        frame.sample_period = sample_period;
    else if (frame.times.size() >= 2)
        frame.sample_period = frame.times[1] - frame.times[0];
    try {
        frame.validate();
    } catch (const ConfigError& e) {
        throw ConfigError("csv: " + path + ": " + e.what());
    }
    return frame;
}

void write_scores_csv(const detect::DeltaScoreSeries& series, const std::string& path) {
    // Scores are stored one window per row; the table writer wants columns.
    write_table(path, "window_time", series.sensor_ids, series.window_times,
                series.scores.transpose());
}

detect::DeltaScoreSeries read_scores_csv(const std::string& path) {
    Table table = read_table(path, "window_time", false);
    detect::DeltaScoreSeries series;
    series.sensor_ids = std::move(table.ids);
    series.window_times = std::move(table.times);
    series.scores = table.values.transpose();
    series.distances =
        Eigen::MatrixXd::Constant(series.scores.rows(), series.scores.cols(),
                                  std::numeric_limits<double>::quiet_NaN());
    return series;
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t hash = 14695981039346656037ull;
    for (unsigned char byte : bytes) {
        hash ^= byte;
        hash *= 1099511628211ull;
    }
    return hash;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeError("cannot hash missing file " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return fnv1a64(buffer.str());
}

} // namespace kmsig::io

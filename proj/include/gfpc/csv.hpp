#pragma once

// Minimal CSV: one header line, comma-separated unquoted cells, numbers in
// shortest round-trip form so a re-read reproduces every double exactly.

#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gfpc/error.hpp"
#include "gfpc/simulate.hpp"
#include "gfpc/text.hpp"

namespace gfpc {

inline constexpr std::string_view kTimeSeriesHeader = "t_s,p_pu,omega_pu,id_pu,iq_pu,vmag_pu,dtheta_rad";

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> cells) {
        if (cells.size() != header.size())
            throw Error(Errc::invalid_argument, "row has " + std::to_string(cells.size()) + " cells, header has " +
                                                    std::to_string(header.size()));
        rows.push_back(std::move(cells));
    }

    void add_numeric_row(std::initializer_list<double> values) {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format_double(v));
        add_row(std::move(cells));
    }

    [[nodiscard]] std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw Error(Errc::invalid_argument, "no column '" + std::string(name) + "'");
    }

    [[nodiscard]] double number(std::size_t row, std::size_t col) const {
        double v = 0.0;
        if (!parse_double(rows.at(row).at(col), v))
            throw Error(Errc::invalid_argument, "row " + std::to_string(row + 2) + ": '" + rows[row][col] +
                                                    "' is not a number");
        return v;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

}  // namespace detail

inline std::string to_csv(const CsvTable& table) {
    std::string out;
    auto put = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (cells[i].find_first_of(",\n") != std::string::npos)
                throw Error(Errc::invalid_argument, "CSV cell contains a separator: '" + cells[i] + "'");
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    put(table.header);
    for (const auto& row : table.rows) put(row);
    return out;
}

inline CsvTable parse_csv(std::istream& in, const std::string& source = "<csv>") {
    CsvTable table;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size())
            throw Error(Errc::invalid_argument, source + ":" + std::to_string(lineno) + ": expected " +
                                                    std::to_string(table.header.size()) + " cells, got " +
                                                    std::to_string(cells.size()));
        table.rows.push_back(std::move(cells));
    }
    if (table.header.empty()) throw Error(Errc::invalid_argument, source + ": missing header");
    return table;
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    write_file_atomic(path, to_csv(table));
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::invalid_argument, path.string() + ": cannot open file");
    return parse_csv(in, path.string());
}

inline CsvTable timeseries_table(const TimeSeries& ts) {
    CsvTable table;
    table.header = detail::split_csv_line(kTimeSeriesHeader);
    table.rows.reserve(ts.size());
    for (std::size_t k = 0; k < ts.size(); ++k)
        table.add_numeric_row({ts.t[k], ts.p[k], ts.omega_i[k], ts.i_d[k], ts.i_q[k], ts.v_mag[k], ts.delta_theta[k]});
    return table;
}

/// Inverse of timeseries_table. The divergence flag is not part of the file.
inline TimeSeries timeseries_from_table(const CsvTable& table) {
    if (table.header != detail::split_csv_line(kTimeSeriesHeader))
        throw Error(Errc::invalid_argument, "not a time-series table; expected header " + std::string(kTimeSeriesHeader));
    TimeSeries ts;
    for (std::size_t r = 0; r < table.rows.size(); ++r)
        ts.push(table.number(r, 0), table.number(r, 1), table.number(r, 2), cplx{table.number(r, 3), table.number(r, 4)},
                table.number(r, 5), table.number(r, 6));
    return ts;
}

}  // namespace gfpc

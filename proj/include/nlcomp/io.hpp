/// @file io.hpp
/// @brief Text formats: grid-function CSV, key: value reports, number formatting.
///
/// Doubles are written in shortest round-trip form, so files are byte-stable
/// across runs and re-read bit-exactly.
#pragma once

#include "nlcomp/errors.hpp"
#include "nlcomp/grid.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace nlcomp {

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
        text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw InvalidArgument("not a number: '" + std::string(text) + "'");
    return v;
}

/// One row per stored node in lexicographic order:
/// x1[,x2],value,interior   (interior is 1 for unknowns, 0 for exterior data).
template <int Dim>
void write_csv(std::ostream& os, const GridFunction<Dim>& u) {
    const auto& grid = u.grid();
    for (int i = 0; i < Dim; ++i) os << 'x' << (i + 1) << ',';
    os << "value,interior\n";
    for (std::size_t f = 0; f < grid.node_count(); ++f) {
        const auto k = grid.unflatten(f);
        const auto x = grid.coord(k);
        for (int i = 0; i < Dim; ++i) os << format_double(x[i]) << ',';
        os << format_double(u.values()[f]) << ',' << (grid.is_interior(k) ? 1 : 0) << '\n';
    }
}

template <int Dim>
struct CsvRow {
    Vec<Dim> x{};
    double value = 0.0;
    bool interior = false;
};

template <int Dim>
std::vector<CsvRow<Dim>> read_csv(std::istream& is) {
    std::vector<CsvRow<Dim>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != static_cast<std::size_t>(Dim + 2))
            throw InvalidArgument("csv line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(Dim + 2) + " columns");
        CsvRow<Dim> row;
        for (int i = 0; i < Dim; ++i) row.x[i] = parse_double(cells[i]);
        row.value = parse_double(cells[Dim]);
        row.interior = parse_double(cells[Dim + 1]) != 0.0;
        rows.push_back(row);
    }
    return rows;
}

/// Ordered `key: value` report.
class Report {
public:
    void add(std::string key, std::string value) {
        entries_.emplace_back(std::move(key), std::move(value));
    }
    void add(std::string key, double value) { add(std::move(key), format_double(value)); }
    void add(std::string key, long value) { add(std::move(key), std::to_string(value)); }
    void add(std::string key, int value) { add(std::move(key), std::to_string(value)); }
    void add(std::string key, std::size_t value) { add(std::move(key), std::to_string(value)); }
    void add(std::string key, bool value) { add(std::move(key), std::string(value ? "pass" : "fail")); }
    void add(std::string key, const char* value) { add(std::move(key), std::string(value)); }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string find(std::string_view key) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return v;
        return {};
    }

    friend std::ostream& operator<<(std::ostream& os, const Report& r) {
        for (const auto& [k, v] : r.entries_) os << k << ": " << v << '\n';
        return os;
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace nlcomp

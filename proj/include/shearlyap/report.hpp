#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shearlyap/config.hpp"

namespace shearlyap {

// Fixed textual form for CSV cells: %.12g, "nan", "inf", "-inf".
std::string format_number(double v);

class Table {
public:
    Table() = default;
    explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    class RowBuilder {
    public:
        RowBuilder& set(const std::string& column, double v);
        RowBuilder& set(const std::string& column, long long v);
        RowBuilder& set(const std::string& column, int v) { return set(column, static_cast<long long>(v)); }
        RowBuilder& set(const std::string& column, std::uint64_t v);
        RowBuilder& set(const std::string& column, bool v);
        RowBuilder& set(const std::string& column, const std::string& v);
        RowBuilder& set(const std::string& column, const char* v) { return set(column, std::string(v)); }

    private:
        friend class Table;
        RowBuilder(Table& t, std::size_t r) : table_(t), row_(r) {}
        Table& table_;
        std::size_t row_;
    };
    // Appends a row of empty cells; fill it through the builder.
    RowBuilder add_row();
    RowBuilder edit(std::size_t row);

    const std::vector<std::string>& columns() const { return columns_; }
    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }
    std::size_t column(const std::string& name) const;  // throws DomainError
    const std::string& at(std::size_t row, const std::string& column) const;
    double number(std::size_t row, const std::string& column) const;  // nan for empty cells
    bool flag(std::size_t row, const std::string& column) const;

    std::string to_csv() const;
    // Whitespace separated columns with a commented header, for gnuplot.
    std::string to_dat() const;

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

struct RunReport {
    Mode mode = Mode::TheoremA;
    Table report;       // one row per (n, t)
    Table orbit_stats;  // per-orbit measurements
    Table conditions;   // per-(n, t) flags and margins
    Table constants;    // fitted constants and spectral data
    Table spectrum;     // certified eigenvalue intervals
    bool conditions_met = true;  // false when no row could be certified
    bool verdict = true;         // every asserted verdict passed
    std::vector<std::string> messages;

    // 0 pass, 2 verdict failure, 3 conditions not met.
    int exit_code() const;
};

// Writes report.csv, orbit_stats.csv, conditions.csv, constants.csv (and
// spectrum.csv when filled) into dir, plus .dat twins when plot is set.
void write_outputs(const RunReport& r, const std::string& dir, bool csv = true, bool plot = false);

}  // namespace shearlyap

#include "shearlyap/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "shearlyap/errors.hpp"

namespace shearlyap {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0) return "0";  // folds -0
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

Table::RowBuilder Table::add_row() {
    rows_.emplace_back(columns_.size());
    return RowBuilder(*this, rows_.size() - 1);
}

Table::RowBuilder Table::edit(std::size_t row) {
    if (row >= rows_.size()) throw DomainError("row index out of range");
    return RowBuilder(*this, row);
}

Table::RowBuilder& Table::RowBuilder::set(const std::string& c, double v) { return set(c, format_number(v)); }

Table::RowBuilder& Table::RowBuilder::set(const std::string& c, long long v) { return set(c, std::to_string(v)); }

Table::RowBuilder& Table::RowBuilder::set(const std::string& c, std::uint64_t v) { return set(c, std::to_string(v)); }

Table::RowBuilder& Table::RowBuilder::set(const std::string& c, bool v) { return set(c, std::string(v ? "1" : "0")); }

Table::RowBuilder& Table::RowBuilder::set(const std::string& c, const std::string& v) {
    table_.rows_[row_][table_.column(c)] = v;
    return *this;
}

std::size_t Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
        if (columns_[i] == name) return i;
    throw DomainError("no column '" + name + "'");
}

const std::string& Table::at(std::size_t row, const std::string& c) const { return rows_.at(row).at(column(c)); }

double Table::number(std::size_t row, const std::string& c) const {
    const std::string& s = at(row, c);
    if (s.empty() || s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    return std::stod(s);
}

bool Table::flag(std::size_t row, const std::string& c) const { return at(row, c) == "1"; }

namespace {

// Quotes cells holding separators.
std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + '"';
}

}  // namespace

std::string Table::to_csv() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < columns_.size(); ++i) os << (i ? "," : "") << csv_cell(columns_[i]);
    os << '\n';
    for (const auto& row : rows_) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_cell(row[i]);
        os << '\n';
    }
    return os.str();
}

std::string Table::to_dat() const {
    std::ostringstream os;
    os << '#';
    for (const auto& c : columns_) os << ' ' << c;
    os << '\n';
    for (const auto& row : rows_) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::string cell = row[i].empty() ? "?" : row[i];
            for (char& ch : cell)
                if (ch == ' ' || ch == ',') ch = '_';
            os << (i ? " " : "") << cell;
        }
        os << '\n';
    }
    return os.str();
}

int RunReport::exit_code() const {
    if (!conditions_met) return 3;
    if (!verdict) return 2;
    return 0;
}

void write_outputs(const RunReport& r, const std::string& dir, bool csv, bool plot) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory '" + dir + "': " + ec.message());
    auto put = [&](const std::string& name, const std::string& text) {
        std::ofstream out(fs::path(dir) / name, std::ios::binary);
        if (!out) throw ValidationError("cannot write " + (fs::path(dir) / name).string());
        out << text;
    };
    const std::pair<const char*, const Table*> files[] = {
        {"report", &r.report}, {"orbit_stats", &r.orbit_stats}, {"conditions", &r.conditions},
        {"constants", &r.constants}, {"spectrum", &r.spectrum},
    };
    for (const auto& [name, table] : files) {
        const bool optional = std::string(name) == "spectrum";
        if (optional && table->columns().empty()) continue;
        if (csv) put(std::string(name) + ".csv", table->to_csv());
        if (plot) put(std::string(name) + ".dat", table->to_dat());
    }
}

}  // namespace shearlyap

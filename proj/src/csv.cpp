#include "agritime/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace agritime {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            cells.emplace_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return cells;
}

}  // namespace

CsvTable read_csv_text(std::string_view text, const std::string& path_label) {
    CsvTable table;
    table.path = path_label;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (line_no == 1) {
            table.header = std::move(cells);
            for (std::size_t i = 0; i < table.header.size(); ++i)
                for (std::size_t j = i + 1; j < table.header.size(); ++j)
                    if (table.header[i] == table.header[j])
                        throw std::runtime_error(path_label + ": duplicate column '" + table.header[i] + "'");
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw std::runtime_error(path_label + ", line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(table.header.size()) + " fields, got " +
                                     std::to_string(cells.size()));
        }
        table.rows.push_back(std::move(cells));
    }
    if (table.header.empty())
        throw std::runtime_error(path_label + ": missing header row");
    return table;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return read_csv_text(buf.str(), path);
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw std::runtime_error(path + ": missing required column '" + std::string(name) + "'");
}

const std::string& CsvTable::cell(std::size_t row, std::size_t col) const {
    return rows[row][col];
}

double CsvTable::number(std::size_t row, std::size_t col) const {
    const std::string& s = rows[row][col];
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw std::runtime_error(path + ", line " + std::to_string(file_line(row)) + ", column '" +
                                 header[col] + "': malformed number '" + s + "'");
    }
    return v;
}

std::optional<double> CsvTable::optional_number(std::size_t row, std::size_t col) const {
    if (rows[row][col].empty()) return std::nullopt;
    return number(row, col);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : width_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out_ += ',';
        out_ += header[i];
    }
    out_ += '\n';
}

void CsvWriter::add_row(std::vector<std::string> cells) {
    if (cells.size() != width_) throw std::logic_error("csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ += ',';
        out_ += cells[i];
    }
    out_ += '\n';
}

std::string CsvWriter::str() const { return out_; }

void CsvWriter::write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << out_;
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace agritime

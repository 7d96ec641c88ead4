#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agritime {

// Shortest decimal representation that round-trips the double exactly.
std::string format_double(double v);

// In-memory CSV table. Comma-separated, UTF-8, one header row, '.' decimal
// point; no quoting (none of the artifact's schemas need it).
struct CsvTable {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // row 0 is file line 2

    std::size_t column(std::string_view name) const;  // throws if absent
    // Cell accessors throw with "file, line N, column 'x'" context.
    const std::string& cell(std::size_t row, std::size_t col) const;
    double number(std::size_t row, std::size_t col) const;
    std::optional<double> optional_number(std::size_t row, std::size_t col) const;  // empty cell -> nullopt

    std::size_t file_line(std::size_t row) const { return row + 2; }
};

CsvTable read_csv(const std::string& path);
CsvTable read_csv_text(std::string_view text, const std::string& path_label);

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void add_row(std::vector<std::string> cells);
    std::string str() const;
    void write_file(const std::string& path) const;

private:
    std::size_t width_;
    std::string out_;
};

}  // namespace agritime

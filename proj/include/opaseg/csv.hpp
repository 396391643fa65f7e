#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace opaseg {

// Shortest decimal string that round-trips the exact double (to_chars), so
// repeated runs and platforms agree byte-for-byte.
std::string format_double(double v);

// RFC-4180 field quoting: fields holding comma, quote or line breaks are
// quoted, embedded quotes doubled.
std::string csv_field(const std::string& raw);

// Accumulates rows and renders with CRLF line endings.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void add_row(const std::vector<std::string>& cells);
    std::string str() const;

private:
    std::size_t columns_;
    std::string body_;
};

} // namespace opaseg

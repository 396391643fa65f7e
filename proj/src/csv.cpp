#include "opaseg/csv.hpp"

#include <charconv>

#include "opaseg/errors.hpp"

namespace opaseg {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& raw) {
    const bool needs_quotes =
        raw.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs_quotes) return raw;
    std::string out = "\"";
    for (char c : raw) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    if (header.empty()) throw ValidationError("CSV header must have at least one column");
    add_row(header);
}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_)
        throw ValidationError("CSV row has " + std::to_string(cells.size()) +
                              " cells, header has " + std::to_string(columns_));
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) body_ += ',';
        body_ += csv_field(cells[i]);
    }
    body_ += "\r\n";
}

std::string CsvWriter::str() const { return body_; }

} // namespace opaseg

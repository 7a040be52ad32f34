#pragma once

// Minimal RFC-4180-free CSV helpers: comma separated, no quoting, '.' decimal.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mscal::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string_view>> rows; // views into the source text
    std::vector<std::size_t> line_numbers;           // 1-based, for messages

    /// Column index by name, or -1.
    int column(std::string_view name) const;
    int require_column(std::string_view name) const;
};

/// Parses `text`; the returned views stay valid while `text` does.
Table parse(std::string_view text);

double to_double(std::string_view field, std::size_t line);
std::int64_t to_int(std::string_view field, std::size_t line);

/// Shortest representation that round-trips exactly.
std::string format(double v);

}  // namespace mscal::csv

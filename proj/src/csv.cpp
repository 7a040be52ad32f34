#include "mscal/csv.hpp"

#include "mscal/error.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace mscal::csv {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

}  // namespace

int Table::column(std::string_view name) const
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name)
            return static_cast<int>(i);
    return -1;
}

int Table::require_column(std::string_view name) const
{
    int c = column(name);
    if (c < 0)
        throw Error(ErrorCode::Io, "missing CSV column '" + std::string(name) + "'");
    return c;
}

Table parse(std::string_view text)
{
    Table table;
    // UTF-8 byte order mark
    if (text.starts_with("\xEF\xBB\xBF"))
        text.remove_prefix(3);

    std::size_t pos = 0, line_no = 0;
    bool have_header = false;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = trim(text.substr(pos, end - pos));
        ++line_no;
        pos = end + 1;
        if (line.empty()) {
            if (end == text.size())
                break;
            continue;
        }
        auto fields = split(line);
        if (!have_header) {
            for (auto f : fields)
                table.header.emplace_back(f);
            have_header = true;
        }
        else {
            if (fields.size() != table.header.size())
                throw Error(ErrorCode::Io, "line " + std::to_string(line_no) + ": expected "
                                               + std::to_string(table.header.size()) + " fields, got "
                                               + std::to_string(fields.size()));
            table.rows.push_back(std::move(fields));
            table.line_numbers.push_back(line_no);
        }
        if (end == text.size())
            break;
    }
    if (!have_header)
        throw Error(ErrorCode::Io, "empty CSV input");
    return table;
}

double to_double(std::string_view field, std::size_t line)
{
    if (field == "inf" || field == "Inf")
        return std::numeric_limits<double>::infinity();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw Error(ErrorCode::Io,
                    "line " + std::to_string(line) + ": not a number: '" + std::string(field) + "'");
    return v;
}

std::int64_t to_int(std::string_view field, std::size_t line)
{
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw Error(ErrorCode::Io,
                    "line " + std::to_string(line) + ": not an integer: '" + std::string(field) + "'");
    return v;
}

std::string format(double v)
{
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    if (std::isnan(v))
        return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace mscal::csv

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace srp::csv {

/// One parsed record. `quoted[i]` tells whether field i was enclosed in quotes,
/// which distinguishes `""` (empty string) from an empty cell.
struct Record {
    std::vector<std::string> fields;
    std::vector<bool> quoted;
};

/// RFC-4180 reader: comma separated, double-quote escaping, CRLF or LF line
/// endings, quoted fields may span lines.
class Reader {
  public:
    explicit Reader(std::istream& in) : in_(in) {}

    /// Reads the next record; returns false at end of input.
    bool next(Record& record);

    std::size_t line() const noexcept { return line_; }

  private:
    std::istream& in_;
    std::size_t line_ = 0;
};

/// Appends `field` to `out`, quoting only when the content requires it.
void append_field(std::string& out, std::string_view field);

/// Writes one record terminated by '\n'.
void write_record(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace srp::csv

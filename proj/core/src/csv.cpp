#include "srp/csv.hpp"

#include <istream>
#include <ostream>

#include "srp/errors.hpp"

namespace srp::csv {

bool Reader::next(Record& record) {
    record.fields.clear();
    record.quoted.clear();

    int c = in_.get();
    if (c == std::char_traits<char>::eof()) {
        return false;
    }
    ++line_;

    std::string field;
    bool quoted = false;
    bool in_quotes = false;
    bool after_quote = false;

    auto finish_field = [&] {
        record.fields.push_back(std::move(field));
        record.quoted.push_back(quoted);
        field.clear();
        quoted = false;
        after_quote = false;
    };

    for (;; c = in_.get()) {
        if (c == std::char_traits<char>::eof()) {
            if (in_quotes) {
                throw DataError("csv: unterminated quoted field starting near line " +
                                std::to_string(line_));
            }
            finish_field();
            return true;
        }
        const char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in_.peek() == '"') {
                    in_.get();
                    field.push_back('"');
                } else {
                    in_quotes = false;
                    after_quote = true;
                }
            } else {
                if (ch == '\n') {
                    ++line_;
                }
                field.push_back(ch);
            }
            continue;
        }
        if (ch == ',') {
            finish_field();
        } else if (ch == '\n') {
            finish_field();
            return true;
        } else if (ch == '\r') {
            if (in_.peek() == '\n') {
                in_.get();
            }
            finish_field();
            return true;
        } else if (ch == '"' && field.empty() && !after_quote) {
            in_quotes = true;
            quoted = true;
        } else {
            if (after_quote) {
                throw DataError("csv: stray characters after closing quote on line " +
                                std::to_string(line_));
            }
            field.push_back(ch);
        }
    }
}

void append_field(std::string& out, std::string_view field) {
    const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!needs_quotes) {
        out.append(field);
        return;
    }
    out.push_back('"');
    for (char ch : field) {
        if (ch == '"') {
            out.push_back('"');
        }
        out.push_back(ch);
    }
    out.push_back('"');
}

void write_record(std::ostream& out, const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            line.push_back(',');
        }
        append_field(line, fields[i]);
    }
    line.push_back('\n');
    out << line;
}

}  // namespace srp::csv

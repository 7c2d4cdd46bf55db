#include "segline/csv.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace segline {

namespace {

std::vector<std::string> split_fields(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (quoted) {
        throw DataError("line " + std::to_string(line_no) + ": unterminated quoted field");
    }
    fields.push_back(std::move(cur));
    return fields;
}

double parse_number(std::string field, std::size_t line_no, std::size_t col) {
    const auto first = field.find_first_not_of(" \t");
    const auto last = field.find_last_not_of(" \t");
    if (first == std::string::npos) {
        throw DataError("line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                        ": empty cell");
    }
    field = field.substr(first, last - first + 1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw DataError("line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                        ": not a number: '" + field + "'");
    }
    return v;
}

} // namespace

Dataset parse_csv(const std::string& text, const CsvOptions& options) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    std::vector<std::vector<double>> rows;
    bool header_pending = options.has_header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) {
            line.erase(0, 3);
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        const std::vector<std::string> fields = split_fields(line, line_no);
        if (width == 0) {
            width = fields.size();
            if (options.response_column >= width) {
                throw DataError("line " + std::to_string(line_no) + ": response column " +
                                std::to_string(options.response_column + 1) + " missing");
            }
        } else if (fields.size() != width) {
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                            " fields, found " + std::to_string(fields.size()));
        }
        if (header_pending) {
            header_pending = false;
            continue;
        }
        std::vector<double> row(fields.size());
        for (std::size_t c = 0; c < fields.size(); ++c) {
            row[c] = parse_number(fields[c], line_no, c);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw DataError("no observations");
    }
    const std::size_t predictors = width - 1 + (options.intercept ? 1 : 0);
    if (predictors == 0) {
        throw DataError("no predictor columns; pass the intercept flag for a mean-shift model");
    }
    Matrix x(rows.size(), predictors);
    Vector y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::size_t j = 0;
        if (options.intercept) {
            x(i, j++) = 1.0;
        }
        for (std::size_t c = 0; c < width; ++c) {
            if (c == options.response_column) {
                y(i) = rows[i][c];
            } else {
                x(i, j++) = rows[i][c];
            }
        }
    }
    return Dataset(std::move(x), std::move(y));
}

Dataset load_csv(const std::string& path, const CsvOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), options);
}

std::string format_csv(const Dataset& data) {
    std::string out = "y";
    for (std::size_t j = 1; j <= data.q(); ++j) {
        out += fmt::format(",x{}", j);
    }
    out += '\n';
    for (std::size_t i = 0; i < data.n(); ++i) {
        out += fmt::format("{:.17g}", data.y()(static_cast<Eigen::Index>(i)));
        for (std::size_t j = 0; j < data.q(); ++j) {
            out += fmt::format(",{:.17g}", data.x()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        }
        out += '\n';
    }
    return out;
}

void write_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    out << format_csv(data);
}

} // namespace segline

#pragma once

#include "segline/data_model.hpp"

#include <string>

namespace segline {

struct CsvOptions {
    bool has_header = true;
    /// 0-based column holding the response; the other columns are predictors.
    std::size_t response_column = 0;
    /// Prepend a constant-1 predictor column.
    bool intercept = false;
};

/// Comma-separated numeric table, double quotes allowed around fields.
/// Throws DataError with the line number on malformed rows.
Dataset load_csv(const std::string& path, const CsvOptions& options = {});
Dataset parse_csv(const std::string& text, const CsvOptions& options = {});

/// Writes "y,x1,..,xq" with a header and 17 significant digits.
void write_csv(const std::string& path, const Dataset& data);
std::string format_csv(const Dataset& data);

} // namespace segline

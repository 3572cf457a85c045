#include "rhedge/csv_import.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace rhedge {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (...) {
        return false;
    }
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size();
}

} // namespace

PathBatch import_price_csv(const std::filesystem::path& path, std::size_t window,
                           double scale_to, std::size_t price_column, double dt) {
    if (window < 2) throw std::invalid_argument("import_price_csv: window must be >= 2");
    if (price_column < 1) throw std::invalid_argument("import_price_csv: price column is 1-based");
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("import_price_csv: cannot open " + path.string());

    std::vector<double> prices;
    std::string prev_date;
    std::string line;
    std::size_t line_no = 0;
    bool first_data_line = true;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto fields = split_csv_line(line);
        if (fields.size() < price_column + 1)
            throw std::invalid_argument("import_price_csv: line " + std::to_string(line_no) +
                                        " has too few columns");
        double value;
        if (!parse_double(fields[price_column], value)) {
            if (first_data_line) {
                // header row
                first_data_line = false;
                continue;
            }
            throw std::invalid_argument("import_price_csv: missing or non-numeric price at line " +
                                        std::to_string(line_no));
        }
        first_data_line = false;
        const std::string& date = fields[0];
        if (!prev_date.empty() && date <= prev_date)
            throw std::invalid_argument("import_price_csv: non-monotone dates at line " +
                                        std::to_string(line_no));
        prev_date = date;
        prices.push_back(value);
    }
    if (prices.size() < window)
        throw std::invalid_argument("import_price_csv: series shorter than the window");

    const std::size_t n_windows = prices.size() - window + 1;
    PathBatch batch = PathBatch::zeros(n_windows, {"S"}, window - 1, dt);
    for (std::size_t i = 0; i < n_windows; ++i) {
        const double base = prices[i];
        if (base == 0.0)
            throw std::invalid_argument("import_price_csv: zero price cannot anchor a window");
        for (std::size_t t = 0; t < window; ++t)
            batch.at(i, 0, t) = t == 0 ? scale_to : scale_to * (prices[i + t] / base);
    }
    return batch;
}

} // namespace rhedge

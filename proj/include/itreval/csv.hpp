#pragma once

#include <span>
#include <string>
#include <vector>

#include "itreval/data.hpp"

namespace itreval {

// Fully numeric CSV: header row plus row-major cells. Comma-separated,
// UTF-8, '.' decimal point; fields are trimmed of surrounding ASCII space.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<double> cells;  // rows x header.size()
  std::size_t rows = 0;

  double at(std::size_t r, std::size_t c) const {
    return cells[r * header.size() + c];
  }
};

// Parse errors carry the origin label and 1-based line number.
CsvTable parse_csv(const std::string& text, const std::string& origin);
CsvTable read_csv(const std::string& path);

// Experiment loader: requires columns named "outcome" and "treatment"
// (exact match); every other column becomes a covariate in file order.
// Treatment cells must be exactly 0 or 1.
ExperimentDataset load_experiment_csv(const std::string& path);

// Shortest representation that round-trips the double exactly.
std::string format_double(double v);

void write_csv(const std::string& path, std::span<const std::string> header,
               const std::vector<std::vector<double>>& rows);

// Same layout with preformatted cells (labels plus numbers).
void write_csv_text(const std::string& path,
                    std::span<const std::string> header,
                    const std::vector<std::vector<std::string>>& rows);

}  // namespace itreval

#include "itreval/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "itreval/error.hpp"

namespace itreval {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

[[noreturn]] void parse_fail(const std::string& origin, std::size_t line,
                             const std::string& what) {
  throw Error(Errc::kParse,
              origin + " line " + std::to_string(line) + ": " + what);
}

double parse_number(std::string_view field, const std::string& origin,
                    std::size_t line, const std::string& column) {
  if (field.empty())
    parse_fail(origin, line, "empty value in column '" + column + "'");
  double value = 0.0;
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    parse_fail(origin, line,
               "cannot parse '" + std::string(field) + "' in column '" +
                   column + "' as a number");
  return value;
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  std::string_view rest = text;
  if (rest.size() >= 3 && rest.substr(0, 3) == "\xEF\xBB\xBF")
    rest.remove_prefix(3);  // UTF-8 byte order mark

  CsvTable table;
  std::size_t line_no = 0;
  while (!rest.empty()) {
    std::size_t nl = rest.find('\n');
    std::string_view line =
        nl == std::string_view::npos ? rest : rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{}
                                        : rest.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (line.empty() && rest.empty() && line_no > 1) break;  // trailing newline

    std::vector<std::string_view> fields = split_fields(line);
    if (line_no == 1) {
      for (std::string_view f : fields) {
        if (f.empty()) parse_fail(origin, 1, "empty column name in header");
        for (const std::string& seen : table.header)
          if (seen == f)
            parse_fail(origin, 1, "duplicate column '" + std::string(f) + "'");
        table.header.emplace_back(f);
      }
      continue;
    }
    if (fields.size() != table.header.size())
      parse_fail(origin, line_no,
                 "expected " + std::to_string(table.header.size()) +
                     " fields, found " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < fields.size(); ++c)
      table.cells.push_back(
          parse_number(fields[c], origin, line_no, table.header[c]));
    ++table.rows;
  }
  if (line_no == 0) throw Error(Errc::kParse, origin + ": empty file");
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kParse, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path);
}

ExperimentDataset load_experiment_csv(const std::string& path) {
  CsvTable table = read_csv(path);
  std::size_t outcome_col = table.header.size();
  std::size_t treatment_col = table.header.size();
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (table.header[c] == "outcome") outcome_col = c;
    if (table.header[c] == "treatment") treatment_col = c;
  }
  if (outcome_col == table.header.size())
    throw Error(Errc::kParse, path + ": missing required column 'outcome'");
  if (treatment_col == table.header.size())
    throw Error(Errc::kParse, path + ": missing required column 'treatment'");

  ExperimentDataset data;
  std::size_t width = table.header.size() - 2;
  data.covariates.rows = table.rows;
  data.covariates.cols = width;
  data.covariates.values.reserve(table.rows * width);
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != outcome_col && c != treatment_col)
      data.covariate_names.push_back(table.header[c]);
  data.outcome.reserve(table.rows);
  data.treatment.reserve(table.rows);
  for (std::size_t r = 0; r < table.rows; ++r) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      double v = table.at(r, c);
      if (c == outcome_col) {
        data.outcome.push_back(v);
      } else if (c == treatment_col) {
        if (v != 0.0 && v != 1.0)
          throw Error(Errc::kParse,
                      path + " line " + std::to_string(r + 2) +
                          ": treatment must be 0 or 1, found " +
                          format_double(v));
        data.treatment.push_back(static_cast<std::uint8_t>(v));
      } else {
        data.covariates.values.push_back(v);
      }
    }
  }
  return data;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }
  return std::string(buf, ptr);
}

void write_csv(const std::string& path, std::span<const std::string> header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::kConfig, "cannot open '" + path + "' for writing");
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out << ',';
    out << header[c];
  }
  out << '\n';
  for (const std::vector<double>& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << format_double(row[c]);
    }
    out << '\n';
  }
  if (!out) throw Error(Errc::kConfig, "write failed for '" + path + "'");
}

void write_csv_text(const std::string& path,
                    std::span<const std::string> header,
                    const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::kConfig, "cannot open '" + path + "' for writing");
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out << ',';
    out << header[c];
  }
  out << '\n';
  for (const std::vector<std::string>& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << row[c];
    }
    out << '\n';
  }
  if (!out) throw Error(Errc::kConfig, "write failed for '" + path + "'");
}

}  // namespace itreval

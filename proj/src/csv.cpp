#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "setid/dataset.hpp"
#include "setid/errors.hpp"

namespace setid {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

// Parses "d_3" style names; returns 0 when the name does not match.
int indexed_column(const std::string& name, const std::string& prefix) {
  if (name.rfind(prefix, 0) != 0) return 0;
  int idx = 0;
  const char* first = name.data() + prefix.size();
  const char* last = name.data() + name.size();
  auto [ptr, ec] = std::from_chars(first, last, idx);
  if (ec != std::errc() || ptr != last || idx < 1) return 0;
  return idx;
}

double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    throw DataError("cannot parse '" + cell + "' in column " + column, line);
  return v;
}

}  // namespace

Dataset parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV", 1);
  const auto header = split_fields(line);

  std::map<int, std::size_t> d_cols, x_cols;
  std::map<std::string, std::size_t> named;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& h = header[c];
    if (int k = indexed_column(h, "d_")) {
      if (!d_cols.emplace(k, c).second) throw DataError("duplicate column " + h, 1);
    } else if (int k2 = indexed_column(h, "x_")) {
      if (!x_cols.emplace(k2, c).second) throw DataError("duplicate column " + h, 1);
    } else if (h == "s" || h == "y" || h == "y_lower" || h == "y_upper") {
      if (!named.emplace(h, c).second) throw DataError("duplicate column " + h, 1);
    } else {
      throw DataError("unknown column '" + h + "'", 1);
    }
  }
  auto check_contiguous = [](const std::map<int, std::size_t>& cols, const char* prefix) {
    int expect = 1;
    for (const auto& [k, c] : cols) {
      if (k != expect) throw DataError(std::string("columns ") + prefix + "1.." + " must be contiguous", 1);
      ++expect;
    }
  };
  check_contiguous(d_cols, "d_");
  check_contiguous(x_cols, "x_");
  if (d_cols.empty()) throw DataError("no d_ columns", 1);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw DataError("expected " + std::to_string(header.size()) + " fields, found " +
                          std::to_string(fields.size()),
                      lineno);
    rows.push_back(std::move(fields));
    row_lines.push_back(lineno);
  }

  const auto n = static_cast<Index>(rows.size());
  Dataset data;
  data.D.resize(n, static_cast<Index>(d_cols.size()));
  data.X.resize(n, static_cast<Index>(x_cols.size()));
  for (Index i = 0; i < n; ++i) {
    const auto& r = rows[i];
    for (const auto& [k, c] : d_cols) {
      if (r[c].empty()) throw DataError("missing value in " + header[c], row_lines[i]);
      data.D(i, k - 1) = parse_number(r[c], row_lines[i], header[c]);
    }
    for (const auto& [k, c] : x_cols) {
      if (r[c].empty()) throw DataError("missing value in " + header[c], row_lines[i]);
      data.X(i, k - 1) = parse_number(r[c], row_lines[i], header[c]);
    }
  }
  auto column = [&](const std::string& name) -> std::optional<VectorXd> {
    auto it = named.find(name);
    if (it == named.end()) return std::nullopt;
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) {
      const auto& cell = rows[i][it->second];
      v(i) = cell.empty() ? std::nan("") : parse_number(cell, row_lines[i], name);
    }
    return v;
  };
  data.S = column("s");
  data.Y = column("y");
  data.YL = column("y_lower");
  data.YU = column("y_upper");
  if (data.S)
    for (Index i = 0; i < n; ++i)
      if (std::isnan((*data.S)(i))) throw DataError("missing value in s", row_lines[i]);
  return data;
}

Dataset read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str());
}

std::string format_csv(const Dataset& data) {
  std::ostringstream out;
  out.precision(17);
  std::vector<std::string> header;
  for (Index j = 0; j < data.dim_d(); ++j) header.push_back("d_" + std::to_string(j + 1));
  for (Index j = 0; j < data.dim_p(); ++j) header.push_back("x_" + std::to_string(j + 1));
  if (data.S) header.push_back("s");
  if (data.Y) header.push_back("y");
  if (data.YL) header.push_back("y_lower");
  if (data.YU) header.push_back("y_upper");
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  auto cell = [&](double v) {
    if (!std::isnan(v)) out << v;
  };
  for (Index i = 0; i < data.n(); ++i) {
    bool first = true;
    auto sep = [&] {
      if (!first) out << ',';
      first = false;
    };
    for (Index j = 0; j < data.dim_d(); ++j) { sep(); cell(data.D(i, j)); }
    for (Index j = 0; j < data.dim_p(); ++j) { sep(); cell(data.X(i, j)); }
    for (const auto* col : {&data.S, &data.Y, &data.YL, &data.YU})
      if (*col) { sep(); cell((**col)(i)); }
    out << '\n';
  }
  return out.str();
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << format_csv(data);
}

}  // namespace setid

#include "stiv/errors.hpp"
#include "stiv/model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

namespace stiv {

namespace {

std::string trim(std::string_view s) {
  size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '"')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r' || s[b - 1] == '"'))
    --b;
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    size_t pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

enum class Role { y, x, z, zbar };

struct Column {
  Role role;
  int index; // 0-based within its block
};

std::optional<int> suffix_index(const std::string& name, const std::string& prefix) {
  if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0)
    return std::nullopt;
  int v = 0;
  auto s = std::string_view(name).substr(prefix.size());
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v < 1) return std::nullopt;
  return v - 1;
}

Column classify(const std::string& name, long col) {
  if (name == "y") return {Role::y, 0};
  if (auto i = suffix_index(name, "zbar")) return {Role::zbar, *i};
  if (auto i = suffix_index(name, "x")) return {Role::x, *i};
  if (auto i = suffix_index(name, "z")) return {Role::z, *i};
  throw ParseError("unrecognized column name '" + name + "'", 1, col);
}

int block_size(const std::vector<Column>& cols, Role role, const char* prefix) {
  std::vector<int> seen;
  for (const auto& c : cols)
    if (c.role == role) seen.push_back(c.index);
  std::sort(seen.begin(), seen.end());
  for (size_t i = 0; i < seen.size(); ++i)
    if (seen[i] != static_cast<int>(i))
      throw ParseError(std::string("columns ") + prefix + "1.." + prefix +
                           std::to_string(seen.size()) + " must each appear exactly once",
                       1);
  return static_cast<int>(seen.size());
}

} // namespace

Dataset load_dataset(std::istream& in, const std::vector<int>& endo_1based,
                     const InstrumentSpec& spec) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input: header row missing", 1);
  auto header = split(line);
  std::vector<Column> cols;
  for (size_t j = 0; j < header.size(); ++j)
    cols.push_back(classify(header[j], static_cast<long>(j + 1)));
  int ny = 0;
  for (const auto& c : cols) ny += c.role == Role::y;
  if (ny != 1) throw ParseError("header must contain exactly one 'y' column", 1);
  const int K = block_size(cols, Role::x, "x");
  const int L = block_size(cols, Role::z, "z");
  const int L1 = block_size(cols, Role::zbar, "zbar");
  if (K < 1) throw ParseError("header has no regressor columns x1..xK", 1);

  std::vector<std::vector<double>> rows;
  long rowno = 1;
  while (std::getline(in, line)) {
    ++rowno;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size()) {
      std::ostringstream m;
      m << "row " << rowno << " has " << cells.size() << " cells, header has " << header.size();
      throw ParseError(m.str(), rowno);
    }
    std::vector<double> vals(cells.size());
    for (size_t j = 0; j < cells.size(); ++j) {
      const std::string& s = cells[j];
      double v = 0.0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
        std::ostringstream m;
        m << "row " << rowno << ", column " << j + 1 << " ('" << header[j]
          << "'): not a finite number: '" << s << "'";
        throw ParseError(m.str(), rowno, static_cast<long>(j + 1));
      }
      vals[j] = v;
    }
    rows.push_back(std::move(vals));
  }
  const Index n = static_cast<Index>(rows.size());
  if (n < 1) throw ParseError("no data rows", 2);

  VectorXd y(n);
  MatrixXd X(n, K), Z(n, L);
  std::optional<MatrixXd> zbar;
  if (L1 > 0) zbar = MatrixXd(n, L1);
  for (Index i = 0; i < n; ++i)
    for (size_t j = 0; j < cols.size(); ++j) {
      double v = rows[static_cast<size_t>(i)][j];
      switch (cols[j].role) {
      case Role::y: y(i) = v; break;
      case Role::x: X(i, cols[j].index) = v; break;
      case Role::z: Z(i, cols[j].index) = v; break;
      case Role::zbar: (*zbar)(i, cols[j].index) = v; break;
      }
    }

  IndexSet endo;
  for (int k : endo_1based) endo.push_back(k - 1);
  if (spec.exogenous_map.empty()) return Dataset(y, X, Z, endo, zbar);
  std::map<int, int> map;
  for (auto [k, l] : spec.exogenous_map) map[k - 1] = l - 1;
  return Dataset(y, X, Z, endo, zbar, map);
}

Dataset load_dataset_file(const std::string& path, const std::vector<int>& endo_1based,
                          const InstrumentSpec& spec) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return load_dataset(in, endo_1based, spec);
}

void write_dataset_csv(std::ostream& os, const Dataset& d) {
  os << "y";
  for (Index k = 0; k < d.K(); ++k) os << ",x" << k + 1;
  for (Index l = 0; l < d.L(); ++l) os << ",z" << l + 1;
  for (Index l = 0; l < d.L1(); ++l) os << ",zbar" << l + 1;
  os << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index i = 0; i < d.n(); ++i) {
    os << d.y()(i);
    for (Index k = 0; k < d.K(); ++k) os << ',' << d.X()(i, k);
    for (Index l = 0; l < d.L(); ++l) os << ',' << d.Z()(i, l);
    for (Index l = 0; l < d.L1(); ++l) os << ',' << d.zbar()(i, l);
    os << '\n';
  }
}

} // namespace stiv

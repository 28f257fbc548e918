#pragma once

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "fligan/errors.hpp"
#include "fligan/random.hpp"

namespace fligan {

/// Collects non-fatal conditions (dropped rows, skipped labels, ...) so the
/// caller can surface them in the run log.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
};

inline void warn_to(Diagnostics* diag, std::string message) {
  if (diag) diag->warn(std::move(message));
}

struct TableSchema {
  std::vector<std::string> column_names;
  std::vector<std::string> categorical_cols;
  std::vector<std::string> continuous_cols;
  std::string target_col;

  /// Throws SchemaError unless categorical, continuous and {target} are
  /// pairwise disjoint and cover column_names exactly.
  void validate() const {
    std::set<std::string> all(column_names.begin(), column_names.end());
    if (all.size() != column_names.size()) throw SchemaError("duplicate column name in schema");
    std::set<std::string> seen;
    auto claim = [&](const std::string& name, const char* kind) {
      if (!all.count(name))
        throw SchemaError(std::string(kind) + " column '" + name + "' is not in column_names");
      if (!seen.insert(name).second)
        throw SchemaError("column '" + name + "' declared in more than one role");
    };
    for (const auto& c : categorical_cols) claim(c, "categorical");
    for (const auto& c : continuous_cols) claim(c, "continuous");
    if (target_col.empty()) throw SchemaError("schema has no target column");
    claim(target_col, "target");
    if (seen.size() != all.size()) {
      for (const auto& c : column_names)
        if (!seen.count(c)) throw SchemaError("column '" + c + "' has no declared role");
    }
  }

  std::size_t index_of(const std::string& name) const {
    auto it = std::find(column_names.begin(), column_names.end(), name);
    if (it == column_names.end()) throw SchemaError("unknown column '" + name + "'");
    return static_cast<std::size_t>(it - column_names.begin());
  }

  bool is_continuous(const std::string& name) const {
    return std::find(continuous_cols.begin(), continuous_cols.end(), name) != continuous_cols.end();
  }

  std::size_t target_index() const { return index_of(target_col); }

  bool operator==(const TableSchema&) const = default;
};

/// Continuous cells hold double, categorical (and target) cells hold text.
using Value = std::variant<double, std::string>;
using Row = std::vector<Value>;

struct Dataset {
  TableSchema schema;
  std::vector<Row> rows;  // each row indexed like schema.column_names

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }

  const std::string& label(std::size_t row) const {
    return std::get<std::string>(rows[row][schema.target_index()]);
  }

  const Value& at(std::size_t row, const std::string& column) const {
    return rows[row][schema.index_of(column)];
  }

  /// Empty dataset sharing this schema.
  Dataset like() const { return Dataset{schema, {}}; }

  void append(const Dataset& other) {
    if (!(other.schema == schema)) throw ContractError("append: schema mismatch");
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  }

  bool operator==(const Dataset&) const = default;
};

struct NodePartition {
  int node_id = 0;
  Dataset data;
};

struct ClassDistribution {
  int node_id = 0;
  std::map<std::string, std::size_t> counts;

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& [_, c] : counts) t += c;
    return t;
  }
  std::size_t count(const std::string& label) const {
    auto it = counts.find(label);
    return it == counts.end() ? 0 : it->second;
  }
  bool operator==(const ClassDistribution&) const = default;
};

// ---------------------------------------------------------------------------
// CSV loading

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Splits one CSV record; double quotes delimit fields that may contain
/// commas, and "" inside a quoted field is a literal quote.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(text.c_str(), &end);
  return errno == 0 && end == text.c_str() + text.size() && std::isfinite(out);
}

}  // namespace detail

struct LoadOptions {
  // Cells equal to one of these (after trimming) count as missing.
  std::vector<std::string> missing_tokens{"", "?"};
};

struct LoadResult {
  Dataset data;
  std::size_t dropped_rows = 0;  // rows rejected for having a missing cell
};

inline LoadResult parse_csv(std::istream& in, const TableSchema& schema,
                            const LoadOptions& opts = {}) {
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("input has no header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);

  // file column -> schema column
  std::vector<std::size_t> to_schema(header.size());
  std::vector<bool> present(schema.column_names.size(), false);
  for (std::size_t i = 0; i < header.size(); ++i) {
    auto it = std::find(schema.column_names.begin(), schema.column_names.end(), header[i]);
    if (it == schema.column_names.end())
      throw SchemaError("column '" + header[i] + "' in file is not declared in the schema");
    std::size_t idx = static_cast<std::size_t>(it - schema.column_names.begin());
    if (present[idx]) throw SchemaError("column '" + header[i] + "' appears twice in header");
    present[idx] = true;
    to_schema[i] = idx;
  }
  for (std::size_t i = 0; i < present.size(); ++i)
    if (!present[i]) throw SchemaError("missing column '" + schema.column_names[i] + "'");

  std::vector<bool> continuous(schema.column_names.size());
  for (std::size_t i = 0; i < continuous.size(); ++i)
    continuous[i] = schema.is_continuous(schema.column_names[i]);

  LoadResult result{Dataset{schema, {}}, 0};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    bool missing = false;
    for (const auto& c : cells)
      if (std::find(opts.missing_tokens.begin(), opts.missing_tokens.end(), c) !=
          opts.missing_tokens.end())
        missing = true;
    if (missing) {
      ++result.dropped_rows;
      continue;
    }
    Row row(schema.column_names.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      std::size_t col = to_schema[i];
      if (continuous[col]) {
        double v;
        if (!detail::parse_double(cells[i], v))
          throw ParseError("row " + std::to_string(line_no) + ", column '" +
                           schema.column_names[col] + "': cannot parse '" + cells[i] +
                           "' as a number");
        row[col] = v;
      } else {
        row[col] = cells[i];
      }
    }
    result.data.rows.push_back(std::move(row));
  }
  return result;
}

inline LoadResult load_dataset(const std::string& path, const TableSchema& schema,
                               const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file '" + path + "'");
  return parse_csv(in, schema, opts);
}

inline void write_csv(std::ostream& out, const Dataset& data) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  for (std::size_t i = 0; i < data.schema.column_names.size(); ++i)
    out << (i ? "," : "") << quote(data.schema.column_names[i]);
  out << '\n';
  std::ostringstream num;
  num.precision(17);
  for (const auto& row : data.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      if (const auto* d = std::get_if<double>(&row[i])) {
        num.str("");
        num << *d;
        out << num.str();
      } else {
        out << quote(std::get<std::string>(row[i]));
      }
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splitting and partitioning

/// Row indices per class label, in row order, keyed by sorted label.
inline std::map<std::string, std::vector<std::size_t>> rows_by_label(const Dataset& data) {
  std::map<std::string, std::vector<std::size_t>> by;
  for (std::size_t i = 0; i < data.size(); ++i) by[data.label(i)].push_back(i);
  return by;
}

/// Stratified split. Each class contributes floor(test_fraction * class_size)
/// rows to the test set; rows keep their original relative order.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction,
                                                    std::uint64_t seed,
                                                    Diagnostics* diag = nullptr) {
  require(!data.empty(), "split_train_test: empty dataset");
  require(test_fraction > 0.0 && test_fraction < 1.0,
          "split_train_test: test_fraction must lie in (0, 1)");
  Rng rng(derive_seed(seed, {0x5b17}));
  std::vector<bool> is_test(data.size(), false);
  for (auto& [label, idx] : rows_by_label(data)) {
    if (idx.size() == 1) {
      warn_to(diag, "class '" + label + "' has a single row; kept in the training split");
      continue;
    }
    auto n_test = static_cast<std::size_t>(
        std::floor(test_fraction * static_cast<double>(idx.size()) + 1e-9));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < n_test; ++k) is_test[idx[k]] = true;
  }
  Dataset train = data.like(), test = data.like();
  for (std::size_t i = 0; i < data.size(); ++i)
    (is_test[i] ? test : train).rows.push_back(data.rows[i]);
  return {std::move(train), std::move(test)};
}

/// Splits `total` items over `weights` (summing to 1) with largest-remainder
/// rounding; ties in the remainder go to the lower index.
inline std::vector<std::size_t> largest_remainder(std::size_t total,
                                                  const std::vector<double>& weights) {
  std::vector<std::size_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double exact = weights[i] * static_cast<double>(total);
    out[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += out[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) out[rem[k % rem.size()].second] += 1;
  return out;
}

/// Label-skew partition: for every class, a Dirichlet(alpha) vector over the
/// nodes decides how many of that class's rows each node receives.
inline std::vector<NodePartition> dirichlet_partition(const Dataset& data, int n_nodes,
                                                      double alpha, std::uint64_t seed) {
  require(!data.empty(), "dirichlet_partition: empty dataset");
  require(n_nodes >= 1, "dirichlet_partition: n_nodes must be >= 1");
  require(alpha > 0.0, "dirichlet_partition: alpha must be positive");
  const auto n = static_cast<std::size_t>(n_nodes);
  Rng rng(derive_seed(seed, {0xd1c}));
  std::vector<int> owner(data.size(), 0);
  for (auto& [label, idx] : rows_by_label(data)) {
    auto p = sample_symmetric_dirichlet(n, alpha, rng);
    auto counts = largest_remainder(idx.size(), p);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t pos = 0;
    for (std::size_t node = 0; node < n; ++node)
      for (std::size_t k = 0; k < counts[node]; ++k) owner[idx[pos++]] = static_cast<int>(node);
  }
  std::vector<NodePartition> parts(n);
  for (std::size_t node = 0; node < n; ++node) parts[node] = {static_cast<int>(node), data.like()};
  for (std::size_t i = 0; i < data.size(); ++i)
    parts[static_cast<std::size_t>(owner[i])].data.rows.push_back(data.rows[i]);
  return parts;
}

inline ClassDistribution class_distribution(const NodePartition& part) {
  ClassDistribution d{part.node_id, {}};
  for (std::size_t i = 0; i < part.data.size(); ++i) ++d.counts[part.data.label(i)];
  return d;
}

}  // namespace fligan

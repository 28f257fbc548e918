#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include "fligan/errors.hpp"
#include "fligan/tabular.hpp"

namespace fligan {

struct Range {
  double min = 0.0;
  double max = 0.0;
  bool operator==(const Range&) const = default;
};

/// What a node reveals about its data during the encoding round: the distinct
/// categorical values, the continuous min/max, and its class counts.
struct LocalMetadata {
  int node_id = 0;
  TableSchema schema;
  std::map<std::string, std::set<std::string>> categories;
  std::map<std::string, Range> ranges;
  ClassDistribution class_dist;
};

/// One column's slot range inside an encoded row. A categorical block is
/// one-hot of width |vocab|; a continuous block has width 1.
struct ColumnBlock {
  std::string column;
  std::size_t offset = 0;
  std::size_t width = 0;
  bool categorical = false;
  bool operator==(const ColumnBlock&) const = default;
};

using Layout = std::vector<ColumnBlock>;

inline std::size_t layout_width(const Layout& layout) {
  return layout.empty() ? 0 : layout.back().offset + layout.back().width;
}

struct GlobalMetadata {
  TableSchema schema;
  std::map<std::string, std::vector<std::string>> vocab;  // sorted, duplicate-free
  std::map<std::string, Range> global_ranges;
  std::vector<std::string> class_labels;  // sorted union of observed labels
  std::vector<ClassDistribution> per_node_class_dist;
  std::set<std::string> degenerate_cols;  // continuous columns with min == max

  /// Feature blocks in schema column order, target excluded.
  Layout feature_layout() const {
    Layout layout;
    std::size_t offset = 0;
    for (const auto& col : schema.column_names) {
      if (col == schema.target_col) continue;
      bool cat = !schema.is_continuous(col);
      std::size_t width = cat ? vocab.at(col).size() : 1;
      layout.push_back({col, offset, width, cat});
      offset += width;
    }
    return layout;
  }

  /// Feature layout followed by a one-hot block over class_labels, for
  /// generators that must also produce the label.
  Layout labeled_layout() const {
    Layout layout = feature_layout();
    layout.push_back({schema.target_col, layout_width(layout), class_labels.size(), true});
    return layout;
  }

  std::size_t feature_width() const { return layout_width(feature_layout()); }

  int class_index(const std::string& label) const {
    auto it = std::lower_bound(class_labels.begin(), class_labels.end(), label);
    if (it == class_labels.end() || *it != label)
      throw EncodingError("label '" + label + "' is not in the global class list");
    return static_cast<int>(it - class_labels.begin());
  }

  bool operator==(const GlobalMetadata&) const = default;
};

struct EncodedMatrix {
  Eigen::MatrixXd rows;
  Layout layout;
  std::vector<int> labels;  // indices into GlobalMetadata::class_labels

  std::size_t size() const { return static_cast<std::size_t>(rows.rows()); }
};

inline LocalMetadata collect_local_metadata(const NodePartition& part, const TableSchema& schema) {
  LocalMetadata meta;
  meta.node_id = part.node_id;
  meta.schema = schema;
  meta.class_dist = class_distribution(part);
  const auto& data = part.data;
  for (std::size_t c = 0; c < schema.column_names.size(); ++c) {
    const auto& col = schema.column_names[c];
    if (col == schema.target_col || data.empty()) continue;
    if (schema.is_continuous(col)) {
      Range r{std::get<double>(data.rows[0][c]), std::get<double>(data.rows[0][c])};
      for (const auto& row : data.rows) {
        double v = std::get<double>(row[c]);
        r.min = std::min(r.min, v);
        r.max = std::max(r.max, v);
      }
      meta.ranges[col] = r;
    } else {
      auto& values = meta.categories[col];
      for (const auto& row : data.rows) values.insert(std::get<std::string>(row[c]));
    }
  }
  return meta;
}

/// Server-side reduction of the nodes' metadata. Sorted unions and
/// elementwise min/max make the result independent of arrival order.
inline GlobalMetadata merge_metadata(const std::vector<LocalMetadata>& locals) {
  require(!locals.empty(), "merge_metadata: no local metadata");
  GlobalMetadata gm;
  gm.schema = locals.front().schema;
  std::map<std::string, std::set<std::string>> cats;
  std::set<std::string> labels;
  for (const auto& local : locals) {
    if (!(local.schema == gm.schema))
      throw SchemaError("merge_metadata: node " + std::to_string(local.node_id) +
                        " reports a different schema");
    for (const auto& [col, values] : local.categories) cats[col].insert(values.begin(), values.end());
    for (const auto& [col, r] : local.ranges) {
      auto [it, fresh] = gm.global_ranges.emplace(col, r);
      if (!fresh) {
        it->second.min = std::min(it->second.min, r.min);
        it->second.max = std::max(it->second.max, r.max);
      }
    }
    for (const auto& [label, count] : local.class_dist.counts)
      if (count > 0) labels.insert(label);
    gm.per_node_class_dist.push_back(local.class_dist);
  }
  for (const auto& col : gm.schema.categorical_cols)
    gm.vocab[col] = std::vector<std::string>(cats[col].begin(), cats[col].end());
  for (const auto& col : gm.schema.continuous_cols) {
    auto [it, _] = gm.global_ranges.emplace(col, Range{});
    if (it->second.min == it->second.max) gm.degenerate_cols.insert(col);
  }
  gm.class_labels.assign(labels.begin(), labels.end());
  std::sort(gm.per_node_class_dist.begin(), gm.per_node_class_dist.end(),
            [](const auto& a, const auto& b) { return a.node_id < b.node_id; });
  return gm;
}

namespace detail {

inline constexpr std::size_t kUnseen = static_cast<std::size_t>(-1);

inline std::size_t vocab_index(const GlobalMetadata& gm, const std::string& col,
                               const std::string& value, bool allow_unseen = false) {
  const auto& v = gm.vocab.at(col);
  auto it = std::lower_bound(v.begin(), v.end(), value);
  if (it == v.end() || *it != value) {
    if (allow_unseen) return kUnseen;
    throw EncodingError("column '" + col + "': value '" + value +
                        "' is not in the global vocabulary");
  }
  return static_cast<std::size_t>(it - v.begin());
}

inline double scale_to_unit(double x, const Range& r) {
  if (r.max == r.min) return 0.0;
  return 2.0 * (x - r.min) / (r.max - r.min) - 1.0;
}

inline double scale_from_unit(double y, const Range& r) {
  double x = r.min + (y + 1.0) * 0.5 * (r.max - r.min);
  return std::clamp(x, r.min, r.max);
}

/// Lowest index wins on ties.
template <typename RowExpr>
inline std::size_t argmax(const RowExpr& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  return best;
}

inline EncodedMatrix encode_with_layout(const Dataset& data, const GlobalMetadata& gm,
                                        Layout layout, bool allow_unseen) {
  if (!(data.schema == gm.schema)) throw SchemaError("encode: dataset schema differs from metadata");
  EncodedMatrix m;
  m.layout = std::move(layout);
  m.rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(data.size()),
                                 static_cast<Eigen::Index>(layout_width(m.layout)));
  m.labels.resize(data.size());
  std::vector<std::size_t> col_index;
  for (const auto& b : m.layout) col_index.push_back(gm.schema.index_of(b.column));
  const std::size_t target = gm.schema.target_index();
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& row = data.rows[r];
    const auto ri = static_cast<Eigen::Index>(r);
    m.labels[r] = gm.class_index(std::get<std::string>(row[target]));
    for (std::size_t b = 0; b < m.layout.size(); ++b) {
      const auto& block = m.layout[b];
      const auto& cell = row[col_index[b]];
      if (block.column == gm.schema.target_col) {
        m.rows(ri, static_cast<Eigen::Index>(block.offset) + m.labels[r]) = 1.0;
      } else if (block.categorical) {
        auto k = vocab_index(gm, block.column, std::get<std::string>(cell), allow_unseen);
        if (k != kUnseen) m.rows(ri, static_cast<Eigen::Index>(block.offset + k)) = 1.0;
      } else {
        m.rows(ri, static_cast<Eigen::Index>(block.offset)) =
            scale_to_unit(std::get<double>(cell), gm.global_ranges.at(block.column));
      }
    }
  }
  return m;
}

}  // namespace detail

/// One-hot blocks in vocabulary order, continuous columns affinely mapped so
/// the global [min, max] lands on [-1, 1]. Row order is preserved.
inline EncodedMatrix encode(const Dataset& data, const GlobalMetadata& gm) {
  return detail::encode_with_layout(data, gm, gm.feature_layout(), false);
}

/// encode() for held-out evaluation data: a categorical value no training
/// node reported encodes as an all-zero block instead of failing.
inline EncodedMatrix encode_for_evaluation(const Dataset& data, const GlobalMetadata& gm) {
  return detail::encode_with_layout(data, gm, gm.feature_layout(), true);
}

/// encode() plus a trailing one-hot label block (see labeled_layout()).
inline EncodedMatrix encode_labeled(const Dataset& data, const GlobalMetadata& gm) {
  return detail::encode_with_layout(data, gm, gm.labeled_layout(), false);
}

/// Inverse of encode(). Categorical blocks need not be one-hot: the value at
/// the argmax slot is taken. Continuous slots are clipped to the global range.
/// If the layout carries a label block, labels come from it instead of m.labels.
inline Dataset decode(const EncodedMatrix& m, const GlobalMetadata& gm) {
  require(layout_width(m.layout) == static_cast<std::size_t>(m.rows.cols()),
          "decode: layout width does not match matrix");
  const std::size_t target = gm.schema.target_index();
  const bool label_block =
      std::any_of(m.layout.begin(), m.layout.end(),
                  [&](const ColumnBlock& b) { return b.column == gm.schema.target_col; });
  require(label_block || m.labels.size() == m.size(), "decode: label vector length mismatch");
  Dataset out{gm.schema, {}};
  out.rows.reserve(m.size());
  std::vector<std::size_t> col_index;
  for (const auto& b : m.layout) col_index.push_back(gm.schema.index_of(b.column));
  for (Eigen::Index r = 0; r < m.rows.rows(); ++r) {
    Row row(gm.schema.column_names.size());
    if (!label_block) row[target] = gm.class_labels.at(static_cast<std::size_t>(m.labels[static_cast<std::size_t>(r)]));
    for (std::size_t b = 0; b < m.layout.size(); ++b) {
      const auto& block = m.layout[b];
      const auto off = static_cast<Eigen::Index>(block.offset);
      const auto w = static_cast<Eigen::Index>(block.width);
      if (block.column == gm.schema.target_col) {
        row[target] = gm.class_labels.at(detail::argmax(m.rows.row(r).segment(off, w)));
      } else if (block.categorical) {
        const auto& v = gm.vocab.at(block.column);
        require(!v.empty(), "decode: empty vocabulary for column '" + block.column + "'");
        row[col_index[b]] = v.at(detail::argmax(m.rows.row(r).segment(off, w)));
      } else {
        row[col_index[b]] = detail::scale_from_unit(m.rows(r, off), gm.global_ranges.at(block.column));
      }
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structured-text persistence

inline nlohmann::json to_json(const TableSchema& s) {
  return {{"column_names", s.column_names},
          {"categorical_cols", s.categorical_cols},
          {"continuous_cols", s.continuous_cols},
          {"target_col", s.target_col}};
}

inline TableSchema schema_from_json(const nlohmann::json& j) {
  TableSchema s;
  s.column_names = j.at("column_names").get<std::vector<std::string>>();
  s.categorical_cols = j.value("categorical_cols", std::vector<std::string>{});
  s.continuous_cols = j.value("continuous_cols", std::vector<std::string>{});
  s.target_col = j.at("target_col").get<std::string>();
  s.validate();
  return s;
}

inline nlohmann::json to_json(const ClassDistribution& d) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [k, v] : d.counts) counts[k] = v;
  return {{"node_id", d.node_id}, {"counts", counts}};
}

inline nlohmann::json to_json(const GlobalMetadata& gm) {
  nlohmann::json j;
  j["schema"] = to_json(gm.schema);
  j["vocab"] = nlohmann::json::object();
  for (const auto& [col, v] : gm.vocab) j["vocab"][col] = v;
  j["global_ranges"] = nlohmann::json::object();
  for (const auto& [col, r] : gm.global_ranges) j["global_ranges"][col] = {{"min", r.min}, {"max", r.max}};
  j["class_labels"] = gm.class_labels;
  j["per_node_class_dist"] = nlohmann::json::array();
  for (const auto& d : gm.per_node_class_dist) j["per_node_class_dist"].push_back(to_json(d));
  j["degenerate_cols"] = std::vector<std::string>(gm.degenerate_cols.begin(), gm.degenerate_cols.end());
  return j;
}

inline GlobalMetadata global_metadata_from_json(const nlohmann::json& j) {
  GlobalMetadata gm;
  gm.schema = schema_from_json(j.at("schema"));
  for (const auto& [col, v] : j.at("vocab").items()) gm.vocab[col] = v.get<std::vector<std::string>>();
  for (const auto& [col, r] : j.at("global_ranges").items())
    gm.global_ranges[col] = {r.at("min").get<double>(), r.at("max").get<double>()};
  gm.class_labels = j.at("class_labels").get<std::vector<std::string>>();
  for (const auto& d : j.at("per_node_class_dist")) {
    ClassDistribution cd{d.at("node_id").get<int>(), {}};
    for (const auto& [k, v] : d.at("counts").items()) cd.counts[k] = v.get<std::size_t>();
    gm.per_node_class_dist.push_back(std::move(cd));
  }
  for (const auto& c : j.value("degenerate_cols", std::vector<std::string>{})) gm.degenerate_cols.insert(c);
  return gm;
}

}  // namespace fligan

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fligan/errors.hpp"
#include "fligan/tabular.hpp"

namespace fligan {

/// Shape of a benchmark dataset. Column counts include the target, which is
/// counted as categorical.
struct DatasetDescriptor {
  std::string name;
  std::size_t approx_rows = 0;
  std::size_t n_categorical = 0;
  std::size_t n_continuous = 0;
  std::optional<TableSchema> schema;  // present when the public column names are fixed

  std::size_t n_total() const { return n_categorical + n_continuous; }

  /// Throws SchemaError if `s` does not have this dataset's column counts.
  void check(const TableSchema& s) const {
    s.validate();
    if (s.categorical_cols.size() + 1 != n_categorical || s.continuous_cols.size() != n_continuous)
      throw SchemaError("schema does not match the " + name + " layout (" + std::to_string(n_categorical) +
                        " categorical incl. target, " + std::to_string(n_continuous) + " continuous)");
  }
};

namespace detail {

inline TableSchema make_schema(std::vector<std::string> columns, const std::vector<std::string>& continuous,
                               std::string target) {
  TableSchema s;
  s.column_names = std::move(columns);
  s.continuous_cols = continuous;
  s.target_col = std::move(target);
  for (const auto& c : s.column_names)
    if (c != s.target_col && !s.is_continuous(c)) s.categorical_cols.push_back(c);
  s.validate();
  return s;
}

}  // namespace detail

inline const std::vector<DatasetDescriptor>& dataset_registry() {
  static const std::vector<DatasetDescriptor> registry = [] {
    std::vector<DatasetDescriptor> r;
    r.push_back({"adult", 49000, 9, 6,
                 detail::make_schema({"age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
                                      "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
                                      "hours-per-week", "native-country", "income"},
                                     {"age", "fnlwgt", "education-num", "capital-gain", "capital-loss",
                                      "hours-per-week"},
                                     "income")});
    {
      std::vector<std::string> cols{"duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
                                    "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in",
                                    "num_compromised", "root_shell", "su_attempted", "num_root",
                                    "num_file_creations", "num_shells", "num_access_files", "num_outbound_cmds",
                                    "is_host_login", "is_guest_login", "count", "srv_count", "serror_rate",
                                    "srv_serror_rate", "rerror_rate", "srv_rerror_rate", "same_srv_rate",
                                    "diff_srv_rate", "srv_diff_host_rate", "dst_host_count", "dst_host_srv_count",
                                    "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
                                    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate",
                                    "dst_host_serror_rate", "dst_host_srv_serror_rate", "dst_host_rerror_rate",
                                    "dst_host_srv_rerror_rate", "class"};
      std::vector<std::string> cont;
      for (const auto& c : cols)
        if (c != "protocol_type" && c != "service" && c != "flag" && c != "class") cont.push_back(c);
      r.push_back({"intrusion", 25000, 4, 38, detail::make_schema(cols, cont, "class")});
    }
    r.push_back({"creditcard", 13000, 8, 14, std::nullopt});
    r.push_back({"bank", 10000, 11, 6,
                 detail::make_schema({"age", "job", "marital", "education", "default", "balance", "housing", "loan",
                                      "contact", "day", "month", "duration", "campaign", "pdays", "previous",
                                      "poutcome", "y"},
                                     {"age", "balance", "duration", "campaign", "pdays", "previous"}, "y")});
    r.push_back({"albert", 58000, 9, 23, std::nullopt});
    return r;
  }();
  return registry;
}

inline const DatasetDescriptor& find_dataset(const std::string& name) {
  for (const auto& d : dataset_registry())
    if (d.name == name) return d;
  throw ConfigError("unknown dataset '" + name + "'");
}

}  // namespace fligan

#include "scglrmix/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace scglrmix {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" ||
         s == "null" || s == ".";
}

double parse_cell(const std::string& raw, int row, const std::string& col) {
  const std::string s = trim(raw);
  if (is_missing(s)) {
    throw InputError("missing value at row " + std::to_string(row) +
                     ", column '" + col + "'");
  }
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s[0] == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw InputError("non-numeric value '" + s + "' at row " +
                     std::to_string(row) + ", column '" + col + "'");
  }
  return v;
}

}  // namespace

MatrixXd Standardization::apply_x(const MatrixXd& raw_x) const {
  if (!enabled) return raw_x;
  if (raw_x.cols() != x_center.size()) {
    throw InputError("X has " + std::to_string(raw_x.cols()) +
                     " columns, model expects " +
                     std::to_string(x_center.size()));
  }
  MatrixXd out = raw_x.rowwise() - x_center.transpose();
  return out.array().rowwise() / x_scale.transpose().array();
}

MatrixXd Standardization::apply_t(const MatrixXd& raw_t) const {
  if (!enabled) return raw_t;
  if (raw_t.cols() != t_center.size()) {
    throw InputError("T has " + std::to_string(raw_t.cols()) +
                     " columns, model expects " +
                     std::to_string(t_center.size()));
  }
  return raw_t.rowwise() - t_center.transpose();
}

void Dataset::validate() const {
  if (Y.cols() < 1) throw InputError("dataset needs at least 1 response");
  if (Y.rows() < 2) throw InputError("dataset needs at least 2 rows");
  validate_layout();
}

void Dataset::validate_layout() const {
  const auto n_rows = Y.rows();
  if (n_rows < 1) throw InputError("dataset has no rows");
  if (X.cols() < 1) throw InputError("dataset needs at least 1 explanatory column");
  if (X.rows() != n_rows || T.rows() != n_rows || W.size() != n_rows ||
      static_cast<Eigen::Index>(groups.size()) != n_rows) {
    throw InputError("dataset blocks have inconsistent row counts");
  }
  if (group_labels.empty()) throw InputError("dataset has no groups");
  std::vector<int> counts(group_labels.size(), 0);
  for (int g : groups) {
    if (g < 0 || g >= num_groups()) throw InputError("group code out of range");
    ++counts[g];
  }
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) {
      throw InputError("group '" + group_labels[j] + "' has no rows");
    }
  }
  if ((W.array() <= 0.0).any()) throw InputError("weights must be positive");
  if (std::abs(W.sum() - 1.0) > 1e-12) {
    throw InputError("weights must sum to 1");
  }
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
  Dataset out = *this;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.Y.resize(m, Y.cols());
  out.X.resize(m, X.cols());
  out.T.resize(m, T.cols());
  out.W.resize(m);
  out.groups.resize(rows.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    const int src = rows[static_cast<std::size_t>(i)];
    out.Y.row(i) = Y.row(src);
    out.X.row(i) = X.row(src);
    out.T.row(i) = T.row(src);
    out.W(i) = W(src);
    out.groups[static_cast<std::size_t>(i)] = groups[static_cast<std::size_t>(src)];
  }
  if (m > 0) out.W /= out.W.sum();
  // Re-encode so that every retained group has rows; labels are kept.
  std::vector<int> remap(group_labels.size(), -1);
  out.group_labels.clear();
  for (auto& g : out.groups) {
    auto& code = remap[static_cast<std::size_t>(g)];
    if (code < 0) {
      code = static_cast<int>(out.group_labels.size());
      out.group_labels.push_back(group_labels[static_cast<std::size_t>(g)]);
    }
    g = code;
  }
  return out;
}

MatrixXd group_design(const std::vector<int>& groups, int num_groups) {
  MatrixXd U = MatrixXd::Zero(static_cast<Eigen::Index>(groups.size()), num_groups);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    U(static_cast<Eigen::Index>(i), groups[i]) = 1.0;
  }
  return U;
}

Dataset parse_csv(std::istream& in, const Schema& schema,
                  const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw InputError(source + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  std::unordered_map<std::string, int> index;
  for (std::size_t j = 0; j < header.size(); ++j) {
    index.emplace(header[j], static_cast<int>(j));
  }
  auto col_of = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) {
      throw InputError(source + ": column '" + name + "' not found in header");
    }
    return it->second;
  };

  // A trailing '*' selects every header column with that prefix, in header order.
  auto expand = [&](const std::vector<std::string>& names) {
    std::vector<std::string> out;
    for (const auto& name : names) {
      if (name.empty() || name.back() != '*') {
        out.push_back(name);
        continue;
      }
      const std::string prefix = name.substr(0, name.size() - 1);
      const auto before = out.size();
      for (const auto& h : header) {
        if (h.compare(0, prefix.size(), prefix) == 0) out.push_back(h);
      }
      if (out.size() == before) {
        throw InputError(source + ": pattern '" + name + "' matches no column");
      }
    }
    return out;
  };
  std::vector<std::string> response = expand(schema.response);
  const std::vector<std::string> additional = expand(schema.additional);
  if (schema.responses_optional) {
    std::erase_if(response, [&](const std::string& c) { return !index.count(c); });
  } else if (response.empty()) {
    throw InputError("schema names no response column");
  }
  if (schema.group.empty()) throw InputError("schema names no group column");

  std::set<std::string> used;
  auto claim = [&](const std::string& name) {
    col_of(name);
    if (!used.insert(name).second) {
      throw InputError("column '" + name + "' assigned to more than one role");
    }
  };
  for (const auto& c : response) claim(c);
  for (const auto& c : additional) claim(c);
  claim(schema.group);
  if (schema.weights) claim(*schema.weights);

  std::vector<std::string> x_names = expand(schema.explanatory);
  if (x_names.empty()) {
    for (const auto& h : header) {
      if (!used.count(h)) x_names.push_back(h);
    }
  }
  for (const auto& c : x_names) claim(c);
  if (x_names.empty()) throw InputError("schema leaves no explanatory column");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty() || trim(line) == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw InputError(source + ": row " + std::to_string(rows.size() + 1) +
                       " has " + std::to_string(cells.size()) +
                       " fields, header has " + std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());

  auto fill = [&](const std::vector<std::string>& names) {
    MatrixXd M(n, static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
      const int c = col_of(names[j]);
      for (Eigen::Index i = 0; i < n; ++i) {
        M(i, static_cast<Eigen::Index>(j)) =
            parse_cell(rows[static_cast<std::size_t>(i)][c], static_cast<int>(i + 1), names[j]);
      }
    }
    return M;
  };

  Dataset ds;
  ds.response_names = response;
  ds.x_names = x_names;
  ds.t_names = additional;
  ds.group_name = schema.group;
  ds.weight_name = schema.weights;
  ds.Y = fill(response);
  ds.X = fill(x_names);
  MatrixXd extra = fill(additional);
  ds.has_intercept = schema.add_intercept;
  if (schema.add_intercept) {
    ds.T.resize(n, extra.cols() + 1);
    ds.T.col(0).setOnes();
    ds.T.rightCols(extra.cols()) = extra;
  } else {
    ds.T = extra;
  }

  const int gcol = col_of(schema.group);
  std::map<std::string, int> codes;
  ds.groups.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string label = trim(rows[static_cast<std::size_t>(i)][gcol]);
    if (label.empty() || label == "NA") {
      throw InputError("missing value at row " + std::to_string(i + 1) +
                       ", column '" + schema.group + "'");
    }
    auto [it, inserted] = codes.emplace(label, static_cast<int>(ds.group_labels.size()));
    if (inserted) ds.group_labels.push_back(label);
    ds.groups[static_cast<std::size_t>(i)] = it->second;
  }

  if (schema.weights) {
    ds.W = fill({*schema.weights}).col(0);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(ds.W(i) > 0.0)) {
        throw InputError("non-positive weight at row " + std::to_string(i + 1));
      }
    }
    ds.W /= ds.W.sum();
  } else {
    ds.W = VectorXd::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  }
  if (schema.responses_optional) {
    ds.validate_layout();
  } else {
    ds.validate();
  }
  return ds;
}

Dataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse_csv(in, schema, path);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  if (ds.n() == 0) throw InputError("refusing to write a dataset with 0 rows");
  const int t_offset = ds.has_intercept ? 1 : 0;
  std::vector<std::string> header;
  for (const auto& s : ds.response_names) header.push_back(s);
  for (const auto& s : ds.x_names) header.push_back(s);
  for (const auto& s : ds.t_names) header.push_back(s);
  header.push_back(ds.group_name);
  if (ds.weight_name) header.push_back(*ds.weight_name);
  for (std::size_t j = 0; j < header.size(); ++j) {
    out << (j ? "," : "") << quote_if_needed(header[j]);
  }
  out << '\n';
  for (int i = 0; i < ds.n(); ++i) {
    std::string row;
    auto put = [&](double v) {
      row += format_double(v);
      row += ',';
    };
    for (int k = 0; k < ds.q(); ++k) put(ds.Y(i, k));
    for (int j = 0; j < ds.p(); ++j) put(ds.X(i, j));
    for (int j = t_offset; j < ds.r(); ++j) put(ds.T(i, j));
    row += quote_if_needed(ds.group_labels[static_cast<std::size_t>(ds.groups[static_cast<std::size_t>(i)])]);
    if (ds.weight_name) {
      row += ',';
      row += format_double(ds.W(i));
    }
    out << row << '\n';
  }
}

void write_dataset(const Dataset& ds, const std::string& path) {
  if (ds.n() == 0) throw InputError("refusing to write a dataset with 0 rows");
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  write_dataset(ds, out);
  if (!out) throw InputError("write to '" + path + "' failed");
}

Schema schema_for(const Dataset& ds) {
  Schema s;
  s.response = ds.response_names;
  s.explanatory = ds.x_names;
  s.additional = ds.t_names;
  s.group = ds.group_name;
  s.weights = ds.weight_name;
  s.add_intercept = ds.has_intercept;
  return s;
}

double weighted_mean(const VectorXd& v, const VectorXd& w) { return w.dot(v); }

double weighted_variance(const VectorXd& v, const VectorXd& w) {
  const double m = weighted_mean(v, w);
  return w.dot((v.array() - m).square().matrix());
}

Dataset standardize(const Dataset& ds) {
  ds.validate();
  Dataset out = ds;
  const int p = ds.p();
  VectorXd center(p), scale(p);
  for (int j = 0; j < p; ++j) {
    const VectorXd col = ds.X.col(j);
    const double var = weighted_variance(col, ds.W);
    if (!(var > 1e-12)) {
      const std::string name =
          j < static_cast<int>(ds.x_names.size()) ? ds.x_names[static_cast<std::size_t>(j)]
                                                  : "x" + std::to_string(j + 1);
      throw InputError("explanatory column '" + name + "' is constant");
    }
    center(j) = weighted_mean(col, ds.W);
    scale(j) = std::sqrt(var);
    out.X.col(j) = (col.array() - center(j)) / scale(j);
  }
  VectorXd t_center = VectorXd::Zero(ds.r());
  for (int j = ds.has_intercept ? 1 : 0; j < ds.r(); ++j) {
    t_center(j) = weighted_mean(ds.T.col(j), ds.W);
    out.T.col(j).array() -= t_center(j);
  }

  Standardization& st = out.standardization;
  if (ds.standardization.enabled) {
    // raw -> old -> new composes to center_old + scale_old * center_new.
    st.x_center = ds.standardization.x_center.array() +
                  ds.standardization.x_scale.array() * center.array();
    st.x_scale = ds.standardization.x_scale.array() * scale.array();
    st.t_center = ds.standardization.t_center + t_center;
  } else {
    st.x_center = center;
    st.x_scale = scale;
    st.t_center = t_center;
  }
  st.enabled = true;
  return out;
}

}  // namespace scglrmix

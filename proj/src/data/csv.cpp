#include "tabicl/csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>

#include "tabicl/errors.hpp"
#include "tabicl/rng.hpp"

namespace tabicl {

namespace {

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Labelled {
  std::vector<std::size_t> rows;  // data row indices
  std::vector<std::string> labels;
};

// Builds the table from `order` (train rows first) with per-column encoding fit on the train part.
LabeledData assemble(const CsvData& csv, std::size_t target_col, const std::vector<std::size_t>& order,
                     std::size_t n_train, const std::vector<std::string>& class_names,
                     const std::vector<std::string>& row_labels) {
  LabeledData out;
  const std::size_t cols = csv.header.size() - 1;
  for (std::size_t c = 0; c < csv.header.size(); ++c)
    if (c != target_col) out.feature_names.push_back(csv.header[c]);
  out.categorical.assign(cols, false);
  std::vector<std::size_t> src;
  for (std::size_t c = 0; c < csv.header.size(); ++c)
    if (c != target_col) src.push_back(c);
  for (std::size_t j = 0; j < cols; ++j)
    for (const auto& row : csv.rows) {
      const auto& cell = row[src[j]];
      if (!is_missing_cell(cell) && !parse_number(cell)) {
        out.categorical[j] = true;
        break;
      }
    }

  Table& t = out.table;
  t.rows = order.size();
  t.cols = cols;
  t.n_train = n_train;
  t.values.resize(t.rows * cols);
  for (std::size_t j = 0; j < cols; ++j) {
    std::unordered_map<std::string, int> codes;
    if (out.categorical[j]) {
      for (std::size_t i = 0; i < n_train; ++i) {
        const auto& cell = csv.rows[order[i]][src[j]];
        if (!is_missing_cell(cell)) codes.emplace(trim(cell), static_cast<int>(codes.size()));
      }
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& cell = csv.rows[order[i]][src[j]];
      float v = std::numeric_limits<float>::quiet_NaN();
      if (!is_missing_cell(cell)) {
        if (out.categorical[j]) {
          const auto it = codes.find(trim(cell));
          v = it == codes.end() ? -1.0f : static_cast<float>(it->second);
        } else {
          v = static_cast<float>(*parse_number(cell));
        }
      }
      t.values[i * cols + j] = v;
    }
  }
  std::map<std::string, int> index;
  for (std::size_t c = 0; c < class_names.size(); ++c) index[class_names[c]] = static_cast<int>(c);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (row_labels[order[i]].empty()) continue;
    t.labels.push_back(index.at(row_labels[order[i]]));
  }
  out.class_names = class_names;
  out.row_ids = order;
  return out;
}

std::vector<std::string> sorted_classes(std::vector<std::string> labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  const bool numeric = std::all_of(labels.begin(), labels.end(), [](const std::string& s) { return parse_number(s).has_value(); });
  if (numeric) {
    std::stable_sort(labels.begin(), labels.end(),
                     [](const std::string& a, const std::string& b) { return *parse_number(a) < *parse_number(b); });
  }
  return labels;
}

std::size_t find_target(const CsvData& csv, const std::string& target, const std::string& path) {
  const auto it = std::find(csv.header.begin(), csv.header.end(), target);
  if (it == csv.header.end()) throw DataError(path + ": no column named '" + target + "'");
  if (csv.header.size() < 2) throw DataError(path + ": need at least one feature column besides the target");
  return static_cast<std::size_t>(it - csv.header.begin());
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_number) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  if (quoted) throw DataError("line " + std::to_string(line_number) + ", column " + std::to_string(fields.size() + 1) + ": unterminated quote");
  fields.push_back(cur);
  return fields;
}

CsvData read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  CsvData csv;
  std::string line;
  std::size_t line_number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty() || line[0] == '#') continue;
    auto fields = split_csv_line(line, line_number);
    if (!have_header) {
      for (auto& f : fields) f = trim(f);
      csv.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != csv.header.size()) {
      throw DataError(path + ": line " + std::to_string(line_number) + ": expected " + std::to_string(csv.header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    csv.rows.push_back(std::move(fields));
    csv.line_numbers.push_back(line_number);
  }
  if (!have_header) throw DataError(path + ": empty file");
  return csv;
}

bool is_missing_cell(const std::string& cell) {
  const auto t = lower(trim(cell));
  return t.empty() || t == "na" || t == "nan" || t == "?" || t == "null";
}

std::optional<double> parse_number(const std::string& cell) {
  const auto t = trim(cell);
  if (t.empty()) return std::nullopt;
  double v = 0;
  const char* begin = t.data();
  if (*begin == '+') ++begin;
  const auto [end, ec] = std::from_chars(begin, t.data() + t.size(), v);
  if (ec != std::errc() || end != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

LabeledData load_prediction_csv(const std::string& path, const std::string& target) {
  const auto csv = read_csv(path);
  const auto target_col = find_target(csv, target, path);
  std::vector<std::size_t> train, test;
  std::vector<std::string> labels(csv.rows.size());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto cell = trim(csv.rows[r][target_col]);
    if (cell.empty()) {
      test.push_back(r);
    } else {
      labels[r] = cell;
      train.push_back(r);
    }
  }
  if (train.empty()) throw DataError(path + ": no labelled rows");
  if (test.empty()) throw DataError(path + ": no test rows (rows with an empty '" + target + "' cell)");
  std::vector<std::string> train_labels;
  for (auto r : train) train_labels.push_back(labels[r]);
  const auto classes = sorted_classes(train_labels);
  if (classes.size() < 2) throw DataError(path + ": the target has a single class; need at least 2");
  std::vector<std::size_t> order = train;
  order.insert(order.end(), test.begin(), test.end());
  return assemble(csv, target_col, order, train.size(), classes, labels);
}

LabeledData load_evaluation_csv(const std::string& path, const std::string& target, double train_fraction,
                                std::uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction < 1)) throw DataError("train fraction must lie in (0, 1)");
  const auto csv = read_csv(path);
  const auto target_col = find_target(csv, target, path);
  std::vector<std::string> labels(csv.rows.size());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    labels[r] = trim(csv.rows[r][target_col]);
    if (labels[r].empty()) {
      throw DataError(path + ": line " + std::to_string(csv.line_numbers[r]) + ": missing '" + target + "' value");
    }
  }
  if (csv.rows.size() < 2) throw DataError(path + ": need at least 2 rows");
  const auto classes = sorted_classes(labels);
  if (classes.size() < 2) throw DataError(path + ": the target has a single class; need at least 2");
  Rng rng(seed);
  const auto order = rng.permutation(csv.rows.size());
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(csv.rows.size()))), 1, csv.rows.size() - 1);
  return assemble(csv, target_col, order, n_train, classes, labels);
}

double accuracy(std::span<const double> probs, std::size_t classes, std::span<const int> labels) {
  if (labels.empty()) throw DataError("accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto row = probs.subspan(r * classes, classes);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    hit += best == labels[r];
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

std::optional<double> auc_ovr(std::span<const double> probs, std::size_t classes, std::span<const int> labels) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> positives(classes, 0);
  for (int y : labels) ++positives[static_cast<std::size_t>(y)];
  std::size_t present = 0;
  for (auto p : positives) present += p > 0;
  if (present < 2) return std::nullopt;
  double total = 0;
  std::vector<std::size_t> idx(n);
  std::vector<double> rank(n);
  for (std::size_t c = 0; c < classes; ++c) {
    if (positives[c] == 0) continue;
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return probs[a * classes + c] < probs[b * classes + c]; });
    // Mid-ranks for ties.
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && probs[idx[j + 1] * classes + c] == probs[idx[i] * classes + c]) ++j;
      const double mid = 0.5 * static_cast<double>(i + j) + 1;
      for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
      i = j + 1;
    }
    double rank_sum = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (static_cast<std::size_t>(labels[i]) == c) rank_sum += rank[i];
    const double pos = static_cast<double>(positives[c]), neg = static_cast<double>(n) - pos;
    total += (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
  }
  return total / static_cast<double>(present);
}

double log_loss(std::span<const double> probs, std::size_t classes, std::span<const int> labels) {
  if (labels.empty()) throw DataError("log loss of an empty set");
  double s = 0;
  for (std::size_t r = 0; r < labels.size(); ++r)
    s -= std::log(std::max(probs[r * classes + static_cast<std::size_t>(labels[r])], 1e-15));
  return s / static_cast<double>(labels.size());
}

}  // namespace tabicl

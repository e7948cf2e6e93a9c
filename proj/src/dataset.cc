/*
 * Copyright 2026 The amescause Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "amescause/dataset.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "amescause/errors.h"
#include "amescause/random.h"

namespace amescause {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool IsMissingToken(std::string_view cell) {
  return cell.empty() || cell == kNaLevel;
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double ParseNumber(std::string_view cell) {
  cell = Trim(cell);
  if (IsMissingToken(cell)) return kNaN;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return kNaN;
  return value;
}

std::string FormatNumber(double value) {
  if (std::isnan(value)) return std::string(kNaLevel);
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

// Splits CSV text into records. Handles quoted fields with embedded commas,
// doubled quotes and newlines. A trailing newline does not start a record.
std::vector<std::vector<std::string>> ParseCsvRecords(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool record_has_content = false;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") {
    text.remove_prefix(3);
  }
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        record_has_content = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        record_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        if (record_has_content || !field.empty()) {
          record.push_back(std::move(field));
          records.push_back(std::move(record));
        }
        field.clear();
        record.clear();
        record_has_content = false;
        break;
      default:
        field.push_back(c);
        record_has_content = true;
    }
  }
  if (in_quotes) throw DataError("CSV ends inside a quoted field");
  if (record_has_content || !field.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

std::string QuoteIfNeeded(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
  std::string quoted = "\"";
  for (char c : cell) {
    if (c == '"') quoted.push_back('"');
    quoted.push_back(c);
  }
  quoted.push_back('"');
  return quoted;
}

const Column& RequireNumeric(const Table& table, std::string_view name) {
  const Column& column = table.column(name);
  if (!column.is_numeric()) {
    throw DataError("column '" + std::string(name) + "' must be numeric");
  }
  return column;
}

double NumericOrZero(const Column& column, size_t row) {
  const double v = column.values[row];
  return std::isnan(v) ? 0.0 : v;
}

Column BinaryFlag(std::string name, const std::vector<bool>& flags) {
  Column column;
  column.schema = {std::move(name), ColumnKind::kCategorical,
                   ColumnRole::kFeature};
  column.levels = {std::string(kNaLevel), "0", "1"};
  column.codes.resize(flags.size());
  for (size_t i = 0; i < flags.size(); ++i) column.codes[i] = flags[i] ? 2 : 1;
  return column;
}

}  // namespace

std::string Column::CellText(size_t row) const {
  if (is_numeric()) return FormatNumber(values[row]);
  return levels[static_cast<size_t>(codes[row])];
}

std::optional<int32_t> Column::FindLevel(std::string_view level) const {
  for (size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == level) return static_cast<int32_t>(i);
  }
  return std::nullopt;
}

Column Column::Numeric(ColumnSchema schema, std::vector<double> values) {
  Column column;
  column.schema = std::move(schema);
  column.schema.kind = ColumnKind::kNumeric;
  column.values = std::move(values);
  return column;
}

Column Column::Categorical(ColumnSchema schema,
                           const std::vector<std::string>& raw) {
  Column column;
  column.schema = std::move(schema);
  column.schema.kind = ColumnKind::kCategorical;
  std::set<std::string> distinct;
  for (const auto& cell : raw) {
    const std::string_view trimmed = Trim(cell);
    if (!IsMissingToken(trimmed)) distinct.emplace(trimmed);
  }
  column.levels.reserve(distinct.size() + 1);
  column.levels.emplace_back(kNaLevel);
  column.levels.insert(column.levels.end(), distinct.begin(), distinct.end());
  std::unordered_map<std::string, int32_t> index;
  for (size_t i = 1; i < column.levels.size(); ++i) {
    index.emplace(column.levels[i], static_cast<int32_t>(i));
  }
  column.codes.reserve(raw.size());
  for (const auto& cell : raw) {
    const std::string_view trimmed = Trim(cell);
    column.codes.push_back(IsMissingToken(trimmed)
                               ? kNaCode
                               : index.at(std::string(trimmed)));
  }
  return column;
}

std::optional<size_t> Table::Find(std::string_view name) const {
  for (size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].schema.name == name) return i;
  }
  return std::nullopt;
}

const Column& Table::column(std::string_view name) const {
  const auto index = Find(name);
  if (!index) throw DataError("missing column '" + std::string(name) + "'");
  return columns_[*index];
}

std::vector<ColumnSchema> Table::schema() const {
  std::vector<ColumnSchema> result;
  result.reserve(columns_.size());
  for (const auto& column : columns_) result.push_back(column.schema);
  return result;
}

const Column& Table::target() const {
  for (const auto& column : columns_) {
    if (column.schema.role == ColumnRole::kTarget) return column;
  }
  throw DataError("table has no target column");
}

const Column& Table::id() const {
  for (const auto& column : columns_) {
    if (column.schema.role == ColumnRole::kId) return column;
  }
  throw DataError("table has no id column");
}

std::vector<std::string> Table::FeatureNames() const {
  std::vector<std::string> names;
  for (const auto& column : columns_) {
    if (column.schema.role == ColumnRole::kFeature) {
      names.push_back(column.schema.name);
    }
  }
  return names;
}

void Table::SetColumn(Column column) {
  if (columns_.empty()) {
    num_rows_ = column.size();
  } else if (column.size() != num_rows_) {
    throw std::invalid_argument("column '" + column.schema.name + "' has " +
                                std::to_string(column.size()) +
                                " rows, table has " +
                                std::to_string(num_rows_));
  }
  if (const auto index = Find(column.schema.name)) {
    columns_[*index] = std::move(column);
  } else {
    columns_.push_back(std::move(column));
  }
}

Table Table::SelectRows(std::span<const size_t> rows) const {
  Table result;
  result.num_rows_ = rows.size();
  result.columns_.reserve(columns_.size());
  for (const auto& column : columns_) {
    Column selected;
    selected.schema = column.schema;
    selected.levels = column.levels;
    if (column.is_numeric()) {
      selected.values.reserve(rows.size());
      for (size_t row : rows) selected.values.push_back(column.values.at(row));
    } else {
      selected.codes.reserve(rows.size());
      for (size_t row : rows) selected.codes.push_back(column.codes.at(row));
    }
    result.columns_.push_back(std::move(selected));
  }
  return result;
}

Table Table::DropColumns(std::span<const std::string> names) const {
  Table result;
  result.num_rows_ = num_rows_;
  for (const auto& column : columns_) {
    if (std::find(names.begin(), names.end(), column.schema.name) ==
        names.end()) {
      result.columns_.push_back(column);
    }
  }
  return result;
}

Table Table::WithValue(std::string_view feature, std::span<const size_t> rows,
                       std::string_view value) const {
  Table result = *this;
  const auto index = Find(feature);
  if (!index) throw DataError("missing column '" + std::string(feature) + "'");
  Column& column = result.columns_[*index];
  if (column.is_numeric()) {
    const double parsed = ParseNumber(value);
    if (std::isnan(parsed)) {
      throw std::invalid_argument("value '" + std::string(value) +
                                  "' is not numeric for column '" +
                                  std::string(feature) + "'");
    }
    for (size_t row : rows) column.values.at(row) = parsed;
    return result;
  }
  int32_t code = kNaCode;
  if (!IsMissingToken(value)) {
    if (const auto found = column.FindLevel(value)) {
      code = *found;
    } else {
      column.levels.emplace_back(value);
      code = static_cast<int32_t>(column.levels.size() - 1);
    }
  }
  for (size_t row : rows) column.codes.at(row) = code;
  return result;
}

std::vector<std::string> DefaultDropColumns() {
  return {"GarageYrBlt",   "YearBuilt",   "YrSold",     "YearRemodAdd",
          "MoSold",        "WoodDeckSF",  "OpenPorchSF", "EnclosedPorch",
          "3SsnPorch",     "ScreenPorch", "Fireplaces",  "Fence",
          "PoolArea",      "MiscVal"};
}

Table ParseTable(std::string_view csv_text,
                 std::span<const ColumnSchema> schema) {
  const auto records = ParseCsvRecords(csv_text);
  if (records.empty()) throw DataError("CSV has no header row");
  const auto& header = records.front();

  std::map<std::string, size_t> header_index;
  for (size_t i = 0; i < header.size(); ++i) {
    const std::string name(Trim(header[i]));
    if (!header_index.emplace(name, i).second) {
      throw DataError("duplicate header column '" + name + "'");
    }
  }
  std::set<std::string> schema_names;
  for (const auto& column : schema) {
    if (!schema_names.insert(column.name).second) {
      throw DataError("duplicate schema column '" + column.name + "'");
    }
  }
  std::string missing;
  std::string unexpected;
  for (const auto& name : schema_names) {
    if (!header_index.count(name)) missing += (missing.empty() ? "" : ", ") + name;
  }
  for (const auto& [name, unused] : header_index) {
    if (!schema_names.count(name)) {
      unexpected += (unexpected.empty() ? "" : ", ") + name;
    }
  }
  if (!missing.empty() || !unexpected.empty()) {
    std::string message = "header does not match schema";
    if (!missing.empty()) message += "; missing: " + missing;
    if (!unexpected.empty()) message += "; unexpected: " + unexpected;
    throw DataError(message);
  }
  size_t targets = 0;
  size_t ids = 0;
  for (const auto& column : schema) {
    targets += column.role == ColumnRole::kTarget;
    ids += column.role == ColumnRole::kId;
  }
  if (targets != 1 || ids != 1) {
    throw DataError("schema needs exactly one target and one id column");
  }

  const size_t num_rows = records.size() - 1;
  for (size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size()) {
      // Row numbers are 1-based and count the header as row 1.
      throw DataError("row " + std::to_string(r + 1) + " has " +
                      std::to_string(records[r].size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
  }

  Table table;
  for (const auto& column_schema : schema) {
    const size_t source = header_index.at(column_schema.name);
    if (column_schema.kind == ColumnKind::kNumeric) {
      std::vector<double> values(num_rows);
      for (size_t r = 0; r < num_rows; ++r) {
        values[r] = ParseNumber(records[r + 1][source]);
      }
      table.SetColumn(Column::Numeric(column_schema, std::move(values)));
    } else {
      std::vector<std::string> raw(num_rows);
      for (size_t r = 0; r < num_rows; ++r) raw[r] = records[r + 1][source];
      table.SetColumn(Column::Categorical(column_schema, raw));
    }
  }
  return table;
}

Table LoadTable(const std::filesystem::path& csv_path,
                std::span<const ColumnSchema> schema) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + csv_path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ParseTable(buffer.str(), schema);
}

std::string ToCsv(const Table& table) {
  std::string out;
  const auto& columns = table.columns();
  for (size_t c = 0; c < columns.size(); ++c) {
    if (c) out.push_back(',');
    out += QuoteIfNeeded(columns[c].schema.name);
  }
  out.push_back('\n');
  for (size_t r = 0; r < table.num_rows(); ++r) {
    for (size_t c = 0; c < columns.size(); ++c) {
      if (c) out.push_back(',');
      out += QuoteIfNeeded(columns[c].CellText(r));
    }
    out.push_back('\n');
  }
  return out;
}

void WriteCsv(const Table& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << ToCsv(table);
}

Table DeriveFeatures(const Table& table) {
  const Column& yr_sold = RequireNumeric(table, "YrSold");
  const Column& year_built = RequireNumeric(table, "YearBuilt");
  const Column& year_remod = RequireNumeric(table, "YearRemodAdd");
  const Column& wood_deck = RequireNumeric(table, "WoodDeckSF");
  const Column& open_porch = RequireNumeric(table, "OpenPorchSF");
  const Column& enclosed_porch = RequireNumeric(table, "EnclosedPorch");
  const Column& three_season = RequireNumeric(table, "3SsnPorch");
  const Column& screen_porch = RequireNumeric(table, "ScreenPorch");
  const Column& fireplaces = RequireNumeric(table, "Fireplaces");
  const Column& fence = table.column("Fence");

  const size_t n = table.num_rows();
  std::vector<double> age(n);
  std::vector<double> since_remodel(n);
  std::vector<bool> has_deck(n);
  std::vector<bool> has_porch(n);
  std::vector<bool> has_fireplace(n);
  std::vector<bool> has_fence(n);
  for (size_t i = 0; i < n; ++i) {
    age[i] = yr_sold.values[i] - year_built.values[i];
    const double remodel = yr_sold.values[i] - year_remod.values[i];
    since_remodel[i] = std::isnan(remodel) ? remodel : std::max(0.0, remodel);
    has_deck[i] = NumericOrZero(wood_deck, i) > 0;
    has_porch[i] = NumericOrZero(open_porch, i) > 0 ||
                   NumericOrZero(enclosed_porch, i) > 0 ||
                   NumericOrZero(three_season, i) > 0 ||
                   NumericOrZero(screen_porch, i) > 0;
    has_fireplace[i] = NumericOrZero(fireplaces, i) > 0;
    has_fence[i] = !fence.IsMissing(i);
  }

  Table result = table;
  const ColumnSchema numeric{"", ColumnKind::kNumeric, ColumnRole::kFeature};
  auto named = [&](std::string name) {
    ColumnSchema schema = numeric;
    schema.name = std::move(name);
    return schema;
  };
  result.SetColumn(Column::Numeric(named("AgeAtSale"), std::move(age)));
  result.SetColumn(
      Column::Numeric(named("YearsSinceRemodel"), std::move(since_remodel)));
  result.SetColumn(BinaryFlag("HasDeck", has_deck));
  result.SetColumn(BinaryFlag("HasPorch", has_porch));
  result.SetColumn(BinaryFlag("HasFireplace", has_fireplace));
  result.SetColumn(BinaryFlag("HasFence", has_fence));
  return result;
}

Table CleanTable(const Table& table,
                 std::span<const std::string> drop_columns) {
  std::vector<size_t> keep;
  keep.reserve(table.num_rows());
  const Column* mas_vnr_type =
      table.Has("MasVnrType") ? &table.column("MasVnrType") : nullptr;
  const Column* electrical =
      table.Has("Electrical") ? &table.column("Electrical") : nullptr;
  for (size_t i = 0; i < table.num_rows(); ++i) {
    if (mas_vnr_type && mas_vnr_type->IsMissing(i)) continue;
    if (electrical && electrical->IsMissing(i)) continue;
    keep.push_back(i);
  }
  Table result = table.SelectRows(keep).DropColumns(drop_columns);

  // Categorical gaps are already the NA level; numeric feature gaps, of which
  // LotFrontage is the only one in the raw housing data, become zero.
  for (const auto& name : result.FeatureNames()) {
    const Column& column = result.column(name);
    if (!column.is_numeric()) continue;
    if (std::none_of(column.values.begin(), column.values.end(),
                     [](double v) { return std::isnan(v); })) {
      continue;
    }
    Column filled = column;
    for (double& v : filled.values) {
      if (std::isnan(v)) v = 0.0;
    }
    result.SetColumn(std::move(filled));
  }
  return result;
}

SplitPair Split(const Table& table, double ratio, uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("split ratio must be in (0, 1)");
  }
  const size_t n = table.num_rows();
  if (n < 2) throw std::invalid_argument("split needs at least two rows");
  const auto num_train =
      static_cast<size_t>(std::floor(static_cast<double>(n) * ratio));
  if (num_train == 0 || num_train == n) {
    throw std::invalid_argument("split ratio " + std::to_string(ratio) +
                                " leaves an empty partition for " +
                                std::to_string(n) + " rows");
  }
  Rng rng(seed);
  const std::vector<size_t> order = rng.Permutation(n);
  SplitPair pair;
  pair.seed = seed;
  pair.ratio = ratio;
  pair.train_rows.assign(order.begin(), order.begin() + num_train);
  pair.test_rows.assign(order.begin() + num_train, order.end());
  std::sort(pair.train_rows.begin(), pair.train_rows.end());
  std::sort(pair.test_rows.begin(), pair.test_rows.end());
  pair.train = table.SelectRows(pair.train_rows);
  pair.test = table.SelectRows(pair.test_rows);
  return pair;
}

}  // namespace amescause

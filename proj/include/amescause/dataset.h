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

// Column-major tables, CSV ingestion and the housing preprocessing recipe.
//
// A Table holds numeric columns (doubles, NaN marks a missing cell) and
// categorical columns (level codes into a per-column dictionary). Level 0 of
// every dictionary is the reserved "NA" level; the remaining levels are sorted
// lexicographically so that dictionaries built from the same values are
// identical regardless of row order.

#ifndef AMESCAUSE_DATASET_H_
#define AMESCAUSE_DATASET_H_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace amescause {

inline constexpr std::string_view kNaLevel = "NA";
inline constexpr int32_t kNaCode = 0;

enum class ColumnKind { kNumeric, kCategorical };
enum class ColumnRole { kFeature, kTarget, kId };

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  ColumnRole role = ColumnRole::kFeature;

  bool operator==(const ColumnSchema&) const = default;
};

struct Column {
  ColumnSchema schema;
  // Numeric columns only. NaN is the missing marker.
  std::vector<double> values;
  // Categorical columns only.
  std::vector<int32_t> codes;
  std::vector<std::string> levels;

  bool is_numeric() const { return schema.kind == ColumnKind::kNumeric; }
  bool is_categorical() const {
    return schema.kind == ColumnKind::kCategorical;
  }
  size_t size() const { return is_numeric() ? values.size() : codes.size(); }
  bool IsMissing(size_t row) const {
    return is_numeric() ? std::isnan(values[row]) : codes[row] == kNaCode;
  }
  // Text form of a cell as it would be written to CSV.
  std::string CellText(size_t row) const;
  // Code of `level`, or nullopt when the dictionary does not contain it.
  std::optional<int32_t> FindLevel(std::string_view level) const;

  static Column Numeric(ColumnSchema schema, std::vector<double> values);
  // Builds a sorted dictionary from raw strings. Empty strings and "NA" map to
  // the reserved NA level.
  static Column Categorical(ColumnSchema schema,
                            const std::vector<std::string>& raw);

  // Element-wise; a NaN cell never compares equal.
  bool operator==(const Column&) const = default;
};

class Table {
 public:
  Table() = default;

  size_t num_rows() const { return num_rows_; }
  size_t num_columns() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }

  bool Has(std::string_view name) const { return Find(name).has_value(); }
  std::optional<size_t> Find(std::string_view name) const;
  // Throws DataError naming the column when absent.
  const Column& column(std::string_view name) const;

  std::vector<ColumnSchema> schema() const;
  const Column& target() const;
  const Column& id() const;
  // Feature-role columns in table order.
  std::vector<std::string> FeatureNames() const;

  // Appends or replaces a column. Length must match num_rows (any length is
  // accepted on an empty table).
  void SetColumn(Column column);

  Table SelectRows(std::span<const size_t> rows) const;
  Table DropColumns(std::span<const std::string> names) const;

  // Copy of the table where `feature` equals `value` on `rows`. For
  // categorical columns `value` is a level name, added to the dictionary
  // when absent; for numeric columns it must parse as a number.
  Table WithValue(std::string_view feature, std::span<const size_t> rows,
                  std::string_view value) const;

  bool operator==(const Table&) const = default;

 private:
  size_t num_rows_ = 0;
  std::vector<Column> columns_;
};

// Fixed split of the source rows into train and test partitions.
struct SplitPair {
  Table train;
  Table test;
  std::vector<size_t> train_rows;
  std::vector<size_t> test_rows;
  uint64_t seed = 0;
  double ratio = 0.0;
};

// Declarative preprocessing settings, loaded from the JSON config.
struct DatasetConfig {
  std::vector<ColumnSchema> schema;
  std::vector<std::string> drop_columns;
};

// The drop list used when the config does not override it.
std::vector<std::string> DefaultDropColumns();

// Reads `csv_path`. The header must contain exactly the names in `schema`, in
// any order; columns come out in schema order.
Table LoadTable(const std::filesystem::path& csv_path,
                std::span<const ColumnSchema> schema);
Table ParseTable(std::string_view csv_text,
                 std::span<const ColumnSchema> schema);

// Writes the table with a header row; missing cells are written as "NA".
void WriteCsv(const Table& table, const std::filesystem::path& path);
std::string ToCsv(const Table& table);

// Appends AgeAtSale, YearsSinceRemodel, HasDeck, HasPorch, HasFireplace and
// HasFence.
Table DeriveFeatures(const Table& table);

// Removes rows with a missing MasVnrType or Electrical, zero-fills missing
// LotFrontage (and any other missing numeric feature), and drops
// `drop_columns` that are present. Idempotent.
Table CleanTable(const Table& table,
                 std::span<const std::string> drop_columns);

// Random partition with floor(n * ratio) training rows. Both index lists are
// sorted ascending.
SplitPair Split(const Table& table, double ratio, uint64_t seed);

}  // namespace amescause

#endif  // AMESCAUSE_DATASET_H_

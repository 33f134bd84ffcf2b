// Copyright 2026 The Deflate Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DEFLATE_TRACE_IO_H_
#define DEFLATE_TRACE_IO_H_

#include <cstdint>
#include <string>
#include <vector>

#include "deflate/metrics.h"
#include "json.hpp"

namespace deflate {

// One (k, round) row of a trace file. NaN marks an undefined value and is
// written as an empty field (null in JSON). k = 0 rows carry whole-model
// quantities.
struct TraceRow {
  std::string run_id;
  uint64_t seed = 0;
  std::string experiment;
  std::string profile;
  std::string method;
  int k = 0;
  int round = 0;
  double D = 0.0;
  double B = 0.0;
  double G = 0.0;
  double mismatch = 0.0;
  double rel_weight_error = 0.0;
  double envelope = 0.0;
  double surrogate_B = 0.0;
  double surrogate_G = 0.0;
};

// A row carrying the identity fields of `meta` and NaN values.
TraceRow blank_row(const TraceRow& meta, int k, int round);

// Appends one k = 0 row per round holding the relative weight error and,
// when the trace has metrics, one row per (k, round) with D, B, G and the
// target mismatch divided by the scale (mismatch by the clean target norm).
void append_trace(const DeflationTrace& trace, const TraceRow& meta,
                  std::vector<TraceRow>& rows);

enum class Format { kCsv, kJson };

Format ParseFormat(const std::string& name);
std::string FormatName(Format format);
std::string FormatExtension(Format format);

const std::vector<std::string>& TraceColumns();

// Numeric columns of TraceRow in file order (D .. surrogate_G).
inline constexpr int kTraceValueCount = 8;
double TraceValue(const TraceRow& row, int column);
void SetTraceValue(TraceRow& row, int column, double value);

// Writes rows with a '#' metadata preamble (CSV) or a "metadata" member
// (JSON). Throws kIo when the file cannot be written.
void emit_trace(const std::vector<TraceRow>& rows, const std::string& path,
                Format format, const nlohmann::json& metadata);

std::vector<TraceRow> read_trace(const std::string& path, Format format,
                                 nlohmann::json* metadata = nullptr);

// Per (experiment, profile, method, k, round): median, min and max of every
// numeric column across seeds. NaN entries are skipped; a cell with no
// finite values stays NaN.
struct AggregateRow {
  std::string experiment;
  std::string profile;
  std::string method;
  int k = 0;
  int round = 0;
  int seeds = 0;
  double median[kTraceValueCount];
  double min[kTraceValueCount];
  double max[kTraceValueCount];
};

std::vector<AggregateRow> aggregate(
    const std::vector<std::vector<TraceRow>>& per_seed);

void emit_aggregate(const std::vector<AggregateRow>& rows,
                    const std::string& path, Format format,
                    const nlohmann::json& metadata);

// Median of the finite entries (mean of the middle pair for even counts);
// NaN when there are none.
double median_of(std::vector<double> values);

// Generic table writer for auxiliary outputs (rank tables, timings).
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

void emit_table(const Table& table, const std::string& path, Format format,
                const nlohmann::json& metadata);

// %.17g, or empty for NaN.
std::string FormatNumber(double value);

}  // namespace deflate

#endif  // DEFLATE_TRACE_IO_H_

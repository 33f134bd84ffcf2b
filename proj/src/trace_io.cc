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

#include "deflate/trace_io.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "deflate/errors.h"

namespace deflate {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* const kValueNames[kTraceValueCount] = {
    "D",        "B", "G", "mismatch", "rel_weight_error", "envelope",
    "surrogate_B", "surrogate_G"};

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  return out;
}

void CloseOut(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path);
}

void WriteCsvPreamble(std::ostream& out, const nlohmann::json& metadata) {
  out << "# " << metadata.dump() << "\n";
}

nlohmann::json NumberJson(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

double ParseNumber(const std::string& field) {
  if (field.empty()) return kNaN;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0') {
    throw Error(ErrorKind::kIo, "malformed number '" + field + "'");
  }
  return v;
}

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  throw Error(ErrorKind::kIo, "field '" + s + "' needs quoting");
}

}  // namespace

Format ParseFormat(const std::string& name) {
  if (name == "csv") return Format::kCsv;
  if (name == "json") return Format::kJson;
  throw Error(ErrorKind::kConfig, "unknown format '" + name + "'");
}

std::string FormatName(Format format) {
  return format == Format::kCsv ? "csv" : "json";
}

std::string FormatExtension(Format format) {
  return format == Format::kCsv ? ".csv" : ".json";
}

const std::vector<std::string>& TraceColumns() {
  static const std::vector<std::string> cols = {
      "run_id",   "seed",     "experiment",       "profile", "method",
      "k",        "round",    "D",                "B",       "G",
      "mismatch", "rel_weight_error", "envelope", "surrogate_B",
      "surrogate_G"};
  return cols;
}

double TraceValue(const TraceRow& row, int column) {
  switch (column) {
    case 0: return row.D;
    case 1: return row.B;
    case 2: return row.G;
    case 3: return row.mismatch;
    case 4: return row.rel_weight_error;
    case 5: return row.envelope;
    case 6: return row.surrogate_B;
    case 7: return row.surrogate_G;
  }
  throw Error(ErrorKind::kParameter, "trace column out of range");
}

void SetTraceValue(TraceRow& row, int column, double value) {
  switch (column) {
    case 0: row.D = value; return;
    case 1: row.B = value; return;
    case 2: row.G = value; return;
    case 3: row.mismatch = value; return;
    case 4: row.rel_weight_error = value; return;
    case 5: row.envelope = value; return;
    case 6: row.surrogate_B = value; return;
    case 7: row.surrogate_G = value; return;
  }
  throw Error(ErrorKind::kParameter, "trace column out of range");
}

std::string FormatNumber(double value) {
  if (std::isnan(value)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void emit_trace(const std::vector<TraceRow>& rows, const std::string& path,
                Format format, const nlohmann::json& metadata) {
  std::ofstream out = OpenOut(path);
  if (format == Format::kCsv) {
    WriteCsvPreamble(out, metadata);
    const std::vector<std::string>& cols = TraceColumns();
    for (size_t i = 0; i < cols.size(); ++i) {
      out << (i ? "," : "") << cols[i];
    }
    out << "\n";
    for (const TraceRow& r : rows) {
      out << CsvField(r.run_id) << ',' << r.seed << ','
          << CsvField(r.experiment) << ',' << CsvField(r.profile) << ','
          << CsvField(r.method) << ',' << r.k << ',' << r.round;
      for (int c = 0; c < kTraceValueCount; ++c) {
        out << ',' << FormatNumber(TraceValue(r, c));
      }
      out << "\n";
    }
  } else {
    nlohmann::json doc;
    doc["metadata"] = metadata;
    doc["columns"] = TraceColumns();
    nlohmann::json arr = nlohmann::json::array();
    for (const TraceRow& r : rows) {
      nlohmann::json j;
      j["run_id"] = r.run_id;
      j["seed"] = r.seed;
      j["experiment"] = r.experiment;
      j["profile"] = r.profile;
      j["method"] = r.method;
      j["k"] = r.k;
      j["round"] = r.round;
      for (int c = 0; c < kTraceValueCount; ++c) {
        j[kValueNames[c]] = NumberJson(TraceValue(r, c));
      }
      arr.push_back(std::move(j));
    }
    doc["rows"] = std::move(arr);
    out << doc.dump(1) << "\n";
  }
  CloseOut(out, path);
}

std::vector<TraceRow> read_trace(const std::string& path, Format format,
                                 nlohmann::json* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path);
  std::vector<TraceRow> rows;
  if (format == Format::kCsv) {
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line[0] == '#') {
        if (metadata != nullptr) *metadata = nlohmann::json::parse(line.substr(1));
        continue;
      }
      const std::vector<std::string> f = SplitCsv(line);
      if (!header) {
        if (f != TraceColumns()) {
          throw Error(ErrorKind::kIo, path + ": unexpected trace header");
        }
        header = true;
        continue;
      }
      if (f.size() != TraceColumns().size()) {
        throw Error(ErrorKind::kIo, path + ": wrong field count");
      }
      TraceRow r;
      r.run_id = f[0];
      r.seed = std::strtoull(f[1].c_str(), nullptr, 10);
      r.experiment = f[2];
      r.profile = f[3];
      r.method = f[4];
      r.k = std::atoi(f[5].c_str());
      r.round = std::atoi(f[6].c_str());
      for (int c = 0; c < kTraceValueCount; ++c) {
        SetTraceValue(r, c, ParseNumber(f[7 + c]));
      }
      rows.push_back(std::move(r));
    }
    if (!header) throw Error(ErrorKind::kIo, path + ": missing header row");
  } else {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kIo, path + ": " + e.what());
    }
    if (metadata != nullptr) *metadata = doc.value("metadata", nlohmann::json());
    for (const nlohmann::json& j : doc.at("rows")) {
      TraceRow r;
      r.run_id = j.at("run_id").get<std::string>();
      r.seed = j.at("seed").get<uint64_t>();
      r.experiment = j.at("experiment").get<std::string>();
      r.profile = j.at("profile").get<std::string>();
      r.method = j.at("method").get<std::string>();
      r.k = j.at("k").get<int>();
      r.round = j.at("round").get<int>();
      for (int c = 0; c < kTraceValueCount; ++c) {
        const nlohmann::json& v = j.at(kValueNames[c]);
        SetTraceValue(r, c, v.is_null() ? kNaN : v.get<double>());
      }
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

double median_of(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return std::isnan(v); }),
               values.end());
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<AggregateRow> aggregate(
    const std::vector<std::vector<TraceRow>>& per_seed) {
  using Key = std::tuple<std::string, std::string, std::string, int, int>;
  std::map<Key, std::vector<const TraceRow*>> groups;
  std::vector<Key> order;
  for (const std::vector<TraceRow>& rows : per_seed) {
    for (const TraceRow& r : rows) {
      Key key{r.experiment, r.profile, r.method, r.k, r.round};
      auto it = groups.find(key);
      if (it == groups.end()) {
        order.push_back(key);
        groups[key].push_back(&r);
      } else {
        it->second.push_back(&r);
      }
    }
  }
  std::vector<AggregateRow> out;
  out.reserve(order.size());
  for (const Key& key : order) {
    const std::vector<const TraceRow*>& g = groups[key];
    AggregateRow a;
    std::tie(a.experiment, a.profile, a.method, a.k, a.round) = key;
    a.seeds = static_cast<int>(g.size());
    for (int c = 0; c < kTraceValueCount; ++c) {
      std::vector<double> v;
      for (const TraceRow* r : g) v.push_back(TraceValue(*r, c));
      a.median[c] = median_of(v);
      a.min[c] = kNaN;
      a.max[c] = kNaN;
      for (double x : v) {
        if (std::isnan(x)) continue;
        if (std::isnan(a.min[c]) || x < a.min[c]) a.min[c] = x;
        if (std::isnan(a.max[c]) || x > a.max[c]) a.max[c] = x;
      }
    }
    out.push_back(a);
  }
  return out;
}

void emit_aggregate(const std::vector<AggregateRow>& rows,
                    const std::string& path, Format format,
                    const nlohmann::json& metadata) {
  Table t;
  t.name = "aggregate";
  t.columns = {"experiment", "profile", "method", "k", "round", "seeds"};
  for (const char* name : kValueNames) {
    t.columns.push_back(std::string(name) + "_median");
    t.columns.push_back(std::string(name) + "_min");
    t.columns.push_back(std::string(name) + "_max");
  }
  for (const AggregateRow& a : rows) {
    std::vector<std::string> row = {a.experiment, a.profile, a.method,
                                    std::to_string(a.k), std::to_string(a.round),
                                    std::to_string(a.seeds)};
    for (int c = 0; c < kTraceValueCount; ++c) {
      row.push_back(FormatNumber(a.median[c]));
      row.push_back(FormatNumber(a.min[c]));
      row.push_back(FormatNumber(a.max[c]));
    }
    t.rows.push_back(std::move(row));
  }
  emit_table(t, path, format, metadata);
}

void emit_table(const Table& table, const std::string& path, Format format,
                const nlohmann::json& metadata) {
  std::ofstream out = OpenOut(path);
  if (format == Format::kCsv) {
    WriteCsvPreamble(out, metadata);
    for (size_t i = 0; i < table.columns.size(); ++i) {
      out << (i ? "," : "") << CsvField(table.columns[i]);
    }
    out << "\n";
    for (const std::vector<std::string>& row : table.rows) {
      for (size_t i = 0; i < row.size(); ++i) {
        out << (i ? "," : "") << CsvField(row[i]);
      }
      out << "\n";
    }
  } else {
    nlohmann::json doc;
    doc["metadata"] = metadata;
    doc["table"] = table.name;
    doc["columns"] = table.columns;
    nlohmann::json arr = nlohmann::json::array();
    for (const std::vector<std::string>& row : table.rows) {
      nlohmann::json j;
      for (size_t i = 0; i < row.size() && i < table.columns.size(); ++i) {
        const std::string& cell = row[i];
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (cell.empty()) {
          j[table.columns[i]] = nullptr;
        } else if (end != cell.c_str() && *end == '\0') {
          j[table.columns[i]] = v;
        } else {
          j[table.columns[i]] = cell;
        }
      }
      arr.push_back(std::move(j));
    }
    doc["rows"] = std::move(arr);
    out << doc.dump(1) << "\n";
  }
  CloseOut(out, path);
}

TraceRow blank_row(const TraceRow& meta, int k, int round) {
  TraceRow r = meta;
  r.k = k;
  r.round = round;
  for (int c = 0; c < kTraceValueCount; ++c) {
    SetTraceValue(r, c, std::numeric_limits<double>::quiet_NaN());
  }
  return r;
}

void append_trace(const DeflationTrace& t, const TraceRow& meta,
                  std::vector<TraceRow>& rows) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int l = 0; l <= t.rounds; ++l) {
    TraceRow r = blank_row(meta, 0, l);
    r.rel_weight_error = t.rel_weight_error[l];
    rows.push_back(r);
    if (!t.has_metrics) continue;
    for (int k = 1; k <= t.r; ++k) {
      const size_t i = t.index(k, l);
      TraceRow c = blank_row(meta, k, l);
      c.D = t.D[i] / t.scale;
      c.B = t.b_defined ? t.B[i] / t.scale : nan;
      c.G = t.G[i] / t.scale;
      const double norm = t.clean_target_norm[k - 1];
      c.mismatch = norm > 0 ? t.mismatch[i] / norm : nan;
      rows.push_back(c);
    }
  }
}

}  // namespace deflate

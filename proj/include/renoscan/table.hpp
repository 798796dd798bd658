#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "renoscan/config.hpp"
#include "renoscan/error.hpp"
#include "renoscan/eval.hpp"
#include "renoscan/image_io.hpp"
#include "renoscan/version.hpp"

namespace renoscan {

// ---------------------------------------------------------------------------
// Small CSV helpers. Fields never contain commas or quotes in these formats.

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t end = line.find(',', start);
    std::string field = line.substr(start, end == std::string::npos ? std::string::npos : end - start);
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(std::move(field));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

/// Non-empty, non-comment lines.
inline std::vector<std::string> read_data_lines(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail(ErrorKind::data, where + ": not a number '" + s + "'");
  if (!std::isfinite(v)) fail(ErrorKind::numeric, where + ": non-finite value");
  return v;
}

inline int parse_label(const std::string& s, const std::string& where) {
  if (s == "-1" || s == "normal") return -1;
  if (s == "1" || s == "+1" || s == "cakut") return 1;
  fail(ErrorKind::validation, where + ": label must be -1/+1 (or normal/cakut), got '" + s + "'");
}

inline std::string provenance_line(const std::string& config_hash_hex) {
  return std::string("# ") + kToolName + " " + kToolVersion + " config=" + config_hash_hex;
}

// ---------------------------------------------------------------------------
// Feature naming

inline std::string indexed_name(const std::string& prefix, std::size_t i, std::size_t count) {
  const int width = std::max<int>(4, static_cast<int>(std::to_string(count > 0 ? count - 1 : 0).size()));
  std::string digits = std::to_string(i);
  if (digits.size() < static_cast<std::size_t>(width)) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

inline std::vector<std::string> family_names(Family f, std::size_t dims) {
  std::vector<std::string> names;
  if (f == Family::geome) {
    for (int i = 0; i < kShapeFeatureCount; ++i) names.push_back("geo_shape_" + std::to_string(i));
    for (int i = 0; i < kBlockFeatureCount; ++i) names.push_back("geo_block_" + std::to_string(i));
    return names;
  }
  const std::string prefix = f == Family::cnn ? "cnn_" : "hog_";
  for (std::size_t i = 0; i < dims; ++i) names.push_back(indexed_name(prefix, i, dims));
  return names;
}

inline bool name_in_set(const std::string& name, FeatureSet set) {
  if (name.rfind("cnn_", 0) == 0) return set.has(Family::cnn);
  if (name.rfind("hog_", 0) == 0) return set.has(Family::hog);
  if (name.rfind("geo_", 0) == 0) return set.has(Family::geome);
  return false;
}

/// Keeps only the columns belonging to `set`, preserving order.
inline eval::Dataset select_features(const eval::Dataset& data, FeatureSet set) {
  std::vector<std::size_t> keep;
  eval::Dataset out;
  for (std::size_t j = 0; j < data.feature_names.size(); ++j)
    if (name_in_set(data.feature_names[j], set)) {
      keep.push_back(j);
      out.feature_names.push_back(data.feature_names[j]);
    }
  for (const auto& s : data.samples) {
    eval::Sample t = s;
    t.features.clear();
    for (std::size_t j : keep) t.features.push_back(s.features[j]);
    out.samples.push_back(std::move(t));
  }
  if (out.feature_names.empty()) fail(ErrorKind::validation, "feature table has no columns for set " + set.name());
  return out;
}

// ---------------------------------------------------------------------------
// Feature CSV: sample_id, side, label, subject_id, then named feature columns.

inline std::string feature_csv(const eval::Dataset& data, const std::string& config_hash_hex) {
  std::string out = provenance_line(config_hash_hex) + "\n";
  out += "sample_id,side,label,subject_id";
  for (const auto& n : data.feature_names) out += "," + n;
  out += "\n";
  for (const auto& s : data.samples) {
    out += s.sample_id + "," + eval::to_string(s.side) + "," + (s.label > 0 ? "1" : "-1") + "," + s.subject_id;
    for (double v : s.features) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

inline void save_feature_csv(const std::filesystem::path& path, const eval::Dataset& data, const std::string& hash) {
  io::write_text_atomic(path, feature_csv(data, hash));
}

inline eval::Dataset load_feature_csv(const std::filesystem::path& path) {
  const auto lines = read_data_lines(path);
  if (lines.empty()) fail(ErrorKind::validation, path.string() + ": empty feature table");
  const auto header = split_csv_line(lines.front());
  std::map<std::string, std::size_t> col;
  eval::Dataset data;
  std::vector<std::size_t> feature_cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const auto& h = header[j];
    if (h == "sample_id" || h == "side" || h == "label" || h == "subject_id") {
      col[h] = j;
    } else {
      feature_cols.push_back(j);
      data.feature_names.push_back(h);
    }
  }
  for (const char* required : {"sample_id", "side", "label"})
    if (!col.contains(required)) fail(ErrorKind::validation, path.string() + ": missing column " + required);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = split_csv_line(lines[r]);
    const std::string where = path.string() + ":" + std::to_string(r + 1);
    if (f.size() != header.size()) fail(ErrorKind::validation, where + ": expected " + std::to_string(header.size()) + " fields");
    eval::Sample s;
    s.sample_id = f[col["sample_id"]];
    s.side = eval::side_from_string(f[col["side"]]);
    s.label = parse_label(f[col["label"]], where);
    s.subject_id = col.contains("subject_id") ? f[col["subject_id"]] : s.sample_id;
    for (std::size_t j : feature_cols) s.features.push_back(parse_double(f[j], where));
    data.samples.push_back(std::move(s));
  }
  eval::check_dataset(data);
  return data;
}

// ---------------------------------------------------------------------------
// Manifest: sample_id, subject_id, side, label, image_path, mask_path.

struct ManifestRow {
  std::string sample_id;
  std::string subject_id;
  eval::Side side = eval::Side::left;
  int label = 1;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
};

struct Manifest {
  std::vector<ManifestRow> rows;
};

/// Relative paths resolve against the manifest's directory; every path must exist.
inline Manifest load_manifest(const std::filesystem::path& path) {
  const auto lines = read_data_lines(path);
  if (lines.empty()) fail(ErrorKind::validation, path.string() + ": empty manifest");
  const auto header = split_csv_line(lines.front());
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) col[header[j]] = j;
  for (const char* required : {"sample_id", "subject_id", "side", "label", "image_path", "mask_path"})
    if (!col.contains(required)) fail(ErrorKind::validation, path.string() + ": missing column " + required);
  const auto base = path.parent_path();
  Manifest m;
  std::set<std::string> ids;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = split_csv_line(lines[r]);
    const std::string where = path.string() + ":" + std::to_string(r + 1);
    if (f.size() != header.size()) fail(ErrorKind::validation, where + ": expected " + std::to_string(header.size()) + " fields");
    ManifestRow row;
    row.sample_id = f[col["sample_id"]];
    row.subject_id = f[col["subject_id"]];
    row.side = eval::side_from_string(f[col["side"]]);
    row.label = parse_label(f[col["label"]], where);
    auto resolve = [&](const std::string& p) {
      std::filesystem::path q(p);
      return q.is_absolute() ? q : base / q;
    };
    row.image_path = resolve(f[col["image_path"]]);
    row.mask_path = resolve(f[col["mask_path"]]);
    for (const auto* p : {&row.image_path, &row.mask_path})
      if (!std::filesystem::exists(*p)) fail(ErrorKind::validation, where + ": file not found " + p->string());
    if (!ids.insert(row.sample_id).second) fail(ErrorKind::validation, where + ": duplicate sample_id " + row.sample_id);
    m.rows.push_back(std::move(row));
  }
  return m;
}

inline std::string manifest_csv(const Manifest& m) {
  std::string out = "sample_id,subject_id,side,label,image_path,mask_path\n";
  for (const auto& r : m.rows)
    out += r.sample_id + "," + r.subject_id + "," + eval::to_string(r.side) + "," + (r.label > 0 ? "cakut" : "normal") + "," +
           r.image_path.generic_string() + "," + r.mask_path.generic_string() + "\n";
  return out;
}

}  // namespace renoscan

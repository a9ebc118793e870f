#include "marginlab/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>

#include "marginlab/error.hpp"

namespace marginlab::io {

using nlohmann::ordered_json;

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvWriter::CsvWriter(const std::vector<std::string>& header) : columns_(header.size()) {
  for (const auto& h : header) cell(h);
  end_row();
}

void CsvWriter::separator() {
  if (in_row_ > 0) out_ << ',';
  ++in_row_;
}

CsvWriter& CsvWriter::cell(double v) {
  separator();
  out_ << format_number(v);
  return *this;
}

CsvWriter& CsvWriter::cell(std::size_t v) {
  separator();
  out_ << v;
  return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v) {
  separator();
  out_ << v;
  return *this;
}

void CsvWriter::end_row() {
  if (in_row_ != columns_) {
    throw DimensionError("csv row has " + std::to_string(in_row_) + " cells, header has " +
                         std::to_string(columns_));
  }
  out_ << '\n';
  in_row_ = 0;
}

namespace {

ordered_json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const ordered_json& j, const std::string& where) {
  try {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    return Matrix(rows, cols, j.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + ": malformed matrix: " + e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

// Splits CSV text into rows of fields, skipping blank lines. Line numbers are
// 1-based and kept for error messages.
struct CsvRow {
  std::size_t line;
  std::vector<std::string> fields;
};

std::vector<CsvRow> split_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    CsvRow row{number, {}};
    std::string field;
    std::istringstream fields(line);
    while (std::getline(fields, field, ',')) row.fields.push_back(field);
    if (line.back() == ',') row.fields.emplace_back();
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& raw, std::size_t line) {
  const std::string s = trim(raw);
  if (s.empty()) throw ParseError(line, "empty numeric field");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw ParseError(line, "not a number: '" + s + "'");
  }
  return v;
}

std::size_t parse_index(const std::string& raw, std::size_t line) {
  const std::string s = trim(raw);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ParseError(line, "not a non-negative integer: '" + s + "'");
  }
  return static_cast<std::size_t>(std::stoull(s));
}

void expect_header(const std::vector<CsvRow>& rows, const std::vector<std::string>& prefix,
                   const char* what) {
  if (rows.empty()) throw ParseError(1, std::string(what) + ": missing header row");
  const auto& h = rows.front();
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (i >= h.fields.size() || trim(h.fields[i]) != prefix[i]) {
      throw ParseError(h.line, std::string(what) + ": expected column '" + prefix[i] + "'");
    }
  }
}

}  // namespace

ordered_json model_to_json(const MlpModel& model, const ordered_json& metadata) {
  ordered_json j;
  j["format"] = kModelMagic;
  j["version"] = kModelVersion;
  j["layers"] = ordered_json::array();
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    j["layers"].push_back(
        {{"weights", matrix_json(model.weights[l])}, {"bias", matrix_json(model.biases[l])}});
  }
  j["classifier"] = matrix_json(model.classifier.W);
  if (!metadata.is_null()) j["metadata"] = metadata;
  return j;
}

MlpModel model_from_json(const ordered_json& doc) {
  if (!doc.is_object() || doc.value("format", std::string{}) != kModelMagic) {
    throw ConfigError("not a marginlab model file (bad magic)");
  }
  if (doc.value("version", -1) != kModelVersion) {
    throw ConfigError("unsupported model version");
  }
  MlpModel m;
  if (!doc.contains("layers") || !doc["layers"].is_array()) {
    throw ConfigError("model file has no layers array");
  }
  for (std::size_t l = 0; l < doc["layers"].size(); ++l) {
    const auto& layer = doc["layers"][l];
    const std::string where = "layers[" + std::to_string(l) + "]";
    if (!layer.contains("weights") || !layer.contains("bias")) {
      throw ConfigError(where + ": missing weights or bias");
    }
    m.weights.push_back(matrix_from_json(layer["weights"], where + ".weights"));
    m.biases.push_back(matrix_from_json(layer["bias"], where + ".bias"));
  }
  if (!doc.contains("classifier")) throw ConfigError("model file has no classifier");
  m.classifier.W = matrix_from_json(doc["classifier"], "classifier");
  try {
    validate(m);
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("inconsistent model file: ") + e.what());
  }
  return m;
}

void save_model(const std::filesystem::path& path, const MlpModel& model,
                const ordered_json& metadata) {
  write_file_atomic(path, model_to_json(model, metadata).dump(1) + "\n");
}

MlpModel load_model(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return model_from_json(doc);
}

std::string feature_csv(const FeatureTable& table) {
  std::vector<std::string> header = {"id", "label"};
  for (std::size_t k = 0; k < table.features.cols(); ++k) header.push_back("f" + std::to_string(k));
  CsvWriter w(header);
  for (std::size_t r = 0; r < table.features.rows(); ++r) {
    w.cell(table.ids[r]).cell(table.labels[r]);
    for (double v : table.features.row(r)) w.cell(v);
    w.end_row();
  }
  return w.str();
}

FeatureTable parse_feature_csv(const std::string& text) {
  const auto rows = split_csv(text);
  expect_header(rows, {"id", "label"}, "feature table");
  const std::size_t width = rows.front().fields.size();
  if (width < 3) throw ParseError(rows.front().line, "feature table has no feature columns");
  FeatureTable t;
  std::vector<double> data;
  std::map<std::size_t, std::size_t> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.fields.size() != width) {
      throw ParseError(row.line, "expected " + std::to_string(width) + " fields, got " +
                                     std::to_string(row.fields.size()));
    }
    const std::size_t id = parse_index(row.fields[0], row.line);
    if (!seen.emplace(id, row.line).second) {
      throw ParseError(row.line, "duplicate id " + std::to_string(id));
    }
    t.ids.push_back(id);
    t.labels.push_back(parse_index(row.fields[1], row.line));
    for (std::size_t k = 2; k < width; ++k) data.push_back(parse_double(row.fields[k], row.line));
  }
  t.features = Matrix(t.ids.size(), width - 2, std::move(data));
  return t;
}

std::string pairs_csv(const std::vector<IdPair>& pairs) {
  CsvWriter w({"id_a", "id_b"});
  for (const auto& p : pairs) {
    w.cell(p.a).cell(p.b);
    w.end_row();
  }
  return w.str();
}

std::vector<IdPair> parse_pairs_csv(const std::string& text) {
  const auto rows = split_csv(text);
  expect_header(rows, {"id_a", "id_b"}, "pairs table");
  std::vector<IdPair> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.fields.size() != 2) throw ParseError(row.line, "expected 2 fields");
    out.push_back({parse_index(row.fields[0], row.line), parse_index(row.fields[1], row.line)});
  }
  return out;
}

std::string gallery_csv(const std::vector<GalleryEntry>& entries) {
  CsvWriter w({"id", "role"});
  for (const auto& e : entries) {
    w.cell(e.id).cell(std::string(e.role == GalleryRole::Gallery ? "gallery" : "probe"));
    w.end_row();
  }
  return w.str();
}

std::vector<GalleryEntry> parse_gallery_csv(const std::string& text) {
  const auto rows = split_csv(text);
  expect_header(rows, {"id", "role"}, "gallery table");
  std::vector<GalleryEntry> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.fields.size() != 2) throw ParseError(row.line, "expected 2 fields");
    const std::string role = trim(row.fields[1]);
    if (role != "gallery" && role != "probe") {
      throw ParseError(row.line, "role must be 'gallery' or 'probe', got '" + role + "'");
    }
    out.push_back({parse_index(row.fields[0], row.line),
                   role == "gallery" ? GalleryRole::Gallery : GalleryRole::Probe});
  }
  return out;
}

}  // namespace marginlab::io

#pragma once

// File formats: CSV tables (header row, comma separated, '%.10g' numbers),
// JSON model files and the feature / pair / gallery tables read by `eval`.

#include <cstddef>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "marginlab/trainer.hpp"

namespace marginlab::io {

inline constexpr const char* kModelMagic = "MARGINLAB-MODEL";
inline constexpr int kModelVersion = 1;

std::string format_number(double v);

// Writes to "<path>.tmp" then renames over `path`, so readers never see a
// partial file. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header);

  CsvWriter& cell(double v);
  CsvWriter& cell(std::size_t v);
  CsvWriter& cell(const std::string& v);
  void end_row();

  std::string str() const { return out_.str(); }

 private:
  void separator();

  std::ostringstream out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

// Model JSON: {"format": magic, "version": 1, "layers": [{"weights": {"rows",
// "cols", "data"}, "bias": {...}}], "classifier": {...}, "metadata": {...}}.
nlohmann::ordered_json model_to_json(const MlpModel& model,
                                     const nlohmann::ordered_json& metadata = {});
MlpModel model_from_json(const nlohmann::ordered_json& doc);
void save_model(const std::filesystem::path& path, const MlpModel& model,
                const nlohmann::ordered_json& metadata = {});
MlpModel load_model(const std::filesystem::path& path);

struct FeatureTable {
  std::vector<std::size_t> ids;
  std::vector<std::size_t> labels;
  Matrix features;  // one row per id
};

// Columns: id,label,f0,...,f{K-1}.
std::string feature_csv(const FeatureTable& table);
FeatureTable parse_feature_csv(const std::string& text);

struct IdPair {
  std::size_t a = 0;
  std::size_t b = 0;
};

// Columns: id_a,id_b.
std::string pairs_csv(const std::vector<IdPair>& pairs);
std::vector<IdPair> parse_pairs_csv(const std::string& text);

enum class GalleryRole { Gallery, Probe };

struct GalleryEntry {
  std::size_t id = 0;
  GalleryRole role = GalleryRole::Gallery;
};

// Columns: id,role with role in {gallery, probe}.
std::string gallery_csv(const std::vector<GalleryEntry>& entries);
std::vector<GalleryEntry> parse_gallery_csv(const std::string& text);

}  // namespace marginlab::io

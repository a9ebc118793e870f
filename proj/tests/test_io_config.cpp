#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "marginlab/error.hpp"
#include "marginlab/experiment_config.hpp"
#include "marginlab/io.hpp"

namespace {

using namespace marginlab;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string config_error(const char* text) {
  try {
    parse_experiment_config(ordered_json::parse(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig cfg = default_experiment_config();
  const ExperimentConfig back = parse_experiment_config(to_json(cfg));
  EXPECT_EQ(to_json(back).dump(), to_json(cfg).dump());
}

TEST(Config, OverridesFields) {
  const auto cfg = parse_experiment_config(ordered_json::parse(
      R"({"dataset": {"classes": 4}, "loss": {"variant": "LMCL", "s": 16, "m": 0.25},
          "train": {"epochs": 10, "lr_drop_epochs": [5]}, "seeds": [7], "m_grid": [0, 0.3]})"));
  EXPECT_EQ(cfg.dataset.classes, 4u);
  EXPECT_EQ(cfg.train.spec.s, 16.0);
  EXPECT_EQ(cfg.train.spec.m, 0.25);
  EXPECT_EQ(cfg.train.epochs, 10u);
  EXPECT_EQ(cfg.seeds, std::vector<std::uint64_t>{7});
  EXPECT_EQ(cfg.m_grid, (std::vector<double>{0.0, 0.3}));
}

TEST(Config, NegativeMarginNamesField) {
  const std::string msg = config_error(R"({"loss": {"m": -0.1}})");
  EXPECT_NE(msg.find("loss.m"), std::string::npos) << msg;
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_NE(config_error(R"({"dataset": {"clases": 4}})").find("dataset.clases"), std::string::npos);
  EXPECT_NE(config_error(R"({"extra": 1})").find("extra"), std::string::npos);
  EXPECT_NE(config_error(R"({"train": {"epochs": "ten"}})").find("train.epochs"), std::string::npos);
  EXPECT_NE(config_error(R"({"m_grid": [0, "x"]})").find("m_grid[1]"), std::string::npos);
  EXPECT_NE(config_error(R"({"train": {"batch_size": 0}})").find("batch_size"), std::string::npos);
  EXPECT_NE(config_error(R"({"m_grid": [1.2]})").find("m_grid"), std::string::npos);
  EXPECT_NE(config_error(R"([1, 2])"), "");
}

TEST(Config, LoadFileErrors) {
  EXPECT_THROW(load_experiment_config("/nonexistent/marginlab.json"), IoError);
  const fs::path p = fs::temp_directory_path() / "marginlab_bad_config.json";
  io::write_file_atomic(p, "{ not json");
  EXPECT_THROW(load_experiment_config(p), ConfigError);
  fs::remove(p);
}

TEST(Csv, WriterFormatsAndChecksWidth) {
  io::CsvWriter w({"a", "b"});
  w.cell(0.1).cell(std::size_t{3});
  w.end_row();
  EXPECT_EQ(w.str(), "a,b\n0.1,3\n");
  w.cell(1.0);
  EXPECT_THROW(w.end_row(), DimensionError);
  EXPECT_EQ(io::format_number(1.0 / 3.0), "0.3333333333");
}

TEST(FeatureTable, RoundTrip) {
  io::FeatureTable t{{4, 9}, {0, 1}, Matrix{{0.25, -1.5}, {3.0, 1e-3}}};
  const auto back = io::parse_feature_csv(io::feature_csv(t));
  EXPECT_EQ(back.ids, t.ids);
  EXPECT_EQ(back.labels, t.labels);
  EXPECT_EQ(back.features, t.features);
}

TEST(FeatureTable, ErrorsCarryLineNumbers) {
  try {
    io::parse_feature_csv("id,label,f0\n1,0,0.5\n2,1,abc\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(io::parse_feature_csv("id,label,f0\n1,0,0.5\n1,1,0.2\n"), ParseError);
  EXPECT_THROW(io::parse_feature_csv("id,label,f0\n1,0\n"), ParseError);
  EXPECT_THROW(io::parse_feature_csv("x,y\n"), ParseError);
}

TEST(PairsAndGallery, RoundTrip) {
  const std::vector<io::IdPair> pairs = {{1, 2}, {3, 4}};
  const auto back = io::parse_pairs_csv(io::pairs_csv(pairs));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].a, 3u);
  const std::vector<io::GalleryEntry> g = {{0, io::GalleryRole::Gallery}, {5, io::GalleryRole::Probe}};
  const auto gb = io::parse_gallery_csv(io::gallery_csv(g));
  EXPECT_EQ(gb[1].role, io::GalleryRole::Probe);
  EXPECT_THROW(io::parse_gallery_csv("id,role\n1,judge\n"), ParseError);
}

TEST(ModelFile, RoundTripAndRejectsBadMagic) {
  const MlpModel m = make_mlp(4, {6}, 2, 3, 9);
  const fs::path p = fs::temp_directory_path() / "marginlab_model_test.json";
  io::save_model(p, m, {{"note", "x"}});
  const MlpModel back = io::load_model(p);
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.biases, m.biases);
  EXPECT_EQ(back.classifier.W, m.classifier.W);
  auto doc = io::model_to_json(m);
  doc["format"] = "OTHER";
  EXPECT_THROW(io::model_from_json(doc), ConfigError);
  fs::remove(p);
}

}  // namespace

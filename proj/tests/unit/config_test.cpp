#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "equitrace/run.hpp"
#include "helpers.hpp"

using namespace equitrace;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename E>
std::string error_of(const std::string& text) {
  try {
    RunConfig::parse(text);
  } catch (const E& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, GalleryMatchesShippedFiles) {
  for (const auto& [name, text] : model_gallery()) {
    EXPECT_EQ(text, read_file(std::string(EQUITRACE_CONFIG_DIR) + "/" + name + ".cfg")) << name;
  }
  EXPECT_GE(model_gallery().size(), 9u);
}

TEST(Config, EveryGalleryModelBuilds) {
  for (const auto& [name, text] : model_gallery()) {
    SCOPED_TRACE(name);
    EXPECT_NO_THROW(build_model(RunConfig::parse(text)));
  }
}

TEST(Config, TranslationSummaryGolden) {
  EXPECT_EQ(summarize(load_config("translation")),
            "dim 1, group translation_line, window bump, g = 0.7, orbit window [0.2, 2.0]");
}

TEST(Config, CanonicalTextRoundTrips) {
  for (const auto& [name, text] : model_gallery()) {
    const auto cfg = RunConfig::parse(text);
    const std::string canon = cfg.to_text();
    EXPECT_EQ(RunConfig::parse(canon).to_text(), canon) << name;
  }
}

TEST(Config, MisspelledKeyIsNamed) {
  auto text = model_gallery().at("translation");
  text.replace(text.find("window = bump"), 6, "winddow");
  const std::string msg = error_of<ValidationError>(text);
  EXPECT_NE(msg.find("group.winddow"), std::string::npos) << msg;
}

TEST(Config, PeriodsMustAvoidZero) {
  auto cfg = load_config("translation");
  cfg.set("orbits", "window", "-1, 1");
  try {
    cfg.resolve();
    FAIL() << "window through 0 accepted";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.key(), "orbits.window");
    EXPECT_NE(std::string(e.what()).find("periods must avoid 0"), std::string::npos);
  }
}

TEST(Config, SyntaxErrorsCarryLineNumbers) {
  try {
    RunConfig::parse("[chart]\ndim = 1\n\ndim 2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
  }
  EXPECT_NE(error_of<ParseError>("[chart]\ndim = 1\ndim = 2\n").find("duplicate"), std::string::npos);
  EXPECT_NE(error_of<ParseError>("[chart\n").find("section header"), std::string::npos);
  EXPECT_NE(error_of<ValidationError>("[charts]\ndim = 1\n").find("unknown section"), std::string::npos);
}

TEST(Config, OverridesAreValidated) {
  auto cfg = load_config("circle_up");
  EXPECT_THROW(cfg.set("oracle", "mode", "montecarlo"), ValidationError);
  EXPECT_THROW(cfg.set("flow", "speed", "1"), ValidationError);
  cfg.set("group", "g", "2");
  cfg.resolve();
  EXPECT_EQ(build_model(cfg).g.exps, std::vector<long>{2});
}

TEST(Config, LiteralHelpers) {
  const auto m = parse_matrix_literal("[[1, 2], [3, -4.5]]");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[1][1], "-4.5");
  EXPECT_EQ(parse_vector_literal("[0.5, 1]").size(), 2u);
  const auto parts = split_list("affine [[1, 0], [0, 1]] [1, 0], x", ',');
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[1], "x");
}

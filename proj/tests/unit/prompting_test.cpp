#include <gtest/gtest.h>

#include "bioner/corpus.hpp"
#include "bioner/error.hpp"
#include "bioner/prompting.hpp"
#include "fixtures.hpp"

namespace bioner {
namespace {

class PromptingTest : public ::testing::Test {
 protected:
  void SetUp() override {
    train_ = load_bio_corpus(testing::sample_path("train.conll"), EntitySchema::i2b2(), Split::train);
    test_ = load_bio_corpus(testing::sample_path("test.conll"), EntitySchema::i2b2(), Split::test);
  }
  std::vector<TokenizedSentence> demos(std::size_t k) const {
    return {train_.sentences.begin(), train_.sentences.begin() + static_cast<std::ptrdiff_t>(k)};
  }
  Corpus train_;
  Corpus test_;
  const EntitySchema schema_ = EntitySchema::i2b2();
};

TEST_F(PromptingTest, SixteenShotHas33Turns) {
  const auto b = build_icl_prompt(test_.sentences[0], demos(16), FormatKind::tanl, schema_, "Tag entities.", "knn");
  ASSERT_EQ(b.turns.size(), 33u);
  for (std::size_t i = 0; i < b.turns.size(); ++i) {
    EXPECT_EQ(b.turns[i].role, i % 2 == 0 ? Role::user : Role::assistant);
  }
  EXPECT_EQ(b.system_text, "Tag entities.");
  EXPECT_EQ(b.meta(meta_keys::kShots), "16");
  EXPECT_EQ(b.meta(meta_keys::kStrategy), "knn");
  EXPECT_EQ(b.meta(meta_keys::kQueryId), "test-0");
  EXPECT_EQ(b.meta(meta_keys::kDemoIds).substr(0, 16), "train-0,train-1,");
  EXPECT_EQ(b.query_text(), test_.sentences[0].text());
}

TEST_F(PromptingTest, EmptyDemoIsVerbatimInTanl) {
  TokenizedSentence d{"d0", {"No", "acute", "distress", "."}, std::vector<std::string>(4, "O")};
  const auto b = build_icl_prompt(test_.sentences[1], std::vector<TokenizedSentence>{d}, FormatKind::tanl, schema_,
                                  "x");
  EXPECT_EQ(b.turns[1].text, "No acute distress .");
}

TEST_F(PromptingTest, Deterministic) {
  const auto a = build_icl_prompt(test_.sentences[2], demos(4), FormatKind::dice, schema_, "x");
  const auto b = build_icl_prompt(test_.sentences[2], demos(4), FormatKind::dice, schema_, "x");
  EXPECT_EQ(serialize_bundle(a), serialize_bundle(b));
}

TEST_F(PromptingTest, DemoOrderChangesBundle) {
  auto d = demos(3);
  const auto a = serialize_bundle(build_icl_prompt(test_.sentences[0], d, FormatKind::tanl, schema_, "x"));
  std::swap(d[0], d[1]);
  const auto b = serialize_bundle(build_icl_prompt(test_.sentences[0], d, FormatKind::tanl, schema_, "x"));
  EXPECT_NE(a, b);
}

TEST_F(PromptingTest, NoGoldLeakage) {
  for (FormatKind f : {FormatKind::tanl, FormatKind::dice}) {
    for (const auto& q : test_.sentences) {
      for (const auto& d : demos(8)) ASSERT_NE(d.text(), q.text());
      const auto gold = encode_output(f, q, mentions_from_bio(q), schema_);
      const auto b = build_icl_prompt(q, demos(8), f, schema_, default_instruction(f, schema_));
      EXPECT_EQ(serialize_bundle(b).find(gold), std::string::npos);
      EXPECT_EQ(bundle_text(b).find(gold), std::string::npos);
    }
  }
}

TEST_F(PromptingTest, Errors) {
  EXPECT_THROW(build_icl_prompt(test_.sentences[0], {}, FormatKind::tanl, schema_, "x"), ArgumentError);
  TokenizedSentence unlabeled{"u", {"a"}, std::nullopt};
  EXPECT_THROW(build_icl_prompt(test_.sentences[0], std::vector<TokenizedSentence>{unlabeled}, FormatKind::tanl,
                                schema_, "x"),
               ArgumentError);
  EXPECT_THROW(build_zero_shot_prompt(test_.sentences[0], FormatKind::tanl, schema_, ""), ArgumentError);
  EXPECT_THROW(build_icl_prompt(test_.sentences[0], demos(1), FormatKind::tanl, schema_, "  "), ArgumentError);
}

TEST_F(PromptingTest, ZeroShotListsTypes) {
  const auto b = build_zero_shot_prompt(test_.sentences[0], FormatKind::tanl, schema_, "Find entities.");
  ASSERT_EQ(b.turns.size(), 1u);
  for (const char* t : {"test", "treatment", "problem"}) EXPECT_NE(b.system_text.find(t), std::string::npos);
  EXPECT_EQ(b.system_text.rfind("Find entities.", 0), 0u);
  EXPECT_EQ(b.meta(meta_keys::kShots), "0");
}

TEST_F(PromptingTest, ZeroShotDiceEndsWithPlaceholders) {
  const auto b = build_zero_shot_prompt(test_.sentences[0], FormatKind::dice, schema_, "x");
  EXPECT_TRUE(b.query_text().ends_with("entity is <entity>"));
  EXPECT_EQ(b.query_text(), dice_encode_input(test_.sentences[0], schema_));
}

TEST_F(PromptingTest, DefaultInstructionsNameTheTypes) {
  for (FormatKind f : {FormatKind::tanl, FormatKind::dice}) {
    const auto s = default_instruction(f, schema_);
    for (const char* t : {"test", "treatment", "problem"}) EXPECT_NE(s.find(t), std::string::npos);
  }
  EXPECT_NE(default_instruction(FormatKind::tanl, schema_).find("[ mention | type ]"), std::string::npos);
}

TEST_F(PromptingTest, JsonRoundTrip) {
  const auto b = build_icl_prompt(test_.sentences[3], demos(2), FormatKind::dice, schema_, "x", "random");
  EXPECT_EQ(bundle_from_json(bundle_to_json(b)), b);
  EXPECT_THROW(bundle_from_json(nlohmann::json::parse(R"({"system":"", "turns":[{"role":"tool","text":""}],
                                                          "metadata":{}})")),
               ProtocolError);
}

}  // namespace
}  // namespace bioner

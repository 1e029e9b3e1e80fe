#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "icg/data.hpp"
#include "icg/model.hpp"

namespace icg {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

UtteranceRecord make_record(const std::string& id, std::size_t n_words, Emotion e = Emotion::joy) {
  UtteranceRecord r;
  r.id = id;
  r.emotion = e;
  r.sentence_embedding.assign(kSentenceDim, 0.01);
  for (std::size_t i = 0; i < n_words; ++i) {
    Word w;
    w.text = "w" + std::to_string(i);
    w.intensity = static_cast<double>(i % 10) / 10.0;
    w.embedding.assign(kWordDim, static_cast<double>(i));
    r.words.push_back(std::move(w));
  }
  return r;
}

EmotionLexicon make_lexicon() {
  EmotionLexicon lex;
  double k = 1.0;
  for (Emotion e : kAllEmotions) lex[e] = std::vector<double>(kWordDim, k++);
  return lex;
}

json record_json(const std::string& id, std::size_t n_words, const std::string& emotion = "joy",
                 double intensity = 0.7) {
  json words = json::array();
  for (std::size_t i = 0; i < n_words; ++i) {
    words.push_back({{"w", "x"}, {"intensity", intensity}, {"e_w", std::vector<double>(kWordDim, 0.0)}});
  }
  return {{"id", id},
          {"emotion", emotion},
          {"h_s", std::vector<double>(kSentenceDim, 0.0)},
          {"words", words}};
}

// ---------------------------------------------------------------- Labels

TEST(Binarize, ThresholdIsStrict) {
  EXPECT_EQ(binarize(0.4999), 0);
  EXPECT_EQ(binarize(0.5), 0);
  EXPECT_EQ(binarize(0.5001), 1);
  EXPECT_EQ(binarize(0.0), 0);
  EXPECT_EQ(binarize(1.0), 1);
  EXPECT_EQ(binarize(std::nextafter(0.5, 1.0)), 1);
}

TEST(Binarize, RejectsOutOfRangeIntensity) {
  EXPECT_THROW(binarize(-0.1), ValidationError);
  EXPECT_THROW(binarize(1.0001), ValidationError);
  EXPECT_THROW(binarize(std::nan("")), ValidationError);
}

// ---------------------------------------------------------------- Fusion

TEST(FuseEmotion, IsElementwiseMean) {
  const std::vector<double> w = {1.0, -2.0, 3.0}, e = {3.0, 2.0, -1.0};
  EXPECT_EQ(fuse_emotion(w, e), (std::vector<double>{2.0, 0.0, 1.0}));
}

TEST(FuseEmotion, IsSymmetricAndIdempotentOnEqualInputs) {
  const std::vector<double> a = {0.1, 0.7, -0.3}, b = {0.9, -0.4, 0.2};
  EXPECT_EQ(fuse_emotion(a, b), fuse_emotion(b, a));
  EXPECT_EQ(fuse_emotion(a, a), a);
}

TEST(FuseEmotion, RejectsMismatchedWidths) {
  const std::vector<double> a(3), b(4);
  EXPECT_THROW(fuse_emotion(a, b), ValidationError);
}

// ---------------------------------------------------------------- Expansion

TEST(Expand, OneSamplePerWord) {
  const auto lex = make_lexicon();
  const std::vector<UtteranceRecord> recs = {make_record("a", 2), make_record("b", 7),
                                             make_record("c", 40)};
  const auto samples = expand_records(recs, lex);
  ASSERT_EQ(samples.size(), 49u);
  EXPECT_EQ(samples[0].record_id, "a");
  EXPECT_EQ(samples[2].record_id, "b");
  EXPECT_EQ(samples[2].word_index, 0u);
  EXPECT_EQ(samples[8].word_index, 6u);
  EXPECT_EQ(samples.back().word_index, 39u);
}

TEST(Expand, SamplesShareSentenceEmbeddingAndFuseEmotion) {
  const auto lex = make_lexicon();
  const auto rec = make_record("a", 3, Emotion::sadness);
  const auto samples = expand_record(rec, lex);
  ASSERT_EQ(samples.size(), 3u);
  EXPECT_EQ(samples[0].sentence_embedding.get(), samples[2].sentence_embedding.get());
  EXPECT_EQ(*samples[0].sentence_embedding, rec.sentence_embedding);
  // word 2 embedding = 2, sadness lexicon = 2
  for (double v : samples[2].fused_embedding) EXPECT_DOUBLE_EQ(v, 2.0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(samples[i].intensity, rec.words[i].intensity);
    EXPECT_EQ(samples[i].label, rec.words[i].intensity > 0.5 ? 1 : 0);
  }
}

TEST(Expand, MissingLexiconEmotionIsConfigError) {
  auto lex = make_lexicon();
  lex.erase(Emotion::fear);
  EXPECT_THROW(expand_record(make_record("a", 2, Emotion::fear), lex), ConfigError);
}

TEST(Expand, RejectsTooManyWords) {
  EXPECT_THROW(expand_record(make_record("a", 41), make_lexicon()), ValidationError);
}

// ---------------------------------------------------------------- Split

TEST(Split, TenRecordsGiveEightAndTwo) {
  std::vector<UtteranceRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(make_record("r" + std::to_string(i), 1));
  const Split s = split_80_20(recs, 7);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, IsDeterministicDisjointAndComplete) {
  std::vector<UtteranceRecord> recs;
  for (int i = 0; i < 37; ++i) recs.push_back(make_record("r" + std::to_string(i), 1));
  const Split a = split_80_20(recs, 3), b = split_80_20(recs, 3), c = split_80_20(recs, 4);
  EXPECT_EQ(a.train.size(), 29u);
  std::set<std::string> train, test, all;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].id, b.train[i].id);
    train.insert(a.train[i].id);
  }
  for (const auto& r : a.test) test.insert(r.id);
  for (const auto& id : test) EXPECT_EQ(train.count(id), 0u) << id;
  all.insert(train.begin(), train.end());
  all.insert(test.begin(), test.end());
  EXPECT_EQ(all.size(), 37u);
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i) differs = differs || a.train[i].id != c.train[i].id;
  EXPECT_TRUE(differs);
}

TEST(Split, RejectsTooFewRecords) {
  std::vector<UtteranceRecord> recs(4, make_record("x", 1));
  EXPECT_THROW(split_80_20(recs, 0), ValidationError);
}

// ---------------------------------------------------------------- Loading

TEST(Load, ParsesValidLinesAndSkipsHeaderAndBlanks) {
  const std::string text = json{{"header", {{"encoder", "test-v1"}}}}.dump() + "\n" +
                           record_json("a", 2).dump() + "\n\n" +
                           record_json("b", 3, "happiness").dump() + "\n";
  const auto recs = parse_dataset(text);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].id, "a");
  EXPECT_EQ(recs[0].words.size(), 2u);
  EXPECT_EQ(recs[1].emotion, Emotion::joy);
}

TEST(Load, FortyOneWordsNamesRecordAndLimit) {
  const std::string text = record_json("ok", 1).dump() + "\n" + record_json("long-one", 41).dump();
  try {
    parse_dataset(text);
    FAIL() << "accepted 41 words";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.line, 2u);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("long-one"), std::string::npos) << msg;
    EXPECT_NE(msg.find("40 words"), std::string::npos) << msg;
  }
}

TEST(Load, FortyWordsIsAccepted) {
  EXPECT_EQ(parse_dataset(record_json("x", 40).dump()).at(0).words.size(), 40u);
}

TEST(Load, NegativeIntensityIsRejected) {
  try {
    parse_dataset(record_json("neg", 2, "joy", -0.1).dump());
    FAIL() << "accepted -0.1";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.line, 1u);
    EXPECT_NE(std::string(e.what()).find("intensity"), std::string::npos) << e.what();
  }
}

TEST(Load, MalformedJsonReportsLineNumber) {
  const std::string text = record_json("a", 1).dump() + "\n" + record_json("b", 1).dump() +
                           "\n{\"id\": \"c\", \n";
  try {
    parse_dataset(text);
    FAIL() << "accepted malformed JSON";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.line, 3u);
    EXPECT_EQ(std::string(e.what()).rfind("line 3: ", 0), 0u) << e.what();
  }
}

TEST(Load, WrongEmbeddingWidthIsRejected) {
  json j = record_json("a", 1);
  j["h_s"] = std::vector<double>(383, 0.0);
  EXPECT_THROW(parse_dataset(j.dump()), DatasetError);
  j = record_json("a", 1);
  j["words"][0]["e_w"] = std::vector<double>(99, 0.0);
  EXPECT_THROW(parse_dataset(j.dump()), DatasetError);
}

TEST(Load, UnknownEmotionIsRejected) {
  EXPECT_THROW(parse_dataset(record_json("a", 1, "boredom").dump()), DatasetError);
}

TEST(Load, MissingFileIsReported) {
  EXPECT_THROW(load_dataset("/nonexistent/icg/data.jsonl"), DatasetError);
}

TEST(Emotions, HappinessMapsToJoyAndNamesRoundTrip) {
  EXPECT_EQ(parse_emotion("happiness"), Emotion::joy);
  for (Emotion e : kAllEmotions) EXPECT_EQ(parse_emotion(emotion_name(e)), e);
  EXPECT_FALSE(parse_emotion("Joy").has_value());
}

// ---------------------------------------------------------------- Files

class DataFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("icg_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

TEST_F(DataFiles, DatasetRoundTripsThroughJsonl) {
  const auto ds = synthetic_provider({.seed = 5, .num_records = 12});
  save_dataset(ds.records, dir / "d.jsonl");
  const auto back = load_dataset(dir / "d.jsonl");
  ASSERT_EQ(back.size(), ds.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, ds.records[i].id);
    EXPECT_EQ(back[i].emotion, ds.records[i].emotion);
    EXPECT_EQ(back[i].sentence_embedding, ds.records[i].sentence_embedding);
    ASSERT_EQ(back[i].words.size(), ds.records[i].words.size());
    for (std::size_t w = 0; w < back[i].words.size(); ++w) {
      EXPECT_EQ(back[i].words[w].text, ds.records[i].words[w].text);
      EXPECT_EQ(back[i].words[w].intensity, ds.records[i].words[w].intensity);
      EXPECT_EQ(back[i].words[w].embedding, ds.records[i].words[w].embedding);
    }
  }
}

TEST_F(DataFiles, LexiconRoundTripsAndAcceptsHappinessKey) {
  const auto lex = make_lexicon();
  save_lexicon(lex, dir / "lex.json");
  EXPECT_EQ(load_lexicon(dir / "lex.json"), lex);

  json j = json::object();
  for (Emotion e : kAllEmotions) {
    const std::string key = e == Emotion::joy ? "happiness" : std::string(emotion_name(e));
    j[key] = lex.at(e);
  }
  std::ofstream(dir / "alias.json") << j.dump();
  EXPECT_EQ(load_lexicon(dir / "alias.json").at(Emotion::joy), lex.at(Emotion::joy));
}

TEST_F(DataFiles, LexiconWithWrongWidthIsRejected) {
  json j = json::object();
  for (Emotion e : kAllEmotions) j[std::string(emotion_name(e))] = std::vector<double>(kWordDim, 0.0);
  j["fear"] = std::vector<double>(50, 0.0);
  std::ofstream(dir / "bad.json") << j.dump();
  EXPECT_THROW(load_lexicon(dir / "bad.json"), ValidationError);
}

// ---------------------------------------------------------------- Synthetic

TEST(Synthetic, IsDeterministicPerSeed) {
  const auto a = synthetic_provider({.seed = 9, .num_records = 30});
  const auto b = synthetic_provider({.seed = 9, .num_records = 30});
  const auto c = synthetic_provider({.seed = 10, .num_records = 30});
  ASSERT_EQ(a.records.size(), 30u);
  bool differs = false;
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(a.records[i].id, b.records[i].id);
    EXPECT_EQ(a.records[i].sentence_embedding, b.records[i].sentence_embedding);
    ASSERT_EQ(a.records[i].words.size(), b.records[i].words.size());
    for (std::size_t w = 0; w < a.records[i].words.size(); ++w) {
      EXPECT_EQ(a.records[i].words[w].intensity, b.records[i].words[w].intensity);
    }
    differs = differs || a.records[i].sentence_embedding != c.records[i].sentence_embedding;
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(a.lexicon, b.lexicon);
}

TEST(Synthetic, PositiveRateNearFifteenPercent) {
  const auto ds = synthetic_provider({.seed = 1, .num_records = 1000});
  std::size_t pos = 0, total = 0;
  for (const auto& r : ds.records) {
    validate_record(r);
    EXPECT_GE(r.words.size(), 1u);
    EXPECT_LE(r.words.size(), kMaxWords);
    for (const auto& w : r.words) {
      pos += static_cast<std::size_t>(binarize(w.intensity));
      ++total;
    }
  }
  const double rate = static_cast<double>(pos) / static_cast<double>(total);
  EXPECT_GE(rate, 0.10);
  EXPECT_LE(rate, 0.20);
}

TEST(Synthetic, EmbeddingsAreUnitNormAndStablePerWord) {
  const auto ds = synthetic_provider({.seed = 2, .num_records = 50});
  std::map<std::string, std::vector<double>> seen;
  for (const auto& r : ds.records) {
    double n = 0.0;
    for (double v : r.sentence_embedding) n += v * v;
    EXPECT_NEAR(n, 1.0, 1e-12);
    for (const auto& w : r.words) {
      auto [it, fresh] = seen.emplace(w.text, w.embedding);
      if (!fresh) EXPECT_EQ(it->second, w.embedding) << w.text;
    }
  }
  validate_lexicon(ds.lexicon);
  EXPECT_EQ(ds.lexicon.size(), 8u);
}

TEST(Synthetic, IconicityIsAPropertyOfTheWord) {
  const auto ds = synthetic_provider({.seed = 3, .num_records = 300});
  std::map<std::string, int> label;
  for (const auto& r : ds.records)
    for (const auto& w : r.words) {
      auto [it, fresh] = label.emplace(w.text, binarize(w.intensity));
      if (!fresh) EXPECT_EQ(it->second, binarize(w.intensity)) << w.text;
    }
}

TEST(Fnv1a, MatchesPublishedVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
}

}  // namespace
}  // namespace icg

#include "icg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "icg/model.hpp"
#include "icg/random.hpp"

namespace icg {

using nlohmann::json;

namespace {

constexpr std::size_t kVocabularySize = 400;
constexpr std::size_t kMinSyntheticWords = 3;
constexpr std::size_t kMaxSyntheticWords = 20;

constexpr const char* kSyllables[16] = {"ka", "lo", "mi", "ne", "ru", "sa", "to", "vi",
                                        "be", "do", "fu", "ga", "hi", "jo", "pe", "zu"};

std::vector<double> unit_vector(std::uint64_t seed, std::size_t dim) {
  SplitMix64 rng(seed);
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::string vocabulary_word(std::size_t k) {
  std::string w = std::string(kSyllables[k % 16]) + kSyllables[(k / 16) % 16];
  if (k >= 256) w += kSyllables[k / 256];
  return w;
}

std::vector<double> number_array(const json& j, std::size_t dim, const std::string& field) {
  if (!j.is_array()) throw ValidationError(field + ": expected an array");
  if (j.size() != dim) {
    throw ValidationError(field + ": expected " + std::to_string(dim) + " numbers, got " +
                          std::to_string(j.size()));
  }
  std::vector<double> out;
  out.reserve(dim);
  for (const auto& x : j) {
    if (!x.is_number()) throw ValidationError(field + ": non-numeric entry");
    out.push_back(x.get<double>());
  }
  return out;
}

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(std::string("missing field '") + key + "'");
  return *it;
}

UtteranceRecord record_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  UtteranceRecord r;
  const json& id = require(j, "id");
  if (!id.is_string()) throw ValidationError("id: expected a string");
  r.id = id.get<std::string>();
  const json& emo = require(j, "emotion");
  if (!emo.is_string()) throw ValidationError("emotion: expected a string");
  const auto e = parse_emotion(emo.get<std::string>());
  if (!e) throw ValidationError("emotion: unknown label '" + emo.get<std::string>() + "'");
  r.emotion = *e;
  r.sentence_embedding = number_array(require(j, "h_s"), kSentenceDim, "h_s");
  const json& words = require(j, "words");
  if (!words.is_array()) throw ValidationError("words: expected an array");
  if (words.size() > kMaxWords) {
    throw ValidationError("record '" + r.id + "' has " + std::to_string(words.size()) +
                          " words; the limit is " + std::to_string(kMaxWords) + " words");
  }
  for (const auto& w : words) {
    if (!w.is_object()) throw ValidationError("words: expected objects");
    Word word;
    const json& text = require(w, "w");
    if (!text.is_string()) throw ValidationError("w: expected a string");
    word.text = text.get<std::string>();
    const json& inten = require(w, "intensity");
    if (!inten.is_number()) throw ValidationError("intensity: expected a number");
    word.intensity = inten.get<double>();
    word.embedding = number_array(require(w, "e_w"), kWordDim, "e_w");
    r.words.push_back(std::move(word));
  }
  validate_record(r);
  return r;
}

json record_to_json(const UtteranceRecord& r) {
  json words = json::array();
  for (const auto& w : r.words) {
    words.push_back({{"w", w.text}, {"intensity", w.intensity}, {"e_w", w.embedding}});
  }
  return {{"id", r.id},
          {"emotion", std::string(emotion_name(r.emotion))},
          {"h_s", r.sentence_embedding},
          {"words", std::move(words)}};
}

// Metadata lines (e.g. an exporter's encoder-version header) carry "header"
// and no "id".
bool is_header_line(const json& j) {
  return j.is_object() && j.contains("header") && !j.contains("id");
}

}  // namespace

std::string_view emotion_name(Emotion e) {
  switch (e) {
    case Emotion::joy: return "joy";
    case Emotion::sadness: return "sadness";
    case Emotion::neutral: return "neutral";
    case Emotion::anger: return "anger";
    case Emotion::contempt: return "contempt";
    case Emotion::surprise: return "surprise";
    case Emotion::disgust: return "disgust";
    case Emotion::fear: return "fear";
  }
  return "unknown";
}

std::optional<Emotion> parse_emotion(std::string_view label) {
  if (label == "happiness") return Emotion::joy;
  for (Emotion e : kAllEmotions) {
    if (emotion_name(e) == label) return e;
  }
  return std::nullopt;
}

int binarize(double intensity) {
  if (!(intensity >= 0.0 && intensity <= 1.0)) {
    throw ValidationError("intensity " + std::to_string(intensity) + " outside [0, 1]");
  }
  return intensity > kIntensityThreshold ? 1 : 0;
}

std::vector<double> fuse_emotion(std::span<const double> word, std::span<const double> emotion) {
  if (word.size() != emotion.size()) {
    throw ValidationError("fuse_emotion: word embedding has " + std::to_string(word.size()) +
                          " values, emotion embedding " + std::to_string(emotion.size()));
  }
  std::vector<double> out(word.size());
  for (std::size_t i = 0; i < word.size(); ++i) out[i] = (word[i] + emotion[i]) / 2.0;
  return out;
}

void validate_record(const UtteranceRecord& r) {
  const std::string who = "record '" + r.id + "'";
  if (r.words.empty()) throw ValidationError(who + " has no words");
  if (r.words.size() > kMaxWords) {
    throw ValidationError(who + " has " + std::to_string(r.words.size()) +
                          " words; the limit is " + std::to_string(kMaxWords) + " words");
  }
  if (r.sentence_embedding.size() != kSentenceDim) {
    throw ValidationError(who + ": h_s must have " + std::to_string(kSentenceDim) + " values");
  }
  for (std::size_t i = 0; i < r.words.size(); ++i) {
    const Word& w = r.words[i];
    if (!(w.intensity >= 0.0 && w.intensity <= 1.0)) {
      throw ValidationError(who + " word " + std::to_string(i) + ": intensity " +
                            std::to_string(w.intensity) + " outside [0, 1]");
    }
    if (w.embedding.size() != kWordDim) {
      throw ValidationError(who + " word " + std::to_string(i) + ": e_w must have " +
                            std::to_string(kWordDim) + " values");
    }
  }
}

void validate_lexicon(const EmotionLexicon& lex) {
  for (Emotion e : kAllEmotions) {
    auto it = lex.find(e);
    if (it == lex.end()) {
      throw ValidationError("lexicon: missing emotion '" + std::string(emotion_name(e)) + "'");
    }
    if (it->second.size() != kWordDim) {
      throw ValidationError("lexicon: '" + std::string(emotion_name(e)) + "' must have " +
                            std::to_string(kWordDim) + " values");
    }
  }
}

std::vector<WordSample> expand_record(const UtteranceRecord& record, const EmotionLexicon& lex) {
  validate_record(record);
  auto emo = lex.find(record.emotion);
  if (emo == lex.end()) {
    throw ConfigError("lexicon has no embedding for emotion '" +
                          std::string(emotion_name(record.emotion)) + "'");
  }
  auto shared = std::make_shared<const std::vector<double>>(record.sentence_embedding);
  std::vector<WordSample> out;
  out.reserve(record.words.size());
  for (std::size_t n = 0; n < record.words.size(); ++n) {
    const Word& w = record.words[n];
    WordSample s;
    s.record_id = record.id;
    s.word_index = n;
    s.sentence_embedding = shared;
    s.fused_embedding = fuse_emotion(w.embedding, emo->second);
    s.intensity = w.intensity;
    s.label = binarize(w.intensity);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<WordSample> expand_records(std::span<const UtteranceRecord> records,
                                       const EmotionLexicon& lex) {
  std::vector<WordSample> out;
  for (const auto& r : records) {
    auto samples = expand_record(r, lex);
    std::move(samples.begin(), samples.end(), std::back_inserter(out));
  }
  return out;
}

Split split_80_20(std::span<const UtteranceRecord> records, std::uint64_t seed) {
  if (records.size() < 5) {
    throw ValidationError("split_80_20: need at least 5 records, got " +
                          std::to_string(records.size()));
  }
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SplitMix64 rng(seed);
  deterministic_shuffle(order, rng);
  const std::size_t n_train = records.size() * 8 / 10;
  Split s;
  s.train.reserve(n_train);
  s.test.reserve(records.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? s.train : s.test).push_back(records[order[i]]);
  }
  return s;
}

std::vector<UtteranceRecord> parse_dataset(std::string_view jsonl) {
  std::vector<UtteranceRecord> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    const std::size_t end = std::min(jsonl.find('\n', start), jsonl.size());
    std::string_view line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == jsonl.size()) break;
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DatasetError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (is_header_line(j)) continue;
    try {
      out.push_back(record_from_json(j));
    } catch (const ValidationError& e) {
      throw DatasetError(line_no, e.what());
    } catch (const json::exception& e) {
      throw DatasetError(line_no, e.what());
    }
    if (end == jsonl.size()) break;
  }
  return out;
}

std::vector<UtteranceRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(0, "cannot open dataset " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

void save_dataset(std::span<const UtteranceRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError(0, "cannot write dataset " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

EmotionLexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open lexicon " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("lexicon: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("lexicon: expected a JSON object");
  EmotionLexicon lex;
  for (const auto& [key, value] : j.items()) {
    const auto e = parse_emotion(key);
    if (!e) throw ValidationError("lexicon: unknown emotion '" + key + "'");
    lex[*e] = number_array(value, kWordDim, "lexicon." + key);
  }
  validate_lexicon(lex);
  return lex;
}

void save_lexicon(const EmotionLexicon& lex, const std::filesystem::path& path) {
  json j = json::object();
  for (const auto& [e, v] : lex) j[std::string(emotion_name(e))] = v;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write lexicon " + path.string());
  out << j.dump() << '\n';
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

SyntheticDataset synthetic_provider(const SyntheticOptions& options) {
  if (options.num_records < 1) throw ValidationError("synthetic_provider: n_records must be >= 1");
  if (!(options.positive_rate > 0.0 && options.positive_rate < 1.0)) {
    throw ValidationError("synthetic_provider: positive_rate must be in (0, 1)");
  }

  // A word is iconic when its hash rank falls in the lowest positive_rate
  // fraction of the vocabulary, so iconicity is a property of the word.
  std::vector<std::pair<std::uint64_t, std::size_t>> ranked;
  for (std::size_t k = 0; k < kVocabularySize; ++k) {
    ranked.emplace_back(fnv1a(vocabulary_word(k), fnv1a("iconic")), k);
  }
  std::sort(ranked.begin(), ranked.end());
  const auto n_iconic = static_cast<std::size_t>(
      std::llround(options.positive_rate * static_cast<double>(kVocabularySize)));
  std::vector<bool> iconic(kVocabularySize, false);
  for (std::size_t i = 0; i < n_iconic; ++i) iconic[ranked[i].second] = true;

  SyntheticDataset ds;
  for (Emotion e : kAllEmotions) {
    ds.lexicon[e] = unit_vector(fnv1a(emotion_name(e), fnv1a("emotion")), kWordDim);
  }

  SplitMix64 rng(options.seed);
  char id[32];
  for (std::size_t r = 0; r < options.num_records; ++r) {
    UtteranceRecord rec;
    std::snprintf(id, sizeof(id), "syn-%06zu", r);
    rec.id = id;
    rec.emotion = kAllEmotions[rng.below(kAllEmotions.size())];
    // High-arousal emotions push iconic words toward stronger gestures.
    const double arousal = [&] {
      switch (rec.emotion) {
        case Emotion::anger:
        case Emotion::joy:
        case Emotion::surprise:
        case Emotion::fear: return 1.0;
        case Emotion::sadness:
        case Emotion::neutral: return 0.5;
        default: return 0.75;
      }
    }();
    const std::size_t n_words =
        kMinSyntheticWords + rng.below(kMaxSyntheticWords - kMinSyntheticWords + 1);
    std::string sentence;
    for (std::size_t w = 0; w < n_words; ++w) {
      const std::size_t k = rng.below(kVocabularySize);
      Word word;
      word.text = vocabulary_word(k);
      const double u = rng.uniform();
      word.intensity = iconic[k] ? 0.55 + 0.45 * arousal * u : 0.45 * u * u;
      word.embedding = unit_vector(fnv1a(word.text, fnv1a("word")), kWordDim);
      if (!sentence.empty()) sentence += ' ';
      sentence += word.text;
      rec.words.push_back(std::move(word));
    }
    rec.sentence_embedding = unit_vector(fnv1a(sentence, fnv1a("sentence")), kSentenceDim);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace icg

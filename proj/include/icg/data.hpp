#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icg {

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dataset file problem, tagged with the 1-based line it came from.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t line_no, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
  std::size_t line;
};

inline constexpr std::size_t kMaxWords = 40;

enum class Emotion { joy, sadness, neutral, anger, contempt, surprise, disgust, fear };

inline constexpr std::array<Emotion, 8> kAllEmotions = {
    Emotion::joy,      Emotion::sadness, Emotion::neutral, Emotion::anger,
    Emotion::contempt, Emotion::surprise, Emotion::disgust, Emotion::fear};

std::string_view emotion_name(Emotion e);
// Accepts the eight canonical names plus "happiness", which maps to joy.
std::optional<Emotion> parse_emotion(std::string_view label);

struct Word {
  std::string text;
  double intensity = 0.0;
  std::vector<double> embedding;  // e_w, 100-d
};

struct UtteranceRecord {
  std::string id;
  Emotion emotion = Emotion::neutral;
  std::vector<Word> words;
  std::vector<double> sentence_embedding;  // h_s, 384-d
};

struct WordSample {
  std::string record_id;
  std::size_t word_index = 0;
  // Shared by every sample of the same record.
  std::shared_ptr<const std::vector<double>> sentence_embedding;
  std::vector<double> fused_embedding;  // e_n
  int label = 0;                        // c
  double intensity = 0.0;               // i
};

using EmotionLexicon = std::map<Emotion, std::vector<double>>;

// Label rule: 1 iff intensity strictly exceeds the threshold.
inline constexpr double kIntensityThreshold = 0.5;

int binarize(double intensity);
std::vector<double> fuse_emotion(std::span<const double> word, std::span<const double> emotion);

void validate_record(const UtteranceRecord& r);
void validate_lexicon(const EmotionLexicon& lex);

std::vector<WordSample> expand_record(const UtteranceRecord& record, const EmotionLexicon& lex);
std::vector<WordSample> expand_records(std::span<const UtteranceRecord> records,
                                       const EmotionLexicon& lex);

struct Split {
  std::vector<UtteranceRecord> train;
  std::vector<UtteranceRecord> test;
};

// Record-level shuffle-and-split; |train| = floor(0.8 n).
Split split_80_20(std::span<const UtteranceRecord> records, std::uint64_t seed);

std::vector<UtteranceRecord> load_dataset(const std::filesystem::path& path);
std::vector<UtteranceRecord> parse_dataset(std::string_view jsonl);
void save_dataset(std::span<const UtteranceRecord> records, const std::filesystem::path& path);

EmotionLexicon load_lexicon(const std::filesystem::path& path);
void save_lexicon(const EmotionLexicon& lex, const std::filesystem::path& path);

struct SyntheticOptions {
  std::uint64_t seed = 0;
  std::size_t num_records = 100;
  double positive_rate = 0.15;
};

struct SyntheticDataset {
  std::vector<UtteranceRecord> records;
  EmotionLexicon lexicon;
};

// Deterministic stand-in for pretrained encoders. Embeddings are unit vectors
// seeded from a hash of the text, so a word always maps to the same e_w. A
// fixed fraction of the vocabulary is "iconic"; those words carry intensities
// above the threshold, everything else stays below it.
SyntheticDataset synthetic_provider(const SyntheticOptions& options);

// Stable 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace icg

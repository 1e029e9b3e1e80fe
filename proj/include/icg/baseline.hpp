#pragma once

// Chat-completion baseline: ask a hosted LLM for per-word iconic gesture
// intensities, then score its answers with the same binarization and metrics
// as the model.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "icg/data.hpp"
#include "icg/metrics.hpp"

namespace icg {

inline constexpr const char* kPromptVersion = "icg-baseline-v1";

struct BaselineConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::milliseconds timeout{30'000};
  std::size_t max_retries = 3;
  std::chrono::milliseconds retry_backoff{500};
  double temperature = 0.0;
  std::size_t concurrency = 1;

  void validate() const;
};

std::string build_prompt(const UtteranceRecord& record);

// One chat-completion round trip.
struct ChatRequest {
  std::string model;
  std::string system;
  std::string user;
  double temperature = 0.0;
};

nlohmann::json to_request_json(const ChatRequest& req);
// Content of choices[0].message.content; throws TransportError otherwise.
std::string extract_content(const nlohmann::json& response);

class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, bool retryable_)
      : std::runtime_error(what), retryable(retryable_) {}
  bool retryable;
};

// Implementations must be safe to call from several threads when
// BaselineConfig::concurrency > 1.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  // Returns the assistant message text.
  virtual std::string complete(const ChatRequest& request) = 0;
};

// Live HTTP(S) transport posting OpenAI-style chat-completion JSON.
class HttpChatTransport : public ChatTransport {
 public:
  explicit HttpChatTransport(BaselineConfig config);
  std::string complete(const ChatRequest& request) override;

 private:
  BaselineConfig config_;
  std::string api_key_;
};

class ResponseParseError : public std::runtime_error {
 public:
  enum class Kind { no_array, wrong_length, non_numeric, out_of_range };
  ResponseParseError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  Kind kind;
};

std::string_view parse_error_name(ResponseParseError::Kind k);

struct BaselineResponse {
  std::vector<double> intensities;
  std::string raw;
};

// Takes the first all-numeric JSON array in `text`. Values must lie in
// [0, 1]; nothing is clamped.
BaselineResponse parse_response(const std::string& text, std::size_t expected_count);

struct BaselineRecordResult {
  std::string record_id;
  std::string prompt;
  std::string raw;
  std::optional<BaselineResponse> parsed;
  std::string error;  // empty on success
  std::size_t attempts = 0;
};

struct BaselineEvaluation {
  // Absent when too few records parsed to score.
  std::optional<ClassificationReport> classification;
  std::optional<RegressionReport> regression;
  std::vector<BaselineRecordResult> records;  // input order
  std::size_t succeeded = 0;
  std::size_t failed = 0;
};

// Prompts every record, retrying transport and parse failures up to
// max_retries, and scores the successfully parsed records. Failed records are
// kept in `records` with their error and left out of the metrics.
BaselineEvaluation evaluate_baseline(std::span<const UtteranceRecord> records,
                                     const BaselineConfig& config, ChatTransport& transport,
                                     Averaging averaging = Averaging::macro);

// One JSON object per record: {record_id, prompt_version, raw, parsed, error}.
void write_baseline_archive(const BaselineEvaluation& eval, const std::filesystem::path& path);

}  // namespace icg

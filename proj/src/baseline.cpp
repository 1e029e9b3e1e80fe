#include "icg/baseline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "icg/model.hpp"

namespace icg {

using nlohmann::json;

namespace {

constexpr const char* kSystemPrompt =
    "You annotate co-speech gestures for a social robot. Reply with a JSON array only.";

// Index one past the ']' matching the '[' at `open`, or npos.
std::size_t matching_bracket(const std::string& text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']' && --depth == 0) {
      return i + 1;
    }
  }
  return std::string::npos;
}

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint: missing scheme in " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

void BaselineConfig::validate() const {
  if (timeout.count() <= 0) throw ConfigError("timeout: must be > 0");
  if (endpoint.empty()) throw ConfigError("endpoint: must not be empty");
  if (model.empty()) throw ConfigError("model: must not be empty");
  if (concurrency < 1) throw ConfigError("concurrency: must be >= 1");
}

std::string build_prompt(const UtteranceRecord& record) {
  std::ostringstream os;
  os << "[" << kPromptVersion << "]\n"
     << "For each word of the utterance below, estimate how strongly an iconic (semantic) "
        "co-speech gesture should accompany that word, from 0 (no gesture) to 1 (strongest).\n"
     << "The speaker's emotion is: " << emotion_name(record.emotion) << "\n"
     << "WORD_COUNT: " << record.words.size() << "\n"
     << "Words:\n";
  for (std::size_t i = 0; i < record.words.size(); ++i) {
    os << i + 1 << ". " << record.words[i].text << "\n";
  }
  os << "Answer with ONLY a JSON array of exactly " << record.words.size()
     << " numbers in [0, 1], one per word, in the order given. The array length must equal "
        "WORD_COUNT.\n";
  return os.str();
}

json to_request_json(const ChatRequest& req) {
  return {{"model", req.model},
          {"temperature", req.temperature},
          {"messages",
           json::array({{{"role", "system"}, {"content", req.system}},
                        {{"role", "user"}, {"content", req.user}}})}};
}

std::string extract_content(const json& response) {
  try {
    return response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected chat-completion response: ") + e.what(), false);
  }
}

HttpChatTransport::HttpChatTransport(BaselineConfig config) : config_(std::move(config)) {
  config_.validate();
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  if (api_key_.empty()) {
    throw ConfigError("api_key_env: environment variable " + config_.api_key_env + " is unset");
  }
}

std::string HttpChatTransport::complete(const ChatRequest& request) {
  const SplitUrl url = split_url(config_.endpoint);
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  auto res = client.Post(url.path, headers, to_request_json(request).dump(), "application/json");
  if (!res) {
    throw TransportError("HTTP request failed: " + httplib::to_string(res.error()), true);
  }
  if (res->status != 200) {
    const bool retryable = res->status == 429 || res->status >= 500;
    throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body, retryable);
  }
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("response is not JSON: ") + e.what(), true);
  }
  return extract_content(body);
}

std::string_view parse_error_name(ResponseParseError::Kind k) {
  switch (k) {
    case ResponseParseError::Kind::no_array: return "no_array";
    case ResponseParseError::Kind::wrong_length: return "wrong_length";
    case ResponseParseError::Kind::non_numeric: return "non_numeric";
    case ResponseParseError::Kind::out_of_range: return "out_of_range";
  }
  return "unknown";
}

BaselineResponse parse_response(const std::string& text, std::size_t expected_count) {
  if (expected_count < 1) throw ValidationError("parse_response: expected_count must be >= 1");
  bool saw_array = false;
  for (std::size_t open = text.find('['); open != std::string::npos;
       open = text.find('[', open + 1)) {
    const std::size_t close = matching_bracket(text, open);
    if (close == std::string::npos) break;
    json arr = json::parse(text.begin() + static_cast<std::ptrdiff_t>(open),
                           text.begin() + static_cast<std::ptrdiff_t>(close), nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) continue;
    saw_array = true;
    const bool numeric = std::all_of(arr.begin(), arr.end(), [](const json& v) {
      return v.is_number();
    });
    if (!numeric || arr.empty()) {
      if (arr.empty()) {
        throw ResponseParseError(ResponseParseError::Kind::wrong_length,
                                 "expected " + std::to_string(expected_count) +
                                     " values, got an empty array");
      }
      continue;
    }
    if (arr.size() != expected_count) {
      throw ResponseParseError(ResponseParseError::Kind::wrong_length,
                               "expected " + std::to_string(expected_count) + " values, got " +
                                   std::to_string(arr.size()));
    }
    BaselineResponse out;
    out.raw = text;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const double v = arr[i].get<double>();
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ResponseParseError(ResponseParseError::Kind::out_of_range,
                                 "value " + std::to_string(v) + " at position " +
                                     std::to_string(i) + " outside [0, 1]");
      }
      out.intensities.push_back(v);
    }
    return out;
  }
  if (saw_array) {
    throw ResponseParseError(ResponseParseError::Kind::non_numeric,
                             "no array in the response holds only numbers");
  }
  throw ResponseParseError(ResponseParseError::Kind::no_array, "no JSON array in the response");
}

namespace {

BaselineRecordResult run_record(const UtteranceRecord& record, const BaselineConfig& config,
                                ChatTransport& transport) {
  BaselineRecordResult r;
  r.record_id = record.id;
  r.prompt = build_prompt(record);
  const ChatRequest req{config.model, kSystemPrompt, r.prompt, config.temperature};
  for (std::size_t attempt = 0; attempt <= config.max_retries; ++attempt) {
    ++r.attempts;
    if (attempt > 0 && config.retry_backoff.count() > 0) {
      std::this_thread::sleep_for(config.retry_backoff * (1LL << std::min<std::size_t>(attempt - 1, 6)));
    }
    try {
      r.raw = transport.complete(req);
      r.parsed = parse_response(r.raw, record.words.size());
      r.error.clear();
      return r;
    } catch (const TransportError& e) {
      r.error = std::string("transport: ") + e.what();
      if (!e.retryable) return r;
    } catch (const ResponseParseError& e) {
      r.error = std::string("parse/") + std::string(parse_error_name(e.kind)) + ": " + e.what();
    }
  }
  return r;
}

}  // namespace

BaselineEvaluation evaluate_baseline(std::span<const UtteranceRecord> records,
                                     const BaselineConfig& config, ChatTransport& transport,
                                     Averaging averaging) {
  config.validate();
  BaselineEvaluation eval;
  eval.records.resize(records.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      eval.records[i] = run_record(records[i], config, transport);
    }
  };
  const std::size_t n_workers = std::min(config.concurrency, std::max<std::size_t>(1, records.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  std::vector<int> preds, labels;
  std::vector<double> pred_i, true_i;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& res = eval.records[i];
    if (!res.parsed) {
      ++eval.failed;
      continue;
    }
    ++eval.succeeded;
    for (std::size_t w = 0; w < records[i].words.size(); ++w) {
      const double p = res.parsed->intensities[w];
      const double t = records[i].words[w].intensity;
      preds.push_back(binarize(p));
      labels.push_back(binarize(t));
      pred_i.push_back(p);
      true_i.push_back(t);
    }
  }
  if (!preds.empty()) eval.classification = classification_report(preds, labels, averaging);
  if (pred_i.size() >= 2) eval.regression = regression_report(pred_i, true_i);
  return eval;
}

void write_baseline_archive(const BaselineEvaluation& eval, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : eval.records) {
    json line = {{"record_id", r.record_id},
                 {"prompt_version", kPromptVersion},
                 {"raw", r.raw},
                 {"parsed", r.parsed ? json(r.parsed->intensities) : json(nullptr)},
                 {"error", r.error.empty() ? json(nullptr) : json(r.error)}};
    out << line.dump() << '\n';
  }
}

}  // namespace icg

#include <httplib.h>

#include <cstdlib>
#include <json.hpp>

#include "adlab/judge.hpp"
#include "adlab/log.hpp"

namespace adlab {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

std::optional<ParsedUrl> parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) return std::nullopt;
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") return std::nullopt;
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  p.origin = url.substr(0, path_start);
  p.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (p.origin.size() <= scheme_end + 3) return std::nullopt;
  return p;
}

bool is_level(double s) { return s == 0.0 || s == 0.5 || s == 1.0; }

}  // namespace

RemoteJudgeConfig RemoteJudgeConfig::from_env() {
  RemoteJudgeConfig c;
  if (const char* url = std::getenv("AD_JUDGE_URL")) c.url = url;
  if (const char* key = std::getenv("AD_JUDGE_API_KEY")) c.api_key = key;
  if (const char* ms = std::getenv("AD_JUDGE_TIMEOUT_MS")) {
    char* end = nullptr;
    const long v = std::strtol(ms, &end, 10);
    if (end == ms || *end != '\0' || v <= 0) {
      throw Error(Errc::InvalidConfig, std::string("AD_JUDGE_TIMEOUT_MS must be a positive integer, got '") + ms + "'");
    }
    c.timeout_ms = static_cast<int>(v);
  }
  return c;
}

RemoteJudge::RemoteJudge(RemoteJudgeConfig config)
    : config_(std::move(config)),
      in_flight_(std::make_unique<std::counting_semaphore<>>(std::max(1, config_.max_in_flight))) {
  if (!config_.url.empty() && !parse_url(config_.url)) {
    throw Error(Errc::InvalidConfig, "AD_JUDGE_URL is not an http(s) URL: " + config_.url);
  }
}

RemoteJudge::~RemoteJudge() = default;

std::optional<JudgeVerdict> RemoteJudge::request(std::string_view prediction, std::string_view reference,
                                                 std::string_view question) const {
  const auto url = parse_url(config_.url);
  if (!url) return std::nullopt;

  nlohmann::json body = {{"question", question}, {"reference", reference}, {"prediction", prediction}};

  httplib::Client client(url->origin);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  in_flight_->acquire();
  auto res = client.Post(url->path, headers, body.dump(), "application/json");
  in_flight_->release();

  if (!res) {
    log::debug("remote judge transport failure: " + httplib::to_string(res.error()));
    return std::nullopt;
  }
  if (res->status != 200) {
    log::debug("remote judge returned HTTP " + std::to_string(res->status));
    return std::nullopt;
  }
  const auto parsed = nlohmann::json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  const auto score = parsed.find("score");
  if (score == parsed.end() || !score->is_number()) return std::nullopt;
  const double s = score->get<double>();
  if (!is_level(s)) {
    log::debug("remote judge score out of range: " + std::to_string(s));
    return std::nullopt;
  }
  JudgeVerdict v{s, JudgeTier::Remote, std::nullopt};
  if (auto r = parsed.find("rationale"); r != parsed.end() && r->is_string()) v.rationale = r->get<std::string>();
  return v;
}

JudgeVerdict RemoteJudge::judge(std::string_view prediction, std::string_view reference,
                                std::string_view question) const {
  if (config_.url.empty() && !config_.fallback_enabled) {
    throw Error(Errc::ConfigMissing, "AD_JUDGE_URL is not set and fallback is disabled");
  }
  if (!config_.url.empty()) {
    if (auto verdict = request(prediction, reference, question)) {
      remote_count_.fetch_add(1);
      return *verdict;
    }
  }
  if (fallback_count_.fetch_add(1) == 0) {
    log::warn("remote judge unavailable; falling back to lexical similarity (further fallbacks logged at debug)");
  } else {
    log::debug("remote judge fallback");
  }
  return lexical_similarity_judge(prediction, reference);
}

JudgeVerdict remote_judge(const RemoteJudge& judge, std::string_view prediction, std::string_view reference,
                          std::string_view question) {
  return judge.judge(prediction, reference, question);
}

}  // namespace adlab

#include <cstdio>
#include <json.hpp>

#include "adlab/core.hpp"

namespace adlab {

using nlohmann::json;

std::string_view to_string(Difficulty d) noexcept { return d == Difficulty::Simple ? "simple" : "complex"; }

std::optional<Difficulty> parse_difficulty(std::string_view text) noexcept {
  if (text == "simple") return Difficulty::Simple;
  if (text == "complex") return Difficulty::Complex;
  return std::nullopt;
}

std::string sample_to_json(const Sample& s) {
  // ordered_json keeps the schema's field order in the file.
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["context"] = s.context;
  j["question"] = s.question;
  j["difficulty"] = to_string(s.difficulty);
  j["reference_answer"] = s.reference_answer;
  j["reasoning"] = s.reasoning ? json(*s.reasoning) : json(nullptr);
  j["candidates"] = s.candidates ? json::array({(*s.candidates)[0], (*s.candidates)[1]}) : json(nullptr);
  return j.dump();
}

namespace {

std::string required_string(const json& j, const char* field, std::size_t line) {
  auto it = j.find(field);
  if (it == j.end()) throw ParseError(line, "missing field", field);
  if (!it->is_string()) throw ParseError(line, "expected a string", field);
  return it->get<std::string>();
}

}  // namespace

Sample sample_from_json(std::string_view line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_number, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_number, "expected a JSON object");

  Sample s;
  s.id = required_string(j, "id", line_number);
  s.context = required_string(j, "context", line_number);
  s.question = required_string(j, "question", line_number);
  const auto difficulty = required_string(j, "difficulty", line_number);
  auto parsed = parse_difficulty(difficulty);
  if (!parsed) throw ParseError(line_number, "unknown difficulty '" + difficulty + "'", "difficulty");
  s.difficulty = *parsed;
  s.reference_answer = required_string(j, "reference_answer", line_number);

  if (auto it = j.find("reasoning"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError(line_number, "expected a string or null", "reasoning");
    s.reasoning = it->get<std::string>();
  }
  if (auto it = j.find("candidates"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_string() || !(*it)[1].is_string()) {
      throw ParseError(line_number, "expected an array of exactly 2 strings", "candidates");
    }
    std::array<std::string, 2> c = {(*it)[0].get<std::string>(), (*it)[1].get<std::string>()};
    if (c[0] != s.reference_answer && c[1] != s.reference_answer) {
      throw ParseError(line_number, "candidates do not contain reference_answer", "candidates");
    }
    s.candidates = std::move(c);
  }
  return s;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string checksum_string(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return std::string("fnv1a64:") + buf;
}

}  // namespace adlab

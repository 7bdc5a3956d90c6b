#pragma once

// Shared vocabulary: difficulty labels, samples, tokenization and prompt
// rendering.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adlab/error.hpp"

namespace adlab {

enum class Difficulty { Simple, Complex };

std::string_view to_string(Difficulty d) noexcept;
std::optional<Difficulty> parse_difficulty(std::string_view text) noexcept;

struct Sample {
  std::string id;
  std::string context;
  std::string question;
  Difficulty difficulty = Difficulty::Simple;
  std::string reference_answer;
  std::optional<std::string> reasoning;
  std::optional<std::array<std::string, 2>> candidates;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// One JSON object per line; field names match the dataset file schema.
std::string sample_to_json(const Sample& sample);
// Throws ParseError(line_number, ...) naming the offending field.
Sample sample_from_json(std::string_view line, std::size_t line_number);

// FNV-1a 64-bit; checksum_string formats it as "fnv1a64:<16 hex digits>".
std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string checksum_string(std::string_view bytes);

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

namespace tokens {
inline constexpr std::string_view kBos = "<|bos|>";
inline constexpr std::string_view kEos = "<|eos|>";
inline constexpr std::string_view kPad = "<|pad|>";
inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";
}  // namespace tokens

inline constexpr TokenId kBosId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr TokenId kPadId = 2;
inline constexpr std::size_t kMaxVocabSize = 512;

// Ordered token table. Indices 0..2 are BOS/EOS/PAD, followed by the four tag
// markers, the fixed pieces of the system prompt, and caller symbols.
class Vocab {
 public:
  // Builds [reserved, tags, template pieces, symbols...]; duplicates among
  // symbols are dropped keeping first occurrence.
  static Vocab with_symbols(const std::vector<std::string>& symbols);

  // Takes the token list verbatim; validates the reserved prefix, uniqueness
  // and the size bound. Used when restoring a vocabulary from a checkpoint.
  explicit Vocab(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view text) const;
  TokenId id(std::string_view text) const;  // throws UnknownSymbol
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  TokenSeq tokenize(std::string_view text) const;
  std::string detokenize(const TokenSeq& seq) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  // Candidate ids per leading byte, longest token first.
  std::array<std::vector<TokenId>, 256> by_first_byte_;
};

inline TokenSeq tokenize(std::string_view text, const Vocab& vocab) { return vocab.tokenize(text); }
inline std::string detokenize(const TokenSeq& seq, const Vocab& vocab) { return vocab.detokenize(seq); }

// The system prompt with its "[prompt]" slot.
extern const std::string_view kSystemTemplate;

// The constant pieces of kSystemTemplate, split around tag markers, as they
// appear in every vocabulary.
std::vector<std::string> template_pieces();

std::string render_prompt(const Sample& sample);

// Simple: "<answer>a</answer>"; Complex: "<think>r</think> <answer>a</answer>".
std::string render_sft_target(const Sample& sample);

}  // namespace adlab

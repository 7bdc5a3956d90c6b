#include <algorithm>
#include <unordered_set>

#include "adlab/core.hpp"

namespace adlab {

namespace {

std::vector<std::string> reserved_and_tags() {
  return {std::string(tokens::kBos),        std::string(tokens::kEos),        std::string(tokens::kPad),
          std::string(tokens::kThinkOpen),  std::string(tokens::kThinkClose), std::string(tokens::kAnswerOpen),
          std::string(tokens::kAnswerClose)};
}

}  // namespace

Vocab Vocab::with_symbols(const std::vector<std::string>& symbols) {
  std::vector<std::string> all = reserved_and_tags();
  for (auto& piece : template_pieces()) all.push_back(std::move(piece));
  for (const auto& s : symbols) all.push_back(s);

  std::unordered_set<std::string> seen;
  std::vector<std::string> unique;
  unique.reserve(all.size());
  for (auto& t : all) {
    if (seen.insert(t).second) unique.push_back(std::move(t));
  }
  return Vocab(std::move(unique));
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const auto expected = reserved_and_tags();
  if (tokens_.size() < expected.size() || !std::equal(expected.begin(), expected.end(), tokens_.begin())) {
    throw Error(Errc::InvalidConfig, "vocabulary must start with BOS, EOS, PAD and the four tag markers");
  }
  if (tokens_.size() > kMaxVocabSize) {
    throw Error(Errc::InvalidConfig, "vocabulary has " + std::to_string(tokens_.size()) + " tokens, limit is " +
                                         std::to_string(kMaxVocabSize));
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& t : tokens_) {
    if (t.empty()) throw Error(Errc::InvalidConfig, "empty vocabulary token");
    if (!seen.insert(t).second) throw Error(Errc::InvalidConfig, "duplicate vocabulary token '" + t + "'");
  }

  // Reserved tokens are never produced by tokenize().
  for (TokenId id = 3; id < static_cast<TokenId>(tokens_.size()); ++id) {
    const auto lead = static_cast<unsigned char>(tokens_[id].front());
    by_first_byte_[lead].push_back(id);
  }
  for (auto& bucket : by_first_byte_) {
    std::stable_sort(bucket.begin(), bucket.end(),
                     [this](TokenId a, TokenId b) { return tokens_[a].size() > tokens_[b].size(); });
  }
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error(Errc::IndexOutOfRange, "token id " + std::to_string(id));
  }
  return tokens_[id];
}

std::optional<TokenId> Vocab::find(std::string_view text) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] == text) return static_cast<TokenId>(i);
  }
  return std::nullopt;
}

TokenId Vocab::id(std::string_view text) const {
  if (auto found = find(text)) return *found;
  throw Error(Errc::UnknownSymbol, "'" + std::string(text) + "' is not a vocabulary token");
}

TokenSeq Vocab::tokenize(std::string_view text) const {
  TokenSeq out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto& bucket = by_first_byte_[static_cast<unsigned char>(text[pos])];
    bool matched = false;
    for (TokenId id : bucket) {
      const std::string& tok = tokens_[id];
      if (text.compare(pos, tok.size(), tok) == 0) {
        out.push_back(id);
        pos += tok.size();
        matched = true;
        break;
      }
    }
    if (!matched) throw UnknownSymbolError(pos);
  }
  return out;
}

std::string Vocab::detokenize(const TokenSeq& seq) const {
  std::string out;
  for (TokenId id : seq) {
    const std::string& tok = token(id);
    if (id == kBosId || id == kEosId || id == kPadId) continue;
    out += tok;
  }
  return out;
}

}  // namespace adlab

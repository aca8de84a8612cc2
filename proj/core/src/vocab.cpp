#include "edr/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "edr/errors.hpp"

namespace edr {

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.emplace_back(line.substr(start, i - start));
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

namespace {
const char* kReservedNames[] = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary() {
  for (const char* name : kReservedNames) add(name);
}

void Vocabulary::add(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& lines,
                             std::size_t max_size) {
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& line : lines)
    for (const auto& tok : line) ++freq[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [tok, n] : ranked) {
    if (v.size() >= max_size) break;
    v.add(tok);
  }
  return v;
}

Vocabulary Vocabulary::build_from_file(const std::filesystem::path& corpus_file,
                                       std::size_t max_size) {
  std::ifstream in(corpus_file);
  if (!in) throw data_error("cannot read corpus file " + corpus_file.string());
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(tokenize(line));
  if (lines.empty()) throw data_error("empty corpus " + corpus_file.string());
  return build(lines, max_size);
}

Vocabulary Vocabulary::read(const std::filesystem::path& vocab_file) {
  std::ifstream in(vocab_file);
  if (!in) throw data_error("cannot read vocabulary file " + vocab_file.string());
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (lineno < kReserved) {
      if (line != kReservedNames[lineno])
        throw data_error("vocabulary file " + vocab_file.string() + " line " +
                         std::to_string(lineno + 1) + ": expected reserved token " +
                         kReservedNames[lineno]);
    } else {
      if (line.empty())
        throw data_error("vocabulary file " + vocab_file.string() + " line " +
                         std::to_string(lineno + 1) + ": empty token");
      if (v.index_.count(line))
        throw data_error("vocabulary file " + vocab_file.string() + " line " +
                         std::to_string(lineno + 1) + ": duplicate token " + line);
      v.add(line);
    }
    ++lineno;
  }
  if (lineno < kReserved) throw data_error("vocabulary file too short: " + vocab_file.string());
  return v;
}

void Vocabulary::write(const std::filesystem::path& vocab_file) const {
  std::ofstream out(vocab_file);
  if (!out) throw data_error("cannot write vocabulary file " + vocab_file.string());
  for (const auto& tok : tokens_) out << tok << '\n';
}

int Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= static_cast<int>(tokens_.size()))
    throw data_error("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens,
                                    bool append_eos) const {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const auto& tok : tokens) ids.push_back(id_of(tok));
  if (append_eos) ids.push_back(kEos);
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids,
                                            bool strip_eos) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (strip_eos && id == kEos) continue;
    out.push_back(token(id));
  }
  return out;
}

}  // namespace edr

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace edr {

std::vector<std::string> tokenize(std::string_view line);
std::string detokenize(const std::vector<std::string>& tokens);

// Token <-> id map with the four reserved entries at fixed ids. Content
// tokens are ordered by descending corpus frequency, ties lexicographic.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();

  // max_size caps the total size, reserved entries included.
  static Vocabulary build(const std::vector<std::vector<std::string>>& lines,
                          std::size_t max_size);
  static Vocabulary build_from_file(const std::filesystem::path& corpus_file,
                                    std::size_t max_size);

  static Vocabulary read(const std::filesystem::path& vocab_file);
  void write(const std::filesystem::path& vocab_file) const;

  std::size_t size() const { return tokens_.size(); }
  int id_of(std::string_view token) const;  // kUnk when absent
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& tokens,
                          bool append_eos = true) const;
  std::vector<std::string> decode(const std::vector<int>& ids, bool strip_eos = true) const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace edr

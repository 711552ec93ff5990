#include "fgprobe/util.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "fgprobe/errors.hpp"

namespace fgprobe {

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool icontains(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

int word_count(std::string_view s) {
  int n = 0;
  bool in_word = false;
  for (char c : s) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

bool starts_with_word(std::string_view s, std::string_view word) {
  s = trim(s);
  if (s.size() < word.size() || s.substr(0, word.size()) != word) return false;
  return s.size() == word.size() || !std::isalpha(static_cast<unsigned char>(s[word.size()]));
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* to_string(BenchmarkErrc code) {
  switch (code) {
    case BenchmarkErrc::kMissingFile: return "missing-file";
    case BenchmarkErrc::kMalformed: return "malformed-document";
    case BenchmarkErrc::kDuplicateClassId: return "duplicate-class-id";
    case BenchmarkErrc::kNonContiguousClassId: return "non-contiguous-class-id";
    case BenchmarkErrc::kEmptyDescription: return "empty-description";
  }
  return "unknown";
}

const char* to_string(BackendErrc code) {
  switch (code) {
    case BackendErrc::kTransport: return "transport-failure";
    case BackendErrc::kRefusal: return "remote-refusal";
    case BackendErrc::kCapability: return "capability";
    case BackendErrc::kContextOverflow: return "context-overflow";
    case BackendErrc::kInvalidRequest: return "invalid-request";
  }
  return "unknown";
}

const char* to_string(CurationErrc code) {
  switch (code) {
    case CurationErrc::kNoImages: return "no-images";
    case CurationErrc::kEmptyCaption: return "empty-caption";
    case CurationErrc::kPersistentLeakage: return "persistent-name-leakage";
    case CurationErrc::kIncompletePair: return "incomplete-pair";
  }
  return "unknown";
}

}  // namespace fgprobe

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace fgprobe {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool icontains(std::string_view haystack, std::string_view needle);
int word_count(std::string_view s);
bool starts_with_word(std::string_view s, std::string_view word);

// 64-bit FNV-1a; stable across platforms, used to derive per-case seeds.
std::uint64_t fnv1a64(std::string_view s);

// splitmix64 finalizer over (seed, salt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

std::string read_text_file(const std::string& path);

}  // namespace fgprobe

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace echo {

// Byte-level tokenizer: ids 0..255 are raw bytes, BOS=256, EOS=257.
inline constexpr int kBosId = 256;
inline constexpr int kEosId = 257;
inline constexpr int kByteVocab = 258;

std::vector<int> tokenize(std::string_view bytes);

// Inverse of tokenize: keeps byte ids, drops BOS/EOS.
std::string detokenize(std::span<const int> ids);

}  // namespace echo

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace echo {

// Corpora are plain bytes mapped to ids 0..255; sequence windows come from
// TokenStream. BOS/EOS are prompt markers and never appear in corpora.
std::vector<int> corpus_from_bytes(std::string_view bytes);

// Reads a whole file; DataError on a missing or empty file.
std::vector<int> load_corpus_file(const std::string& path);

// Synthetic corpus with strong first-order structure: each byte follows its
// predecessor through a fixed affine map with probability 0.9, otherwise a
// uniform random byte. Deterministic in the seed.
std::string make_bigram_bytes(std::size_t n_bytes, std::uint64_t seed);

}  // namespace echo

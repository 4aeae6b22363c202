#include "echo/corpus.hpp"

#include "echo/errors.hpp"
#include "echo/rng.hpp"

#include <fstream>
#include <sstream>

namespace echo {

std::vector<int> corpus_from_bytes(std::string_view bytes) {
    std::vector<int> ids;
    ids.reserve(bytes.size());
    for (unsigned char c : bytes) ids.push_back(static_cast<int>(c));
    return ids;
}

std::vector<int> load_corpus_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    if (bytes.empty()) throw DataError("corpus file '" + path + "' is empty");
    return corpus_from_bytes(bytes);
}

std::string make_bigram_bytes(std::size_t n_bytes, std::uint64_t seed) {
    Rng rng(seed);
    std::string out;
    out.reserve(n_bytes);
    unsigned char prev = static_cast<unsigned char>(rng.uniform_int(256));
    for (std::size_t i = 0; i < n_bytes; ++i) {
        unsigned char next;
        if (rng.uniform() < 0.9) {
            next = static_cast<unsigned char>((static_cast<int>(prev) * 17 + 31) & 0xFF);
        } else {
            next = static_cast<unsigned char>(rng.uniform_int(256));
        }
        out.push_back(static_cast<char>(next));
        prev = next;
    }
    return out;
}

}  // namespace echo

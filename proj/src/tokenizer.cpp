#include "echo/tokenizer.hpp"

namespace echo {

std::vector<int> tokenize(std::string_view bytes) {
    std::vector<int> ids;
    ids.reserve(bytes.size() + 2);
    ids.push_back(kBosId);
    for (unsigned char c : bytes) ids.push_back(static_cast<int>(c));
    ids.push_back(kEosId);
    return ids;
}

std::string detokenize(std::span<const int> ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
    }
    return out;
}

}  // namespace echo

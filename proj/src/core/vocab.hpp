#pragma once

#include <map>
#include <string>
#include <vector>

#include "common.hpp"

namespace ipa {

// Fixed caption vocabulary covering the scene grammar plus the four special
// tokens. PAD is id 0 by contract.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kMaxLen = 16;

    static const Vocabulary& standard();

    int id_of(const std::string& word) const;
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }
    int max_len() const { return kMaxLen; }

private:
    explicit Vocabulary(std::vector<std::string> tokens);
    std::vector<std::string> tokens_;
    std::map<std::string, int> ids_;
};

// BOS + word ids + EOS, padded to max_len. Unknown words map to UNK;
// captions that do not fit are an error.
std::vector<int> tokenize(const std::string& caption, const Vocabulary& vocab);

// Inverse of tokenize over the grammar: drops specials, joins with spaces.
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

}  // namespace ipa

#include "vocab.hpp"

#include <sstream>

namespace ipa {

namespace {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream is(text);
    std::string w;
    while (is >> w) {
        words.push_back(w);
    }
    return words;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (size_t i = 0; i < tokens_.size(); ++i) {
        ids_[tokens_[i]] = static_cast<int>(i);
    }
    require(ids_.size() == tokens_.size(), ErrCode::BadArg, "vocabulary tokens must be unique");
    require(tokens_.size() <= 64, ErrCode::BadArg, "vocabulary exceeds 64 tokens");
}

const Vocabulary& Vocabulary::standard() {
    static const Vocabulary vocab({
        "<pad>", "<bos>", "<eos>", "<unk>",
        "a", "and", "at", "on",
        "small", "large",
        "red", "green", "blue", "yellow", "cyan", "magenta", "orange", "purple",
        "circle", "square", "triangle",
        "top", "middle", "bottom", "left", "center", "right",
        "gray", "black", "tan", "navy",
    });
    return vocab;
}

int Vocabulary::id_of(const std::string& word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    require(id >= 0 && id < size(), ErrCode::BadArg, "token id out of range");
    return tokens_[id];
}

std::vector<int> tokenize(const std::string& caption, const Vocabulary& vocab) {
    const std::vector<std::string> words = split_words(caption);
    require(static_cast<int>(words.size()) + 2 <= vocab.max_len(), ErrCode::TooLong,
            "caption does not fit in " + std::to_string(vocab.max_len()) + " tokens: " + caption);
    std::vector<int> ids;
    ids.reserve(vocab.max_len());
    ids.push_back(Vocabulary::kBos);
    for (const std::string& w : words) {
        ids.push_back(vocab.id_of(w));
    }
    ids.push_back(Vocabulary::kEos);
    ids.resize(vocab.max_len(), Vocabulary::kPad);
    return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::string out;
    for (int id : ids) {
        if (id == Vocabulary::kBos || id == Vocabulary::kPad) {
            continue;
        }
        if (id == Vocabulary::kEos) {
            break;
        }
        if (!out.empty()) {
            out += ' ';
        }
        out += vocab.token(id);
    }
    return out;
}

}  // namespace ipa

// Closed word-level vocabulary for the synthetic world's templated instructions.
#pragma once

#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "moto/frame.hpp"

namespace moto {

// id 0 is reserved for padding; real words start at 1.
class Vocab {
public:
    Vocab() {
        static const char* words[] = {"move", "the",   "red",  "block", "up",   "down",
                                      "left", "right", "put",  "green", "blue", "in",
                                      "goal", "region"};
        for (const char* w : words) add(w);
    }

    int id(const std::string& word) const {
        auto it = ids_.find(word);
        if (it == ids_.end()) throw DataError("word not in vocabulary: " + word);
        return it->second;
    }

    const std::string& word(int id) const {
        if (id <= 0 || id > int(words_.size()))
            throw DataError("token id out of vocabulary: " + std::to_string(id));
        return words_[std::size_t(id) - 1];
    }

    int size() const { return int(words_.size()) + 1; }  // +1 for pad

    // Whitespace split, pad/truncate to max_len, id 0 for padding.
    std::vector<int> encode(const std::string& text, int max_len) const {
        std::vector<int> out;
        std::istringstream ss(text);
        std::string w;
        while (ss >> w && int(out.size()) < max_len) out.push_back(id(w));
        while (int(out.size()) < max_len) out.push_back(0);
        return out;
    }

    Instruction make_instruction(const std::string& text, int max_len) const {
        Instruction instr;
        instr.text = text;
        instr.token_ids = encode(text, max_len);
        return instr;
    }

private:
    void add(const std::string& w) {
        ids_[w] = int(words_.size()) + 1;
        words_.push_back(w);
    }
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> ids_;
};

}  // namespace moto

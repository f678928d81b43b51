#include "patfig/tokenizer.hpp"

#include <cctype>
#include <limits>

#include <nlohmann/json.hpp>

#include "patfig/util.hpp"

namespace patfig {

namespace {

inline bool is_space_byte(unsigned char c) { return std::isspace(c) != 0; }

inline std::uint64_t pair_key(int left, int right) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) |
           static_cast<std::uint32_t>(right);
}

}  // namespace

BpeTokenizer BpeTokenizer::from_file(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("vocabulary file " + path + " is not valid JSON: " + e.what());
    }
    if (doc.value("type", "") != "byte-bpe") {
        throw Error("vocabulary file " + path + ": expected type \"byte-bpe\"");
    }
    std::vector<std::pair<std::string, std::string>> merges;
    for (const auto& m : doc.at("merges")) {
        if (!m.is_array() || m.size() != 2) {
            throw Error("vocabulary file " + path + ": each merge must be a [left, right] pair");
        }
        merges.emplace_back(m[0].get<std::string>(), m[1].get<std::string>());
    }
    return from_merges(merges);
}

BpeTokenizer BpeTokenizer::from_merges(
    const std::vector<std::pair<std::string, std::string>>& merges) {
    BpeTokenizer tok;
    tok.id_to_text_.reserve(256 + merges.size());
    for (int b = 0; b < 256; ++b) {
        std::string s(1, static_cast<char>(b));
        tok.id_to_text_.push_back(s);
        tok.text_to_id_[s] = b;
    }
    int rank = 0;
    for (const auto& [left, right] : merges) {
        auto li = tok.text_to_id_.find(left);
        auto ri = tok.text_to_id_.find(right);
        if (li == tok.text_to_id_.end() || ri == tok.text_to_id_.end()) {
            throw Error("merge " + std::to_string(rank) + " (\"" + left + "\", \"" + right +
                        "\") refers to an unknown token");
        }
        std::string result = left + right;
        if (tok.text_to_id_.count(result)) {
            throw Error("merge " + std::to_string(rank) + " produces duplicate token \"" +
                        result + "\"");
        }
        int id = 256 + rank;
        tok.merge_rank_[pair_key(li->second, ri->second)] = rank;
        tok.id_to_text_.push_back(result);
        tok.text_to_id_[result] = id;
        ++rank;
    }
    return tok;
}

std::vector<std::string> BpeTokenizer::split_pieces(const std::string& text) {
    std::vector<std::string> pieces;
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        if (!is_space_byte(text[i])) {
            std::size_t j = i;
            while (j < n && !is_space_byte(text[j])) ++j;
            pieces.push_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        std::size_t j = i;
        while (j < n && is_space_byte(text[j])) ++j;
        if (j < n && text[j - 1] == ' ') {
            // the last space attaches to the following word
            if (j - 1 > i) pieces.push_back(text.substr(i, j - 1 - i));
            std::size_t k = j;
            while (k < n && !is_space_byte(text[k])) ++k;
            pieces.push_back(text.substr(j - 1, k - (j - 1)));
            i = k;
        } else {
            pieces.push_back(text.substr(i, j - i));
            i = j;
        }
    }
    return pieces;
}

void BpeTokenizer::encode_piece(const std::string& piece, std::vector<int>& out) const {
    std::vector<int> symbols;
    symbols.reserve(piece.size());
    for (unsigned char c : piece) symbols.push_back(c);

    while (symbols.size() >= 2) {
        int best_rank = std::numeric_limits<int>::max();
        for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
            auto it = merge_rank_.find(pair_key(symbols[k], symbols[k + 1]));
            if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
        }
        if (best_rank == std::numeric_limits<int>::max()) break;
        const int merged_id = 256 + best_rank;
        // merge every occurrence of the best pair, left to right
        std::vector<int> next;
        next.reserve(symbols.size());
        std::size_t k = 0;
        while (k < symbols.size()) {
            if (k + 1 < symbols.size()) {
                auto it = merge_rank_.find(pair_key(symbols[k], symbols[k + 1]));
                if (it != merge_rank_.end() && it->second == best_rank) {
                    next.push_back(merged_id);
                    k += 2;
                    continue;
                }
            }
            next.push_back(symbols[k]);
            ++k;
        }
        symbols = std::move(next);
    }
    out.insert(out.end(), symbols.begin(), symbols.end());
}

std::vector<int> BpeTokenizer::encode(const std::string& text) const {
    std::vector<int> out;
    for (const auto& piece : split_pieces(text)) encode_piece(piece, out);
    return out;
}

std::string BpeTokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= static_cast<int>(id_to_text_.size())) {
            throw Error("token id " + std::to_string(id) + " outside vocabulary");
        }
        out += id_to_text_[id];
    }
    return out;
}

std::size_t BpeTokenizer::count_tokens(const std::string& text) const {
    return encode(text).size();
}

const std::string& BpeTokenizer::token_text(int id) const {
    if (id < 0 || id >= static_cast<int>(id_to_text_.size())) {
        throw Error("token id " + std::to_string(id) + " outside vocabulary");
    }
    return id_to_text_[id];
}

}  // namespace patfig

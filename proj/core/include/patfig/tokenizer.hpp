#ifndef PATFIG_TOKENIZER_HPP
#define PATFIG_TOKENIZER_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace patfig {

/// Byte-level byte-pair tokenizer. The base alphabet is the 256 single bytes
/// (ids 0-255); each merge rule r in the vocabulary file contributes the token
/// left+right with id 256+r. Decoding concatenates token byte strings, so
/// decode(encode(x)) == x for every input.
class BpeTokenizer {
public:
    /// Loads a vocabulary file: JSON {"type": "byte-bpe", "merges": [[l, r], ...]}.
    /// Every merge operand must be a single byte or the result of an earlier
    /// merge; duplicate results are rejected.
    static BpeTokenizer from_file(const std::string& path);
    static BpeTokenizer from_merges(const std::vector<std::pair<std::string, std::string>>& merges);

    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;
    std::size_t count_tokens(const std::string& text) const;

    const std::string& token_text(int id) const;
    int vocab_size() const { return static_cast<int>(id_to_text_.size()); }

    /// Pre-tokenization: splits text into pieces before byte-pair merging.
    /// A single space attaches to the following word; other whitespace runs
    /// form their own pieces. Concatenating the pieces restores the input.
    static std::vector<std::string> split_pieces(const std::string& text);

private:
    BpeTokenizer() = default;

    // (left id, right id) -> rank
    std::unordered_map<std::uint64_t, int> merge_rank_;
    std::vector<std::string> id_to_text_;
    std::unordered_map<std::string, int> text_to_id_;

    void encode_piece(const std::string& piece, std::vector<int>& out) const;
};

}  // namespace patfig

#endif

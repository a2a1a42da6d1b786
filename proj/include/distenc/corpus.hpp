#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "distenc/tape.hpp"

namespace distenc {

// Word-level tokenizer: ASCII letters are lowercased, ASCII punctuation and
// whitespace delimit (and are dropped), bytes >= 0x80 pass through so UTF-8
// words survive intact.
std::vector<std::string> tokenize(std::string_view text);
std::string detokenize(std::span<const std::string> tokens);

class Vocabulary {
  public:
    static constexpr int kBos = 0;   // <s>
    static constexpr int kPad = 1;   // <pad>
    static constexpr int kMask = 2;  // <mask>
    static constexpr int kUnk = 3;   // <unk>
    static constexpr int kReserved = 4;

    // Frequency-ranked build (ties broken lexicographically), keeping at most
    // max_size - 4 corpus tokens after the reserved ids.
    static Vocabulary build(const std::string& corpus_text, int max_size);
    // Reconstruct from an id-ordered token list (vocabulary file / checkpoint).
    static Vocabulary from_tokens(std::vector<std::string> id_to_token);

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int id(const std::string& token) const;  // kUnk when absent
    const std::string& token(int id) const;
    const std::vector<std::string>& tokens() const { return id_to_token_; }
    std::vector<int> encode(std::span<const std::string> words) const;

  private:
    Vocabulary() = default;
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// One batch of sequences. Every row is padded to the same width with <pad>;
// lengths give the real extent (position 0 is always <s>). masks record, per
// row, which positions were rewritten by apply_masking and the original ids.
struct MaskedBatch {
    std::vector<std::vector<int>> rows;
    std::vector<int> lengths;
    std::vector<std::vector<MaskEntry>> masks;

    int total_tokens() const;
    int total_masked() const;
    std::span<const int> sequence(int k) const;  // row k trimmed to its length
};

// Tokenize one document per line, prepend <s>, truncate to n_max, shuffle all
// sequences with the seed, and group into padded batches. Masks start empty.
std::vector<MaskedBatch> make_batches(const std::string& corpus_text, const Vocabulary& vocab,
                                      int batch_size, int n_max, std::uint64_t seed);

// Independently select each eligible position (never <s>, never padding) with
// probability rate; selected positions become <mask> 80% of the time, a random
// non-reserved id from [4, vocab_size) 10%, and stay unchanged 10%. Original
// ids are recorded. A batch where nothing was selected comes back with
// total_masked() == 0 so the caller can resample.
MaskedBatch apply_masking(const MaskedBatch& batch, float rate, std::uint64_t seed,
                          int vocab_size);

}  // namespace distenc

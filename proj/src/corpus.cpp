#include "distenc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "distenc/errors.hpp"
#include "distenc/rng.hpp"

namespace distenc {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (c < 0x80 && (std::isspace(c) || std::ispunct(c))) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
            continue;
        }
        cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string detokenize(std::span<const std::string> tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

namespace {
const char* kReservedNames[] = {"<s>", "<pad>", "<mask>", "<unk>"};
}

Vocabulary Vocabulary::build(const std::string& corpus_text, int max_size) {
    if (max_size < kReserved + 1)
        throw ConfigError("vocabulary max_size must be at least " + std::to_string(kReserved + 1));
    std::map<std::string, std::int64_t> freq;  // ordered map fixes the lexicographic tiebreak
    for (const std::string& tok : tokenize(corpus_text)) ++freq[tok];
    if (freq.empty()) throw ValueError("cannot build a vocabulary from an empty corpus");

    std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocabulary v;
    for (const char* name : kReservedNames) v.id_to_token_.emplace_back(name);
    const size_t keep = static_cast<size_t>(max_size - kReserved);
    for (size_t i = 0; i < ranked.size() && i < keep; ++i) v.id_to_token_.push_back(ranked[i].first);
    for (size_t i = 0; i < v.id_to_token_.size(); ++i)
        v.token_to_id_[v.id_to_token_[i]] = static_cast<int>(i);
    return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
    if (id_to_token.size() < kReserved)
        throw ValueError("vocabulary must contain the " + std::to_string(kReserved) +
                         " reserved tokens");
    for (int i = 0; i < kReserved; ++i)
        if (id_to_token[i] != kReservedNames[i])
            throw ValueError("vocabulary id " + std::to_string(i) + " must be " +
                             kReservedNames[i] + ", got " + id_to_token[i]);
    Vocabulary v;
    v.id_to_token_ = std::move(id_to_token);
    for (size_t i = 0; i < v.id_to_token_.size(); ++i) {
        auto [it, fresh] = v.token_to_id_.emplace(v.id_to_token_[i], static_cast<int>(i));
        if (!fresh) throw ValueError("duplicate vocabulary token: " + v.id_to_token_[i]);
    }
    return v;
}

int Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size())
        throw ValueError("vocabulary id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const std::string& w : words) ids.push_back(id(w));
    return ids;
}

int MaskedBatch::total_tokens() const {
    int n = 0;
    for (int l : lengths) n += l;
    return n;
}

int MaskedBatch::total_masked() const {
    int n = 0;
    for (const auto& m : masks) n += static_cast<int>(m.size());
    return n;
}

std::span<const int> MaskedBatch::sequence(int k) const {
    return std::span<const int>(rows[static_cast<size_t>(k)].data(),
                                static_cast<size_t>(lengths[static_cast<size_t>(k)]));
}

std::vector<MaskedBatch> make_batches(const std::string& corpus_text, const Vocabulary& vocab,
                                      int batch_size, int n_max, std::uint64_t seed) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (n_max < 2) throw ConfigError("n_max must leave room for <s> plus one token");

    std::vector<std::vector<int>> sequences;
    std::istringstream lines(corpus_text);
    std::string line;
    while (std::getline(lines, line)) {
        std::vector<std::string> words = tokenize(line);
        if (words.empty()) continue;
        std::vector<int> ids;
        ids.reserve(std::min(words.size() + 1, static_cast<size_t>(n_max)));
        ids.push_back(Vocabulary::kBos);
        for (const std::string& w : words) {
            if (static_cast<int>(ids.size()) == n_max) break;
            ids.push_back(vocab.id(w));
        }
        sequences.push_back(std::move(ids));
    }
    if (sequences.empty()) throw ValueError("corpus contains no usable lines");

    SplitMix64 rng(seed);
    for (size_t i = sequences.size(); i > 1; --i)
        std::swap(sequences[i - 1], sequences[rng.next_below(i)]);

    std::vector<MaskedBatch> batches;
    for (size_t begin = 0; begin < sequences.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(begin + static_cast<size_t>(batch_size), sequences.size());
        MaskedBatch b;
        for (size_t k = begin; k < end; ++k) {
            b.lengths.push_back(static_cast<int>(sequences[k].size()));
            sequences[k].resize(static_cast<size_t>(n_max), Vocabulary::kPad);
            b.rows.push_back(std::move(sequences[k]));
        }
        b.masks.resize(b.rows.size());
        batches.push_back(std::move(b));
    }
    return batches;
}

MaskedBatch apply_masking(const MaskedBatch& batch, float rate, std::uint64_t seed,
                          int vocab_size) {
    if (rate < 0.f || rate >= 1.f) throw ConfigError("mask rate must be in [0, 1)");
    if (vocab_size <= Vocabulary::kReserved)
        throw ConfigError("vocab_size must exceed the reserved ids");
    if (batch.rows.size() != batch.lengths.size())
        throw ValueError("batch rows and lengths disagree");

    MaskedBatch out = batch;
    for (auto& m : out.masks) m.clear();
    SplitMix64 rng(seed);
    for (size_t k = 0; k < out.rows.size(); ++k) {
        std::vector<int>& row = out.rows[k];
        const int len = out.lengths[k];
        for (int i = 1; i < len; ++i) {  // position 0 (<s>) is never eligible
            if (rng.next_unit() >= rate) continue;
            out.masks[k].push_back(MaskEntry{i, row[static_cast<size_t>(i)]});
            const double u = rng.next_unit();
            if (u < 0.8) {
                row[static_cast<size_t>(i)] = Vocabulary::kMask;
            } else if (u < 0.9) {
                row[static_cast<size_t>(i)] =
                    Vocabulary::kReserved +
                    static_cast<int>(rng.next_below(
                        static_cast<std::uint64_t>(vocab_size - Vocabulary::kReserved)));
            }  // else: keep the original token
        }
    }
    return out;
}

}  // namespace distenc

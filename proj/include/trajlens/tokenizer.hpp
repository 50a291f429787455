#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trajlens/error.hpp"

namespace trajlens {

/**
 * Subword vocabulary. Ids are dense in [0, size()); the five special tokens
 * always occupy ids 0..4. Word-internal pieces carry a "##" prefix.
 */
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;
    static constexpr int kMask = 4;
    static constexpr int kNumSpecials = 5;
    static constexpr std::string_view kContinuation = "##";

    Vocabulary() {
        for (const char* s : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"}) {
            add(s);
        }
    }

    /// Adds a token if absent and returns its id.
    int add(const std::string& token) {
        const auto it = ids_.find(token);
        if (it != ids_.end()) {
            return it->second;
        }
        const int id = static_cast<int>(tokens_.size());
        tokens_.push_back(token);
        ids_.emplace(token, id);
        return id;
    }

    std::optional<int> find(const std::string& token) const {
        const auto it = ids_.find(token);
        if (it == ids_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    bool contains(const std::string& token) const { return ids_.count(token) != 0; }

    const std::string& token(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
            throw DataError("unknown token id " + std::to_string(id));
        }
        return tokens_[static_cast<std::size_t>(id)];
    }

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

    /// One token per line; the id is the zero-based line number.
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw DataError("cannot write " + path);
        }
        for (const auto& t : tokens_) {
            out << t << '\n';
        }
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw DataError("cannot open vocabulary " + path);
        }
        Vocabulary vocab;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            if (line_no < kNumSpecials) {
                if (line != vocab.tokens_[line_no]) {
                    throw DataError(path + ": line " + std::to_string(line_no + 1) + " must be " + vocab.tokens_[line_no]);
                }
            } else if (vocab.add(line) != static_cast<int>(line_no)) {
                throw DataError(path + ": duplicate token '" + line + "'");
            }
            ++line_no;
        }
        if (line_no < kNumSpecials) {
            throw DataError(path + ": truncated vocabulary");
        }
        return vocab;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

/// Encoded sequence: CLS, pieces, SEP, then PAD up to the fixed length.
struct TokenSequence {
    std::vector<int> ids;
    std::size_t length = 0; ///< tokens before padding

    std::span<const int> content() const { return {ids.data(), length}; }
};

/// Lowercases, splits on whitespace and isolates each punctuation character.
inline std::vector<std::string> pretokenize(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    };
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            flush();
        } else if (std::ispunct(c)) {
            flush();
            words.emplace_back(1, raw);
        } else {
            current += static_cast<char>(std::tolower(c));
        }
    }
    flush();
    return words;
}

/// Greedy longest-match-first segmentation of one word; an unsegmentable word becomes a single UNK.
inline std::vector<int> segment_word(const std::string& word, const Vocabulary& vocab) {
    std::vector<int> pieces;
    std::size_t start = 0;
    std::string candidate;
    while (start < word.size()) {
        std::optional<int> found;
        std::size_t end = word.size();
        for (; end > start; --end) {
            candidate.assign(start > 0 ? Vocabulary::kContinuation : std::string_view{});
            candidate.append(word, start, end - start);
            found = vocab.find(candidate);
            if (found) {
                break;
            }
        }
        if (!found) {
            return {Vocabulary::kUnk};
        }
        pieces.push_back(*found);
        start = end;
    }
    return pieces;
}

/// Piece ids of a description list joined by single spaces (no specials).
inline std::vector<int> encode_pieces(std::span<const std::string> descriptions, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (const auto& description : descriptions) {
        for (const auto& word : pretokenize(description)) {
            const auto pieces = segment_word(word, vocab);
            ids.insert(ids.end(), pieces.begin(), pieces.end());
        }
    }
    return ids;
}

/// Number of tokens a description list occupies, including CLS and SEP, before truncation.
inline std::size_t token_count(std::span<const std::string> descriptions, const Vocabulary& vocab) {
    return encode_pieces(descriptions, vocab).size() + 2;
}

inline TokenSequence encode(std::span<const std::string> descriptions, const Vocabulary& vocab, std::size_t max_len = 64) {
    if (max_len < 2) {
        throw ConfigError("max_len must leave room for CLS and SEP");
    }
    auto pieces = encode_pieces(descriptions, vocab);
    if (pieces.size() > max_len - 2) {
        pieces.resize(max_len - 2);
    }
    TokenSequence seq;
    seq.ids.reserve(max_len);
    seq.ids.push_back(Vocabulary::kCls);
    seq.ids.insert(seq.ids.end(), pieces.begin(), pieces.end());
    seq.ids.push_back(Vocabulary::kSep);
    seq.length = seq.ids.size();
    seq.ids.resize(max_len, Vocabulary::kPad);
    return seq;
}

inline TokenSequence encode(const std::string& description, const Vocabulary& vocab, std::size_t max_len = 64) {
    return encode(std::span<const std::string>(&description, 1), vocab, max_len);
}

/// Joins pieces back into space-separated words. Specials are dropped.
inline std::string decode(std::span<const int> ids, const Vocabulary& vocab) {
    std::string text;
    for (int id : ids) {
        const std::string& tok = vocab.token(id);
        if (Vocabulary::is_special(id) && id != Vocabulary::kUnk) {
            continue;
        }
        if (tok.starts_with(Vocabulary::kContinuation) && !text.empty()) {
            text.append(tok, Vocabulary::kContinuation.size());
        } else {
            if (!text.empty()) {
                text += ' ';
            }
            text += tok;
        }
    }
    return text;
}

inline std::string decode(const TokenSequence& seq, const Vocabulary& vocab) { return decode(std::span<const int>(seq.ids), vocab); }

struct TrainResult {
    Vocabulary vocab;
    bool reached_target = true;
    std::size_t merges = 0;
};

/**
 * Trains a WordPiece vocabulary by repeated pair merging.
 *
 * Words are pretokenized and lowercased, then split into characters. Each
 * round merges the adjacent pair with the highest
 * count(ab) / (count(a) * count(b)); ties go to the lexicographically
 * smallest (a, b). Training stops at `target_size` tokens or when every
 * word is a single piece.
 */
inline TrainResult train_vocab(std::span<const std::string> corpus, std::size_t target_size = 2025) {
    std::map<std::string, std::uint64_t> word_counts;
    for (const auto& text : corpus) {
        for (auto& word : pretokenize(text)) {
            ++word_counts[word];
        }
    }
    if (word_counts.empty()) {
        throw DataError("cannot train a vocabulary on an empty corpus");
    }

    TrainResult result;
    Vocabulary& vocab = result.vocab;

    std::map<std::string, int> alphabet;
    for (const auto& [word, count] : word_counts) {
        for (std::size_t i = 0; i < word.size(); ++i) {
            alphabet.emplace(i == 0 ? std::string(1, word[i]) : std::string(Vocabulary::kContinuation) + word[i], 0);
        }
    }
    if (target_size <= Vocabulary::kNumSpecials + alphabet.size()) {
        throw ConfigError("target vocabulary size " + std::to_string(target_size) + " does not exceed specials plus " +
                          std::to_string(alphabet.size()) + " base characters");
    }
    for (const auto& entry : alphabet) {
        vocab.add(entry.first);
    }

    struct Word {
        std::vector<int> pieces;
        std::uint64_t count;
    };
    std::vector<Word> words;
    words.reserve(word_counts.size());
    for (const auto& [word, count] : word_counts) {
        Word w{{}, count};
        for (std::size_t i = 0; i < word.size(); ++i) {
            w.pieces.push_back(*vocab.find(i == 0 ? std::string(1, word[i]) : std::string(Vocabulary::kContinuation) + word[i]));
        }
        words.push_back(std::move(w));
    }

    auto pair_key = [](int a, int b) { return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b); };

    std::unordered_map<std::uint64_t, std::uint64_t> pair_counts;
    std::vector<std::uint64_t> piece_counts;
    while (vocab.size() < target_size) {
        pair_counts.clear();
        piece_counts.assign(vocab.size(), 0);
        for (const auto& w : words) {
            for (std::size_t i = 0; i < w.pieces.size(); ++i) {
                piece_counts[static_cast<std::size_t>(w.pieces[i])] += w.count;
                if (i + 1 < w.pieces.size()) {
                    pair_counts[pair_key(w.pieces[i], w.pieces[i + 1])] += w.count;
                }
            }
        }
        if (pair_counts.empty()) {
            result.reached_target = false;
            break;
        }

        int best_a = -1;
        int best_b = -1;
        std::uint64_t best_count = 0;
        unsigned __int128 best_denom = 1;
        for (const auto& [key, count] : pair_counts) {
            const int a = static_cast<int>(key >> 32);
            const int b = static_cast<int>(key & 0xffffffffu);
            const unsigned __int128 denom = static_cast<unsigned __int128>(piece_counts[static_cast<std::size_t>(a)]) *
                                            piece_counts[static_cast<std::size_t>(b)];
            bool better = false;
            if (best_a < 0) {
                better = true;
            } else {
                // count / denom versus best_count / best_denom, compared exactly.
                const unsigned __int128 lhs = static_cast<unsigned __int128>(count) * best_denom;
                const unsigned __int128 rhs = static_cast<unsigned __int128>(best_count) * denom;
                if (lhs != rhs) {
                    better = lhs > rhs;
                } else {
                    const auto& ta = vocab.token(a);
                    const auto& tb = vocab.token(b);
                    const auto& ba = vocab.token(best_a);
                    const auto& bb = vocab.token(best_b);
                    better = ta != ba ? ta < ba : tb < bb;
                }
            }
            if (better) {
                best_a = a;
                best_b = b;
                best_count = count;
                best_denom = denom;
            }
        }

        const std::string merged = vocab.token(best_a) + vocab.token(best_b).substr(Vocabulary::kContinuation.size());
        const int merged_id = vocab.add(merged);
        ++result.merges;
        for (auto& w : words) {
            auto& p = w.pieces;
            std::size_t out = 0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (i + 1 < p.size() && p[i] == best_a && p[i + 1] == best_b) {
                    p[out++] = merged_id;
                    ++i;
                } else {
                    p[out++] = p[i];
                }
            }
            p.resize(out);
        }
    }
    return result;
}

} // namespace trajlens

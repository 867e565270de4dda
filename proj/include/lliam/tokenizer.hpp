// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lliam/ops.hpp"

namespace lliam {

using TokenSequence = std::vector<TokenId>;

// Character-level vocabulary. Ids 0..3 are reserved for PAD, BOS, EOS and
// UNK; every other id maps to exactly one character.
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kBos = 1;
    static constexpr TokenId kEos = 2;
    static constexpr TokenId kUnk = 3;
    static constexpr std::size_t kReserved = 4;

    // Characters of the prompt template plus digits, sign, point and
    // separator, in ascending byte order.
    static Vocabulary for_prompts();
    static Vocabulary from_symbols(std::string_view symbols);

    std::size_t size() const noexcept { return kReserved + symbols_.size(); }
    bool contains(char c) const noexcept { return ids_[static_cast<unsigned char>(c)] != kUnk; }
    TokenId id_of(char c) const noexcept { return ids_[static_cast<unsigned char>(c)]; }
    // Printable form of an id; reserved ids render as <pad>, <bos>, <eos>, <unk>.
    std::string symbol(TokenId id) const;
    const std::string& symbols() const noexcept { return symbols_; }

    // One symbol per line, line number == id.
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

private:
    explicit Vocabulary(std::string symbols);
    std::string symbols_;
    std::array<TokenId, 256> ids_{};
};

struct EncodeResult {
    TokenSequence ids;
    std::size_t unknown = 0;
};

class Tokenizer {
public:
    explicit Tokenizer(Vocabulary vocab = Vocabulary::for_prompts()) : vocab_(std::move(vocab)) {}

    const Vocabulary& vocabulary() const noexcept { return vocab_; }
    std::size_t vocab_size() const noexcept { return vocab_.size(); }

    // One id per character; characters outside the vocabulary become UNK.
    TokenSequence encode(std::string_view text) const { return encode_counted(text).ids; }
    EncodeResult encode_counted(std::string_view text) const;

    // PAD, BOS and EOS are dropped; UNK renders as "<unk>". Throws
    // RangeError for ids outside the vocabulary.
    std::string decode(std::span<const TokenId> ids) const;

private:
    Vocabulary vocab_;
};

} // namespace lliam

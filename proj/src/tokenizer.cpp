// SPDX-License-Identifier: Apache-2.0
#include "lliam/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "lliam/errors.hpp"
#include "lliam/prompt_codec.hpp"

namespace lliam {

namespace {
constexpr std::array<std::string_view, Vocabulary::kReserved> kReservedNames = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary(std::string symbols) : symbols_(std::move(symbols)) {
    ids_.fill(kUnk);
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        auto& slot = ids_[static_cast<unsigned char>(symbols_[i])];
        if (slot != kUnk) throw ConfigError("vocabulary symbol repeated: '" + std::string(1, symbols_[i]) + "'");
        slot = static_cast<TokenId>(kReserved + i);
    }
}

Vocabulary Vocabulary::for_prompts() {
    std::set<char> chars;
    // Placeholders are not part of the rendered alphabet.
    std::string templ(kPromptTemplate);
    for (std::string_view ph : {"{n}", "{h}", "{series}"}) {
        auto pos = templ.find(ph);
        if (pos != std::string::npos) templ.erase(pos, ph.size());
    }
    chars.insert(templ.begin(), templ.end());
    for (char c = '0'; c <= '9'; ++c) chars.insert(c);
    for (char c : std::string_view("-., ")) chars.insert(c);
    return Vocabulary(std::string(chars.begin(), chars.end()));
}

Vocabulary Vocabulary::from_symbols(std::string_view symbols) { return Vocabulary(std::string(symbols)); }

std::string Vocabulary::symbol(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= size())
        throw RangeError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
    if (static_cast<std::size_t>(id) < kReserved) return std::string(kReservedNames[static_cast<std::size_t>(id)]);
    return std::string(1, symbols_[static_cast<std::size_t>(id) - kReserved]);
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write vocabulary file " + path.string());
    for (auto name : kReservedNames) out << name << '\n';
    for (char c : symbols_) out << c << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot read vocabulary file " + path.string());
    std::string line;
    std::string symbols;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        if (line_no < kReserved) {
            if (line != kReservedNames[line_no])
                throw ParseError("vocabulary line " + std::to_string(line_no + 1) + ": expected " +
                                 std::string(kReservedNames[line_no]));
        } else {
            if (line.size() != 1)
                throw ParseError("vocabulary line " + std::to_string(line_no + 1) + ": expected one character");
            symbols += line[0];
        }
        ++line_no;
    }
    if (line_no < kReserved) throw ParseError("vocabulary file is truncated: " + path.string());
    return Vocabulary(std::move(symbols));
}

EncodeResult Tokenizer::encode_counted(std::string_view text) const {
    EncodeResult out;
    out.ids.reserve(text.size());
    for (char c : text) {
        const TokenId id = vocab_.id_of(c);
        if (id == Vocabulary::kUnk) ++out.unknown;
        out.ids.push_back(id);
    }
    return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    out.reserve(ids.size());
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size())
            throw RangeError("token id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(vocab_.size()));
        if (id == Vocabulary::kPad || id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
        if (id == Vocabulary::kUnk) {
            out += "<unk>";
            continue;
        }
        out += vocab_.symbols()[static_cast<std::size_t>(id) - Vocabulary::kReserved];
    }
    return out;
}

} // namespace lliam

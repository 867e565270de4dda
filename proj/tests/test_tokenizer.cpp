// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "lliam/errors.hpp"
#include "lliam/prompt_codec.hpp"
#include "lliam/tokenizer.hpp"

using namespace lliam;

namespace {

std::string random_prompt(std::mt19937_64& gen) {
    std::uniform_int_distribution<int> len(1, 12);
    std::uniform_real_distribution<double> val(-500.0, 500.0);
    std::vector<double> lags(static_cast<std::size_t>(len(gen)));
    for (auto& v : lags) v = val(gen);
    return render_prompt(lags, static_cast<std::size_t>(len(gen)));
}

} // namespace

TEST(Vocabulary, ReservedIdsAreFixed) {
    const Vocabulary v = Vocabulary::for_prompts();
    EXPECT_EQ(Vocabulary::kPad, 0);
    EXPECT_EQ(Vocabulary::kBos, 1);
    EXPECT_EQ(Vocabulary::kEos, 2);
    EXPECT_EQ(Vocabulary::kUnk, 3);
    EXPECT_EQ(v.symbol(Vocabulary::kEos), "<eos>");
    EXPECT_EQ(v.symbol(Vocabulary::kBos), "<bos>");
}

TEST(Vocabulary, MappingIsBijective) {
    const Vocabulary v = Vocabulary::for_prompts();
    std::set<TokenId> ids;
    for (char c : v.symbols()) {
        const TokenId id = v.id_of(c);
        EXPECT_GE(id, static_cast<TokenId>(Vocabulary::kReserved));
        EXPECT_EQ(v.symbol(id), std::string(1, c));
        EXPECT_TRUE(ids.insert(id).second);
    }
    EXPECT_EQ(ids.size() + Vocabulary::kReserved, v.size());
}

TEST(Vocabulary, CoversDigitsSignPointSeparator) {
    const Vocabulary v = Vocabulary::for_prompts();
    for (char c : std::string("0123456789-., ")) EXPECT_TRUE(v.contains(c)) << c;
    EXPECT_FALSE(v.contains('{'));
    EXPECT_FALSE(v.contains('\n'));
}

TEST(Vocabulary, SaveLoadRoundTrip) {
    const auto dir = std::filesystem::path(LLIAM_TEST_TMP) / "vocab";
    std::filesystem::create_directories(dir);
    const Vocabulary v = Vocabulary::for_prompts();
    v.save(dir / "vocab.txt");
    EXPECT_TRUE(Vocabulary::load(dir / "vocab.txt") == v);
}

TEST(Tokenizer, EmptyTextEncodesToNothing) {
    EXPECT_TRUE(Tokenizer().encode("").empty());
}

TEST(Tokenizer, OneIdPerCharacter) {
    const Tokenizer tok;
    const auto ids = tok.encode("12, 3");
    ASSERT_EQ(ids.size(), 5u);
    EXPECT_EQ(ids[0], tok.vocabulary().id_of('1'));
    EXPECT_EQ(ids[2], tok.vocabulary().id_of(','));
    EXPECT_EQ(ids[3], tok.vocabulary().id_of(' '));
}

TEST(Tokenizer, DecodeEmpty) { EXPECT_EQ(Tokenizer().decode(TokenSequence{}), ""); }

TEST(Tokenizer, AnswerRoundTrip) {
    const Tokenizer tok;
    EXPECT_EQ(tok.decode(tok.encode("4, 5")), "4, 5");
}

TEST(Tokenizer, ReservedSymbolsAreStripped) {
    const Tokenizer tok;
    TokenSequence ids{Vocabulary::kBos};
    const auto body = tok.encode("7, 8");
    ids.insert(ids.end(), body.begin(), body.end());
    ids.push_back(Vocabulary::kEos);
    ids.push_back(Vocabulary::kPad);
    EXPECT_EQ(tok.decode(ids), "7, 8");
}

TEST(Tokenizer, UnknownCharactersAreCounted) {
    const Tokenizer tok;
    const auto r = tok.encode_counted("1{2}\n");
    EXPECT_EQ(r.unknown, 3u);
    EXPECT_EQ(r.ids[1], Vocabulary::kUnk);
    EXPECT_EQ(tok.decode(r.ids), "1<unk>2<unk><unk>");
}

TEST(Tokenizer, OutOfRangeIdThrows) {
    const Tokenizer tok;
    const TokenSequence bad{static_cast<TokenId>(tok.vocab_size())};
    EXPECT_THROW(tok.decode(bad), RangeError);
    const TokenSequence negative{-1};
    EXPECT_THROW(tok.decode(negative), RangeError);
}

TEST(Tokenizer, RoundTripOnRandomPrompts) {
    const Tokenizer tok;
    std::mt19937_64 gen(21);
    for (int i = 0; i < 500; ++i) {
        const std::string s = random_prompt(gen);
        const auto r = tok.encode_counted(s);
        EXPECT_EQ(r.unknown, 0u) << s;
        EXPECT_EQ(tok.decode(r.ids), s);
    }
}

TEST(Tokenizer, PrefixStable) {
    const Tokenizer tok;
    std::mt19937_64 gen(22);
    for (int i = 0; i < 200; ++i) {
        const std::string s = random_prompt(gen);
        const std::size_t cut = std::uniform_int_distribution<std::size_t>(0, s.size())(gen);
        auto a = tok.encode(s.substr(0, cut));
        const auto b = tok.encode(s.substr(cut));
        a.insert(a.end(), b.begin(), b.end());
        EXPECT_EQ(a, tok.encode(s));
    }
}

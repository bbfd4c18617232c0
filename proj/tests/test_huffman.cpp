#include <algorithm>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "siedd/errors.hpp"
#include "siedd/huffman.hpp"
#include "siedd/rng.hpp"

using namespace siedd;

namespace {

std::vector<std::uint16_t> materialize(const std::vector<std::uint64_t>& freqs) {
    std::vector<std::uint16_t> symbols;
    for (std::size_t s = 0; s < freqs.size(); ++s)
        symbols.insert(symbols.end(), freqs[s], static_cast<std::uint16_t>(s));
    return symbols;
}

std::uint64_t total_bits(const huffman::HuffmanTable& t,
                         const std::vector<std::uint64_t>& freqs) {
    std::uint64_t bits = 0;
    for (std::size_t s = 0; s < freqs.size(); ++s)
        bits += freqs[s] * t.lengths[s];
    return bits;
}

void check_roundtrip(const std::vector<std::uint16_t>& symbols,
                     std::size_t alphabet) {
    std::vector<std::uint64_t> freqs(alphabet, 0);
    for (const auto s : symbols) ++freqs[s];
    const auto table = huffman::build_table(freqs);
    const auto enc = huffman::encode(table, symbols.data(), symbols.size());
    const auto back = huffman::decode(table, enc.bytes.data(), enc.bytes.size(),
                                      enc.n_bits, symbols.size());
    CHECK(back == symbols);
}

}  // namespace

TEST_SUITE_BEGIN("huffman");

TEST_CASE("textbook frequency example gets the optimal lengths") {
    // Frequencies 5,2,1,1. Tree construction by hand: merge the two 1s into a
    // 2-node, merge it with the 2 into a 4-node, merge with the 5. Depths:
    // a=1, b=2, c=3, d=3. Weighted total: 5*1 + 2*2 + 1*3 + 1*3 = 15 bits.
    const std::vector<std::uint64_t> freqs = {5, 2, 1, 1};
    const auto table = huffman::build_table(freqs);
    CHECK(table.lengths == std::vector<std::uint8_t>{1, 2, 3, 3});
    CHECK(total_bits(table, freqs) == 15);

    const auto symbols = materialize(freqs);
    const auto enc = huffman::encode(table, symbols.data(), symbols.size());
    CHECK(enc.n_bits == 15);
    CHECK(enc.bytes.size() == 2);
    check_roundtrip(symbols, 4);
}

TEST_CASE("single-symbol alphabets spend one bit per symbol") {
    std::vector<std::uint64_t> freqs(16, 0);
    freqs[7] = 100;
    const auto table = huffman::build_table(freqs);
    CHECK(table.lengths[7] == 1);
    for (std::size_t s = 0; s < 16; ++s)
        if (s != 7) CHECK(table.lengths[s] == 0);

    const std::vector<std::uint16_t> symbols(100, 7);
    const auto enc = huffman::encode(table, symbols.data(), symbols.size());
    CHECK(enc.n_bits == 100);
    const auto back =
        huffman::decode(table, enc.bytes.data(), enc.bytes.size(), 100, 100);
    CHECK(back == symbols);
}

TEST_CASE("two equal-frequency symbols cost one bit each") {
    const std::vector<std::uint64_t> freqs = {37, 37};
    const auto table = huffman::build_table(freqs);
    CHECK(table.lengths == std::vector<std::uint8_t>{1, 1});
    const auto symbols = materialize(freqs);
    const auto enc = huffman::encode(table, symbols.data(), symbols.size());
    CHECK(enc.n_bits == 74);
    check_roundtrip(symbols, 2);
}

TEST_CASE("random sequences round-trip exactly") {
    Rng rng(17);
    for (const std::size_t bits : {2ul, 4ul, 6ul, 8ul}) {
        const std::size_t alphabet = 1ul << bits;
        std::vector<std::uint16_t> symbols(10000);
        // Skewed draw so code lengths actually vary.
        for (auto& s : symbols) {
            const std::uint64_t a = rng.bounded(alphabet);
            const std::uint64_t b = rng.bounded(alphabet);
            s = static_cast<std::uint16_t>(std::min(a, b));
        }
        check_roundtrip(symbols, alphabet);
    }
    // Single symbol sequence.
    check_roundtrip({3}, 8);
    // Alphabet with unused symbols.
    check_roundtrip({0, 0, 5, 0, 5, 5}, 6);
}

TEST_CASE("compression beats the flat width on skewed data") {
    // 6-bit symbols, heavily skewed: entropy coding must beat 6 bits/symbol.
    Rng rng(23);
    std::vector<std::uint16_t> symbols(5000);
    for (auto& s : symbols) {
        std::uint64_t v = rng.bounded(64);
        v = std::min({v, rng.bounded(64), rng.bounded(64)});
        s = static_cast<std::uint16_t>(v);
    }
    std::vector<std::uint64_t> freqs(64, 0);
    for (const auto s : symbols) ++freqs[s];
    const auto table = huffman::build_table(freqs);
    const auto enc = huffman::encode(table, symbols.data(), symbols.size());
    CHECK(enc.n_bits < 6 * symbols.size());
}

TEST_CASE("tables are deterministic functions of the frequencies") {
    const std::vector<std::uint64_t> freqs = {3, 9, 1, 1, 4, 0, 7, 2};
    const auto a = huffman::build_table(freqs);
    const auto b = huffman::build_table(freqs);
    CHECK(a.lengths == b.lengths);

    // Equal-frequency ties resolve identically run to run (canonical form).
    const std::vector<std::uint64_t> ties = {5, 5, 5, 5, 5};
    CHECK(huffman::build_table(ties).lengths == huffman::build_table(ties).lengths);
}

TEST_CASE("pathological frequencies respect the length cap") {
    // Fibonacci frequencies build a maximally skewed tree whose natural depth
    // (39) exceeds the cap; the builder must flatten it.
    std::vector<std::uint64_t> freqs(40);
    std::uint64_t a = 1, b = 1;
    for (auto& f : freqs) {
        f = a;
        const std::uint64_t next = a + b;
        a = b;
        b = next;
    }
    const auto table = huffman::build_table(freqs);
    CHECK(*std::max_element(table.lengths.begin(), table.lengths.end()) <=
          huffman::kMaxCodeLength);
    CHECK_NOTHROW(table.validate());

    // The flattened code still round-trips.
    std::vector<std::uint16_t> symbols;
    for (std::uint16_t s = 0; s < 40; ++s)
        for (int k = 0; k < 3; ++k) symbols.push_back(s);
    const auto enc = huffman::encode(table, symbols.data(), symbols.size());
    const auto back = huffman::decode(table, enc.bytes.data(), enc.bytes.size(),
                                      enc.n_bits, symbols.size());
    CHECK(back == symbols);
}

TEST_CASE("table validation enforces a complete prefix code") {
    auto reject = [](std::vector<std::uint8_t> lengths) {
        huffman::HuffmanTable t{std::move(lengths)};
        CHECK_THROWS_AS(t.validate(), FormatError);
    };
    reject({});             // empty alphabet
    reject({0, 0, 0});      // nothing used
    reject({1, 1, 2});      // oversubscribed code space
    reject({2, 2});         // undersubscribed with two symbols
    reject({0, 2, 0});      // lone symbol must use one bit
    reject({33, 1});        // beyond the cap

    auto accept = [](std::vector<std::uint8_t> lengths) {
        huffman::HuffmanTable t{std::move(lengths)};
        CHECK_NOTHROW(t.validate());
    };
    accept({1, 1});
    accept({0, 1, 0});
    accept({1, 2, 2});
}

TEST_CASE("decode rejects damaged streams") {
    const std::vector<std::uint64_t> freqs = {8, 4, 2, 2};
    const auto table = huffman::build_table(freqs);
    const auto symbols = materialize(freqs);
    const auto enc = huffman::encode(table, symbols.data(), symbols.size());

    // Fewer bits than the symbols need.
    CHECK_THROWS_AS(huffman::decode(table, enc.bytes.data(), enc.bytes.size(),
                                    enc.n_bits - 1, symbols.size()),
                    FormatError);
    // Bits left over after the last symbol.
    CHECK_THROWS_AS(huffman::decode(table, enc.bytes.data(), enc.bytes.size(),
                                    enc.n_bits, symbols.size() - 1),
                    FormatError);
    // Byte buffer shorter than the claimed bit count.
    CHECK_THROWS_AS(huffman::decode(table, enc.bytes.data(), enc.bytes.size() - 1,
                                    enc.n_bits, symbols.size()),
                    FormatError);

    // A walk off the code tree: single-symbol tables only accept 0-bits.
    std::vector<std::uint64_t> lone(4, 0);
    lone[2] = 5;
    const auto lone_table = huffman::build_table(lone);
    const std::uint8_t junk = 0xFF;
    CHECK_THROWS_AS(huffman::decode(lone_table, &junk, 1, 8, 8), FormatError);
}

TEST_CASE("encode rejects unusable input") {
    const auto table = huffman::build_table({1, 1});
    CHECK_THROWS_AS(huffman::encode(table, nullptr, 0), FormatError);
    const std::uint16_t bad = 9;
    CHECK_THROWS_AS(huffman::encode(table, &bad, 1), FormatError);

    CHECK_THROWS_AS(huffman::build_table({}), FormatError);
    CHECK_THROWS_AS(huffman::build_table({0, 0}), FormatError);
}

TEST_CASE("empty decode request returns an empty sequence") {
    const auto table = huffman::build_table({1, 1});
    const auto out = huffman::decode(table, nullptr, 0, 0, 0);
    CHECK(out.empty());
}

TEST_SUITE_END();

#pragma once

#include <cstdint>
#include <vector>

// Canonical Huffman coding over small alphabets (quantized weight codes).
// A table is fully described by its per-symbol code lengths; codes are
// assigned canonically (shorter first, ties by symbol value), so identical
// frequencies always produce identical table bytes.

namespace siedd::huffman {

inline constexpr std::size_t kMaxCodeLength = 32;

struct HuffmanTable {
    std::vector<std::uint8_t> lengths;  // per symbol of the alphabet; 0 = unused

    std::size_t alphabet_size() const { return lengths.size(); }
    // Decodability check: lengths within bounds and the Kraft sum fills the
    // code space exactly (a single-symbol alphabet uses one 1-bit code and is
    // exempt). Throws FormatError otherwise.
    void validate() const;
};

// Optimal code lengths for the observed frequencies. Deterministic: ties in
// the tree merge are broken by first-created node. Lengths exceeding
// kMaxCodeLength are eliminated by halving the frequencies and rebuilding.
HuffmanTable build_table(const std::vector<std::uint64_t>& freqs);

struct EncodedBits {
    std::vector<std::uint8_t> bytes;
    std::uint64_t n_bits = 0;
};

// Bit stream is LSB-first within bytes; each canonical code is emitted most
// significant bit first (i.e. stored bit-reversed), which lets the decoder
// rebuild codes by left-shifting as it reads.
EncodedBits encode(const HuffmanTable& table, const std::uint16_t* symbols,
                   std::size_t n_symbols);

// Decodes exactly n_symbols and requires the stream to consume exactly
// n_bits; truncation, trailing garbage or an invalid code path throw
// FormatError.
std::vector<std::uint16_t> decode(const HuffmanTable& table,
                                  const std::uint8_t* bytes, std::size_t n_bytes,
                                  std::uint64_t n_bits, std::size_t n_symbols);

}  // namespace siedd::huffman

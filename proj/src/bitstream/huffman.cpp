#include "siedd/huffman.hpp"

#include <algorithm>
#include <queue>
#include <string>

#include "siedd/errors.hpp"

namespace siedd::huffman {

namespace {

// Per-length canonical layout shared by encode and decode.
struct Canonical {
    std::vector<std::uint16_t> symbols;      // used symbols sorted by (len, sym)
    std::uint32_t first_code[kMaxCodeLength + 1];  // smallest code of each length
    std::uint32_t count[kMaxCodeLength + 1];       // symbols of each length
    std::uint32_t offset[kMaxCodeLength + 1];      // index of first symbol per length
    std::vector<std::uint32_t> code_of;      // per symbol, MSB-first
    std::uint8_t max_len = 0;
};

Canonical canonicalize(const HuffmanTable& t) {
    t.validate();
    Canonical c;
    std::fill(std::begin(c.count), std::end(c.count), 0u);
    for (std::size_t s = 0; s < t.lengths.size(); ++s) {
        if (t.lengths[s] == 0) continue;
        ++c.count[t.lengths[s]];
        c.max_len = std::max(c.max_len, t.lengths[s]);
        c.symbols.push_back(static_cast<std::uint16_t>(s));
    }
    std::stable_sort(c.symbols.begin(), c.symbols.end(),
                     [&](std::uint16_t a, std::uint16_t b) {
                         return t.lengths[a] != t.lengths[b] ? t.lengths[a] < t.lengths[b]
                                                            : a < b;
                     });

    std::uint32_t code = 0, index = 0;
    std::fill(std::begin(c.first_code), std::end(c.first_code), 0u);
    std::fill(std::begin(c.offset), std::end(c.offset), 0u);
    c.code_of.assign(t.lengths.size(), 0);
    for (std::size_t len = 1; len <= c.max_len; ++len) {
        c.first_code[len] = code;
        c.offset[len] = index;
        for (std::uint32_t k = 0; k < c.count[len]; ++k) {
            c.code_of[c.symbols[index]] = code;
            ++code;
            ++index;
        }
        code <<= 1;
    }
    return c;
}

std::uint32_t reverse_bits(std::uint32_t v, std::uint8_t n) {
    std::uint32_t r = 0;
    for (std::uint8_t i = 0; i < n; ++i) {
        r = (r << 1) | (v & 1u);
        v >>= 1;
    }
    return r;
}

}  // namespace

void HuffmanTable::validate() const {
    if (lengths.empty()) throw FormatError("huffman table: empty alphabet");
    std::uint64_t kraft = 0;  // in units of 2^-kMaxCodeLength
    std::size_t used = 0;
    for (std::size_t s = 0; s < lengths.size(); ++s) {
        if (lengths[s] == 0) continue;
        if (lengths[s] > kMaxCodeLength)
            throw FormatError("huffman table: symbol " + std::to_string(s) +
                              " has length " + std::to_string(lengths[s]) +
                              " > " + std::to_string(kMaxCodeLength));
        ++used;
        kraft += 1ULL << (kMaxCodeLength - lengths[s]);
    }
    if (used == 0) throw FormatError("huffman table: no used symbols");
    if (used == 1) {
        // A lone symbol gets a 1-bit code; the other half of the code space
        // is intentionally unused.
        for (std::size_t s = 0; s < lengths.size(); ++s)
            if (lengths[s] != 0 && lengths[s] != 1)
                throw FormatError("huffman table: single-symbol alphabet must use "
                                  "a 1-bit code");
        return;
    }
    if (kraft != (1ULL << kMaxCodeLength))
        throw FormatError("huffman table: code lengths do not fill the code space "
                          "(Kraft sum " + std::to_string(kraft) + ")");
}

HuffmanTable build_table(const std::vector<std::uint64_t>& freqs) {
    if (freqs.empty()) throw FormatError("huffman: empty alphabet");
    if (freqs.size() > 65536) throw FormatError("huffman: alphabet too large");

    std::vector<std::uint16_t> used;
    for (std::size_t s = 0; s < freqs.size(); ++s)
        if (freqs[s] != 0) used.push_back(static_cast<std::uint16_t>(s));
    if (used.empty()) throw FormatError("huffman: no symbols observed");

    HuffmanTable t;
    t.lengths.assign(freqs.size(), 0);
    if (used.size() == 1) {
        t.lengths[used[0]] = 1;
        return t;
    }

    std::vector<std::uint64_t> f(freqs);
    for (;;) {
        struct Node {
            std::uint64_t freq;
            std::uint32_t order;  // creation order: the deterministic tie-break
            int left = -1, right = -1;
        };
        std::vector<Node> nodes;
        nodes.reserve(2 * used.size());
        for (const std::uint16_t s : used)
            nodes.push_back({f[s], static_cast<std::uint32_t>(nodes.size()), -1, -1});

        auto higher = [&nodes](int a, int b) {
            if (nodes[a].freq != nodes[b].freq) return nodes[a].freq > nodes[b].freq;
            return nodes[a].order > nodes[b].order;
        };
        std::priority_queue<int, std::vector<int>, decltype(higher)> heap(higher);
        for (int i = 0; i < static_cast<int>(nodes.size()); ++i) heap.push(i);

        while (heap.size() > 1) {
            const int a = heap.top();
            heap.pop();
            const int b = heap.top();
            heap.pop();
            nodes.push_back({nodes[a].freq + nodes[b].freq,
                             static_cast<std::uint32_t>(nodes.size()), a, b});
            heap.push(static_cast<int>(nodes.size()) - 1);
        }

        // Leaf depths via an explicit traversal from the root.
        std::vector<std::pair<int, std::uint32_t>> stack{{heap.top(), 0}};
        std::uint32_t max_len = 0;
        std::vector<std::uint32_t> depth(used.size(), 0);
        while (!stack.empty()) {
            const auto [idx, d] = stack.back();
            stack.pop_back();
            if (nodes[idx].left < 0) {
                depth[idx] = d;
                max_len = std::max(max_len, d);
            } else {
                stack.push_back({nodes[idx].left, d + 1});
                stack.push_back({nodes[idx].right, d + 1});
            }
        }

        if (max_len <= kMaxCodeLength) {
            for (std::size_t i = 0; i < used.size(); ++i)
                t.lengths[used[i]] = static_cast<std::uint8_t>(depth[i]);
            return t;
        }
        // Flatten the frequency distribution and retry; terminates because
        // all-equal frequencies give a balanced (depth <= 17) tree.
        for (const std::uint16_t s : used) f[s] = (f[s] + 1) >> 1;
    }
}

EncodedBits encode(const HuffmanTable& table, const std::uint16_t* symbols,
                   std::size_t n_symbols) {
    if (n_symbols == 0) throw FormatError("huffman encode: empty symbol sequence");
    const Canonical c = canonicalize(table);

    std::uint64_t total_bits = 0;
    for (std::size_t i = 0; i < n_symbols; ++i) {
        const std::uint16_t s = symbols[i];
        if (s >= table.lengths.size() || table.lengths[s] == 0)
            throw FormatError("huffman encode: symbol " + std::to_string(s) +
                              " not in the table");
        total_bits += table.lengths[s];
    }

    // Precompute bit-reversed codes so emission is a single LSB-first append.
    std::vector<std::uint32_t> rev(table.lengths.size(), 0);
    for (const std::uint16_t s : c.symbols)
        rev[s] = reverse_bits(c.code_of[s], table.lengths[s]);

    EncodedBits out;
    out.n_bits = total_bits;
    out.bytes.assign((total_bits + 7) / 8, 0);
    std::uint64_t pos = 0;
    for (std::size_t i = 0; i < n_symbols; ++i) {
        std::uint32_t bits = rev[symbols[i]];
        std::uint8_t len = table.lengths[symbols[i]];
        while (len > 0) {
            out.bytes[pos >> 3] |= static_cast<std::uint8_t>((bits & 1u) << (pos & 7));
            bits >>= 1;
            ++pos;
            --len;
        }
    }
    return out;
}

std::vector<std::uint16_t> decode(const HuffmanTable& table,
                                  const std::uint8_t* bytes, std::size_t n_bytes,
                                  std::uint64_t n_bits, std::size_t n_symbols) {
    const Canonical c = canonicalize(table);
    if (n_bytes < (n_bits + 7) / 8)
        throw FormatError("huffman decode: " + std::to_string(n_bytes) +
                          " bytes cannot hold " + std::to_string(n_bits) + " bits");

    std::vector<std::uint16_t> out;
    out.reserve(n_symbols);
    std::uint64_t pos = 0;
    while (out.size() < n_symbols) {
        std::uint32_t acc = 0;
        std::uint8_t len = 0;
        for (;;) {
            if (pos >= n_bits)
                throw FormatError("huffman decode: bit stream truncated at symbol " +
                                  std::to_string(out.size()));
            const std::uint32_t bit = (bytes[pos >> 3] >> (pos & 7)) & 1u;
            ++pos;
            acc = (acc << 1) | bit;
            ++len;
            if (c.count[len] != 0 && acc >= c.first_code[len] &&
                acc - c.first_code[len] < c.count[len]) {
                out.push_back(c.symbols[c.offset[len] + (acc - c.first_code[len])]);
                break;
            }
            if (len >= c.max_len)
                throw FormatError("huffman decode: invalid code at bit " +
                                  std::to_string(pos));
        }
    }
    if (pos != n_bits)
        throw FormatError("huffman decode: " + std::to_string(n_bits - pos) +
                          " trailing bits after the last symbol");
    return out;
}

}  // namespace siedd::huffman

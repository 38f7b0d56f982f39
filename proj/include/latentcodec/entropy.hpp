#pragma once

// Canonical Huffman coding of symbol indices over MSB-first bit streams.

#include <algorithm>
#include <cstdint>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace latentcodec {

class EntropyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BitWriter {
 public:
  void put(std::uint64_t code, unsigned length) {
    for (unsigned i = length; i-- > 0;) put_bit((code >> i) & 1u);
  }
  void put_bit(unsigned bit) {
    if (bits_ % 8 == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bits_ % 8));
    ++bits_;
  }
  std::uint64_t bit_count() const { return bits_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t bits_ = 0;
};

class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> bytes, std::uint64_t bit_count)
      : bytes_(bytes), limit_(bit_count) {
    if (bit_count > static_cast<std::uint64_t>(bytes.size()) * 8) {
      throw EntropyError("bit count exceeds buffer size");
    }
  }
  explicit BitReader(std::span<const std::uint8_t> bytes) : BitReader(bytes, bytes.size() * 8) {}

  bool exhausted() const { return cursor_ >= limit_; }
  std::uint64_t position() const { return cursor_; }
  std::uint64_t remaining() const { return limit_ - cursor_; }

  unsigned get_bit() {
    if (exhausted()) throw EntropyError("truncated bit stream");
    unsigned bit = (bytes_[cursor_ / 8] >> (7 - cursor_ % 8)) & 1u;
    ++cursor_;
    return bit;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t limit_;
  std::uint64_t cursor_ = 0;
};

/// Canonical code: codewords assigned in (length, symbol) order. Length 0 means
/// the symbol has no codeword.
struct CodeTable {
  std::vector<std::uint8_t> lengths;
  std::vector<std::uint64_t> codes;

  static constexpr unsigned kMaxLength = 63;

  static CodeTable from_lengths(std::vector<std::uint8_t> lengths) {
    CodeTable t;
    t.lengths = std::move(lengths);
    t.codes.assign(t.lengths.size(), 0);
    std::vector<std::size_t> order;
    for (std::size_t s = 0; s < t.lengths.size(); ++s) {
      if (t.lengths[s] > kMaxLength) throw EntropyError("code length exceeds 63 bits");
      if (t.lengths[s]) order.push_back(s);
    }
    if (order.empty()) throw EntropyError("code table has no symbols");
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return t.lengths[a] < t.lengths[b]; });
    // Kraft sum must not exceed 1 or the canonical assignment overflows.
    long double kraft = 0;
    for (std::size_t s : order) kraft += 1.0L / static_cast<long double>(1ull << t.lengths[s]);
    if (kraft > 1.0L + 1e-15L) throw EntropyError("code lengths violate the Kraft inequality");
    std::uint64_t code = 0;
    unsigned len = t.lengths[order.front()];
    for (std::size_t i = 0; i < order.size(); ++i) {
      std::size_t s = order[i];
      if (i > 0) {
        ++code;
        code <<= (t.lengths[s] - len);
        len = t.lengths[s];
      }
      t.codes[s] = code;
    }
    return t;
  }

  std::size_t alphabet_size() const { return lengths.size(); }
};

/// Huffman lengths with deterministic tie-breaking, canonicalized. A single
/// used symbol gets length 1.
inline CodeTable build_table(std::span<const std::uint64_t> freqs) {
  struct Item {
    std::uint64_t weight;
    std::size_t order;  // creation order breaks weight ties
    int node;
  };
  auto cmp = [](const Item& a, const Item& b) {
    return a.weight != b.weight ? a.weight > b.weight : a.order > b.order;
  };
  std::priority_queue<Item, std::vector<Item>, decltype(cmp)> heap(cmp);
  std::vector<int> parent;
  std::size_t used = 0;
  std::vector<int> leaf_node(freqs.size(), -1);
  for (std::size_t s = 0; s < freqs.size(); ++s) {
    if (!freqs[s]) continue;
    leaf_node[s] = static_cast<int>(parent.size());
    parent.push_back(-1);
    heap.push({freqs[s], parent.size() - 1, leaf_node[s]});
    ++used;
  }
  if (used == 0) throw EntropyError("all symbol frequencies are zero");

  std::vector<std::uint8_t> lengths(freqs.size(), 0);
  if (used == 1) {
    for (std::size_t s = 0; s < freqs.size(); ++s)
      if (freqs[s]) lengths[s] = 1;
    return CodeTable::from_lengths(std::move(lengths));
  }
  std::size_t order = parent.size();
  while (heap.size() > 1) {
    Item a = heap.top();
    heap.pop();
    Item b = heap.top();
    heap.pop();
    int n = static_cast<int>(parent.size());
    parent.push_back(-1);
    parent[a.node] = n;
    parent[b.node] = n;
    heap.push({a.weight + b.weight, order++, n});
  }
  for (std::size_t s = 0; s < freqs.size(); ++s) {
    if (leaf_node[s] < 0) continue;
    unsigned depth = 0;
    for (int n = leaf_node[s]; parent[n] >= 0; n = parent[n]) ++depth;
    if (depth > CodeTable::kMaxLength) throw EntropyError("Huffman code deeper than 63 bits");
    lengths[s] = static_cast<std::uint8_t>(depth);
  }
  return CodeTable::from_lengths(std::move(lengths));
}

inline std::vector<std::uint64_t> symbol_frequencies(std::span<const std::uint8_t> symbols,
                                                     std::size_t alphabet) {
  std::vector<std::uint64_t> f(alphabet, 0);
  for (auto s : symbols) {
    if (s >= alphabet) throw EntropyError("symbol outside alphabet");
    ++f[s];
  }
  return f;
}

/// Appends codewords; returns the number of bits written.
inline std::uint64_t encode(std::span<const std::uint8_t> symbols, const CodeTable& table,
                            BitWriter& out) {
  std::uint64_t before = out.bit_count();
  for (auto s : symbols) {
    if (s >= table.lengths.size() || table.lengths[s] == 0) {
      throw EntropyError("symbol " + std::to_string(s) + " has no codeword");
    }
    out.put(table.codes[s], table.lengths[s]);
  }
  return out.bit_count() - before;
}

/// Sum of codeword lengths, without producing the stream.
inline std::uint64_t encoded_bits(std::span<const std::uint8_t> symbols, const CodeTable& table) {
  std::uint64_t bits = 0;
  for (auto s : symbols) {
    if (s >= table.lengths.size() || table.lengths[s] == 0) {
      throw EntropyError("symbol " + std::to_string(s) + " has no codeword");
    }
    bits += table.lengths[s];
  }
  return bits;
}

/// Canonical decoding by per-length first-code ranges.
inline std::vector<std::uint8_t> decode(BitReader& in, const CodeTable& table, std::size_t n) {
  unsigned max_len = 0;
  for (auto l : table.lengths) max_len = std::max<unsigned>(max_len, l);
  // Symbols sorted canonically; first_code/first_index per length.
  std::vector<std::size_t> sorted;
  for (std::size_t s = 0; s < table.lengths.size(); ++s)
    if (table.lengths[s]) sorted.push_back(s);
  std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
    return table.lengths[a] < table.lengths[b];
  });
  std::vector<std::uint64_t> count(max_len + 1, 0), first_code(max_len + 1, 0);
  std::vector<std::size_t> first_index(max_len + 1, 0);
  for (std::size_t s : sorted) ++count[table.lengths[s]];
  {
    std::size_t idx = 0;
    for (unsigned l = 1; l <= max_len; ++l) {
      first_index[l] = idx;
      idx += count[l];
      if (count[l]) first_code[l] = table.codes[sorted[first_index[l]]];
    }
  }

  std::vector<std::uint8_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t code = 0;
    unsigned len = 0;
    for (;;) {
      if (in.exhausted()) throw EntropyError("truncated stream: ran out of bits mid-codeword");
      code = (code << 1) | in.get_bit();
      ++len;
      if (len > max_len) throw EntropyError("invalid prefix in bit stream");
      if (count[len] && code >= first_code[len] && code - first_code[len] < count[len]) {
        out.push_back(static_cast<std::uint8_t>(sorted[first_index[len] + (code - first_code[len])]));
        break;
      }
    }
  }
  return out;
}

}  // namespace latentcodec

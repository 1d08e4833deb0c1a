#pragma once

// ============================================================================
// Content hashing for run manifests.
//
// Experiment outputs embed a fingerprint of every input file so a result can
// be traced back to the exact bytes it was computed from.  We use the same
// scheme git uses for blobs: SHA-1 over "blob <size>\0" + content, rendered
// as 40 lowercase hex digits.  That makes the manifest hashes directly
// comparable to `git hash-object <file>`.
//
// SHA-1 is implemented here from the FIPS 180-1 specification; it is a
// fingerprint for provenance, not a security boundary.
// ============================================================================

#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "canet/error.hpp"

namespace canet {

namespace detail {

inline std::uint32_t rotl32(std::uint32_t x, int n) {
  return (x << n) | (x >> (32 - n));
}

}  // namespace detail

// Incremental SHA-1.  Feed bytes with update(), then call hex_digest() once.
class Sha1 {
 public:
  Sha1() = default;

  void update(std::string_view data) {
    for (unsigned char c : data) {
      buffer_[buffered_++] = c;
      ++total_bytes_;
      if (buffered_ == 64) {
        process_block();
        buffered_ = 0;
      }
    }
  }

  // Finalizes the padding and returns the digest as 40 lowercase hex chars.
  std::string hex_digest() {
    const std::uint64_t bit_len = total_bytes_ * 8;
    // 0x80 terminator, zero padding, then the 64-bit big-endian length.
    update_raw(0x80);
    while (buffered_ != 56) update_raw(0x00);
    for (int shift = 56; shift >= 0; shift -= 8) {
      update_raw(static_cast<unsigned char>((bit_len >> shift) & 0xff));
    }
    std::ostringstream out;
    out << std::hex;
    for (std::uint32_t word : h_) {
      for (int shift = 28; shift >= 0; shift -= 4) {
        out << ((word >> shift) & 0xf);
      }
    }
    return out.str();
  }

 private:
  void update_raw(unsigned char c) {
    buffer_[buffered_++] = c;
    if (buffered_ == 64) {
      process_block();
      buffered_ = 0;
    }
  }

  void process_block() {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i) {
      w[i] = (std::uint32_t{buffer_[4 * i]} << 24) | (std::uint32_t{buffer_[4 * i + 1]} << 16) |
             (std::uint32_t{buffer_[4 * i + 2]} << 8) | std::uint32_t{buffer_[4 * i + 3]};
    }
    for (int i = 16; i < 80; ++i) {
      w[i] = detail::rotl32(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    }
    std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5a827999u;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ed9eba1u;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8f1bbcdcu;
      } else {
        f = b ^ c ^ d;
        k = 0xca62c1d6u;
      }
      const std::uint32_t tmp = detail::rotl32(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = detail::rotl32(b, 30);
      b = a;
      a = tmp;
    }
    h_[0] += a;
    h_[1] += b;
    h_[2] += c;
    h_[3] += d;
    h_[4] += e;
  }

  std::array<std::uint32_t, 5> h_ = {0x67452301u, 0xefcdab89u, 0x98badcfeu, 0x10325476u,
                                     0xc3d2e1f0u};
  std::array<unsigned char, 64> buffer_{};
  std::size_t buffered_ = 0;
  std::uint64_t total_bytes_ = 0;
};

inline std::string sha1_hex(std::string_view data) {
  Sha1 h;
  h.update(data);
  return h.hex_digest();
}

// Git-compatible blob hash: SHA-1 of "blob <size>\0" followed by the bytes.
inline std::string git_blob_hash(std::string_view content) {
  Sha1 h;
  h.update("blob ");
  h.update(std::to_string(content.size()));
  h.update(std::string_view("\0", 1));
  h.update(content);
  return h.hex_digest();
}

inline std::string git_blob_hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open file for hashing: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return git_blob_hash(buf.str());
}

}  // namespace canet

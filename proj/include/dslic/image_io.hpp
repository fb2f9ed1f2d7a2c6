#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dslic/error.hpp"
#include "dslic/image.hpp"

// File I/O for images. Binary PPM (P6, maxval 255) is the bit-exact
// canonical format; PNG (8-bit RGB, non-interlaced) is supported as a
// convenience import/export. Channel values map v = byte/255 on read and
// byte = clamp(round(v*255)) on write.

namespace dslic {

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path,
                             const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write: " + path);
}

inline std::uint8_t quantize8(double v) {
  const long q = std::lround(v * 255.0);
  return static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
}

// ---- PPM (P6) ----

// Skips whitespace and '#' comments, then parses a nonnegative ASCII int.
inline int ppm_token(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  while (pos < b.size()) {
    const char c = static_cast<char>(b[pos]);
    if (c == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || b[pos] < '0' || b[pos] > '9')
    throw IoError("ppm: malformed header");
  long v = 0;
  while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
    v = v * 10 + (b[pos] - '0');
    if (v > 1'000'000'000L) throw IoError("ppm: header value out of range");
    ++pos;
  }
  return static_cast<int>(v);
}

inline Image decode_ppm(const std::vector<std::uint8_t>& b) {
  if (b.size() < 2 || b[0] != 'P' || b[1] != '6')
    throw IoError("ppm: not a P6 file");
  std::size_t pos = 2;
  const int w = ppm_token(b, pos);
  const int h = ppm_token(b, pos);
  const int maxval = ppm_token(b, pos);
  if (w <= 0 || h <= 0) throw IoError("ppm: bad dimensions");
  if (maxval != 255) throw IoError("ppm: unsupported maxval (must be 255)");
  if (pos >= b.size()) throw IoError("ppm: truncated header");
  ++pos;  // single whitespace byte after maxval
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (b.size() - pos < need) throw IoError("ppm: truncated pixel data");
  Image img(h, w);
  for (std::size_t i = 0; i < need; ++i)
    img.data[i] = static_cast<double>(b[pos + i]) / 255.0;
  return img;
}

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  if (img.height <= 0 || img.width <= 0)
    throw InvalidArgument("ppm: empty image");
  std::string header = "P6\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (double v : img.data) out.push_back(quantize8(v));
  return out;
}

// ---- PNG ----

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n,
                           std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i)
    crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

inline std::uint32_t adler32(const std::uint8_t* data, std::size_t n) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

class BitReader {
 public:
  BitReader(const std::uint8_t* data, std::size_t size)
      : data_(data), size_(size) {}

  // LSB-first, per RFC 1951.
  std::uint32_t bits(int n) {
    while (bitcnt_ < n) {
      if (pos_ >= size_) throw IoError("png: truncated deflate stream");
      bitbuf_ |= static_cast<std::uint64_t>(data_[pos_++]) << bitcnt_;
      bitcnt_ += 8;
    }
    const auto out =
        static_cast<std::uint32_t>(bitbuf_ & ((1ULL << n) - 1ULL));
    bitbuf_ >>= n;
    bitcnt_ -= n;
    return out;
  }

  void align_byte() {
    const int drop = bitcnt_ % 8;
    bitbuf_ >>= drop;
    bitcnt_ -= drop;
  }

  std::uint8_t byte() {
    if (bitcnt_ >= 8) return static_cast<std::uint8_t>(bits(8));
    if (pos_ >= size_) throw IoError("png: truncated deflate stream");
    return data_[pos_++];
  }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::uint64_t bitbuf_ = 0;
  int bitcnt_ = 0;
};

// Canonical Huffman decoder (count/symbol walk, as in RFC 1951 §3.2.2).
struct Huffman {
  std::array<std::uint16_t, 16> count{};
  std::vector<std::uint16_t> symbol;

  void build(const std::uint8_t* lengths, int n) {
    count.fill(0);
    for (int i = 0; i < n; ++i) ++count[lengths[i]];
    count[0] = 0;
    int left = 1;
    for (int len = 1; len <= 15; ++len) {
      left <<= 1;
      left -= count[len];
      if (left < 0) throw IoError("png: oversubscribed huffman code");
    }
    std::array<int, 16> offs{};
    for (int len = 1; len < 15; ++len) offs[len + 1] = offs[len] + count[len];
    symbol.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i)
      if (lengths[i] != 0)
        symbol[static_cast<std::size_t>(offs[lengths[i]]++)] =
            static_cast<std::uint16_t>(i);
  }

  int decode(BitReader& br) const {
    int code = 0, first = 0, index = 0;
    for (int len = 1; len <= 15; ++len) {
      code |= static_cast<int>(br.bits(1));
      const int cnt = count[len];
      if (code - first < cnt) return symbol[static_cast<std::size_t>(index + (code - first))];
      index += cnt;
      first = (first + cnt) << 1;
      code <<= 1;
    }
    throw IoError("png: invalid huffman code");
  }
};

inline void inflate_block(BitReader& br, const Huffman& lit,
                          const Huffman& dist, std::vector<std::uint8_t>& out) {
  static constexpr std::uint16_t kLenBase[29] = {
      3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19,  23, 27,
      31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
  static constexpr std::uint8_t kLenExtra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1,
                                                 1, 1, 2, 2, 2, 2, 3, 3, 3, 3,
                                                 4, 4, 4, 4, 5, 5, 5, 5, 0};
  static constexpr std::uint32_t kDistBase[30] = {
      1,    2,    3,    4,    5,    7,     9,     13,    17,    25,
      33,   49,   65,   97,   129,  193,   257,   385,   513,   769,
      1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
  static constexpr std::uint8_t kDistExtra[30] = {
      0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4,  4,  5,  5,  6,
      6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

  for (;;) {
    const int sym = lit.decode(br);
    if (sym < 256) {
      out.push_back(static_cast<std::uint8_t>(sym));
    } else if (sym == 256) {
      return;
    } else {
      const int li = sym - 257;
      if (li >= 29) throw IoError("png: invalid length symbol");
      const std::size_t len = kLenBase[li] + br.bits(kLenExtra[li]);
      const int di = dist.decode(br);
      if (di >= 30) throw IoError("png: invalid distance symbol");
      const std::size_t d = kDistBase[di] + br.bits(kDistExtra[di]);
      if (d > out.size()) throw IoError("png: distance beyond output");
      for (std::size_t i = 0; i < len; ++i)
        out.push_back(out[out.size() - d]);
    }
  }
}

inline std::vector<std::uint8_t> inflate(const std::uint8_t* data,
                                         std::size_t size) {
  BitReader br(data, size);
  std::vector<std::uint8_t> out;
  for (;;) {
    const bool final = br.bits(1) != 0;
    const std::uint32_t type = br.bits(2);
    if (type == 0) {
      br.align_byte();
      const std::uint32_t len = br.byte() | (br.byte() << 8);
      const std::uint32_t nlen = br.byte() | (br.byte() << 8);
      if ((len ^ 0xFFFFu) != nlen) throw IoError("png: stored block LEN/NLEN mismatch");
      for (std::uint32_t i = 0; i < len; ++i) out.push_back(br.byte());
    } else if (type == 1 || type == 2) {
      Huffman lit, dist;
      if (type == 1) {
        std::uint8_t lens[288];
        for (int i = 0; i < 144; ++i) lens[i] = 8;
        for (int i = 144; i < 256; ++i) lens[i] = 9;
        for (int i = 256; i < 280; ++i) lens[i] = 7;
        for (int i = 280; i < 288; ++i) lens[i] = 8;
        lit.build(lens, 288);
        std::uint8_t dlens[30];
        for (int i = 0; i < 30; ++i) dlens[i] = 5;
        dist.build(dlens, 30);
      } else {
        const int hlit = static_cast<int>(br.bits(5)) + 257;
        const int hdist = static_cast<int>(br.bits(5)) + 1;
        const int hclen = static_cast<int>(br.bits(4)) + 4;
        static constexpr int kOrder[19] = {16, 17, 18, 0, 8,  7, 9,  6, 10, 5,
                                           11, 4,  12, 3, 13, 2, 14, 1, 15};
        std::uint8_t clens[19] = {};
        for (int i = 0; i < hclen; ++i)
          clens[kOrder[i]] = static_cast<std::uint8_t>(br.bits(3));
        Huffman cl;
        cl.build(clens, 19);
        std::uint8_t lens[288 + 32] = {};
        int n = 0;
        while (n < hlit + hdist) {
          const int sym = cl.decode(br);
          if (sym < 16) {
            lens[n++] = static_cast<std::uint8_t>(sym);
          } else if (sym == 16) {
            if (n == 0) throw IoError("png: repeat with no previous length");
            const int rep = 3 + static_cast<int>(br.bits(2));
            for (int i = 0; i < rep && n < hlit + hdist; ++i, ++n)
              lens[n] = lens[n - 1];
          } else if (sym == 17) {
            const int rep = 3 + static_cast<int>(br.bits(3));
            for (int i = 0; i < rep && n < hlit + hdist; ++i) lens[n++] = 0;
          } else {
            const int rep = 11 + static_cast<int>(br.bits(7));
            for (int i = 0; i < rep && n < hlit + hdist; ++i) lens[n++] = 0;
          }
        }
        lit.build(lens, hlit);
        dist.build(lens + hlit, hdist);
      }
      inflate_block(br, lit, dist, out);
    } else {
      throw IoError("png: reserved deflate block type");
    }
    if (final) break;
  }
  return out;
}

inline std::vector<std::uint8_t> zlib_decompress(const std::uint8_t* data,
                                                 std::size_t size) {
  if (size < 6) throw IoError("png: zlib stream too short");
  const std::uint8_t cmf = data[0], flg = data[1];
  if ((cmf & 0x0F) != 8) throw IoError("png: unsupported zlib method");
  if (flg & 0x20) throw IoError("png: preset dictionary not supported");
  if ((static_cast<unsigned>(cmf) * 256 + flg) % 31 != 0)
    throw IoError("png: bad zlib header check");
  auto out = inflate(data + 2, size - 6);
  const std::uint8_t* t = data + size - 4;
  const std::uint32_t expect = (static_cast<std::uint32_t>(t[0]) << 24) |
                               (static_cast<std::uint32_t>(t[1]) << 16) |
                               (static_cast<std::uint32_t>(t[2]) << 8) |
                               static_cast<std::uint32_t>(t[3]);
  if (adler32(out.data(), out.size()) != expect)
    throw IoError("png: adler32 mismatch");
  return out;
}

// Stored (uncompressed) deflate blocks wrapped in a zlib stream. Slower to
// read than real compression but byte-exact and dependency-free.
inline std::vector<std::uint8_t> zlib_compress_stored(
    const std::vector<std::uint8_t>& in) {
  std::vector<std::uint8_t> out{0x78, 0x01};
  std::size_t pos = 0;
  do {
    const std::size_t n = std::min<std::size_t>(in.size() - pos, 65535);
    const bool final = pos + n == in.size();
    out.push_back(final ? 1 : 0);
    out.push_back(static_cast<std::uint8_t>(n & 0xFF));
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(~n & 0xFF));
    out.push_back(static_cast<std::uint8_t>((~n >> 8) & 0xFF));
    out.insert(out.end(), in.begin() + static_cast<std::ptrdiff_t>(pos),
               in.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  } while (pos < in.size());
  const std::uint32_t a = adler32(in.data(), in.size());
  out.push_back(static_cast<std::uint8_t>(a >> 24));
  out.push_back(static_cast<std::uint8_t>((a >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((a >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>(a & 0xFF));
  return out;
}

inline void put_u32be(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>((x >> 16) & 0xFF));
  v.push_back(static_cast<std::uint8_t>((x >> 8) & 0xFF));
  v.push_back(static_cast<std::uint8_t>(x & 0xFF));
}

inline std::uint32_t get_u32be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) |
         static_cast<std::uint32_t>(p[3]);
}

inline void png_chunk(std::vector<std::uint8_t>& out, const char type[4],
                      const std::vector<std::uint8_t>& payload) {
  put_u32be(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  put_u32be(out, crc32(out.data() + crc_start, out.size() - crc_start));
}

static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G',
                                            '\r', '\n', 0x1A, '\n'};

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.height <= 0 || img.width <= 0)
    throw InvalidArgument("png: empty image");
  std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);

  std::vector<std::uint8_t> ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(img.width));
  put_u32be(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor RGB
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  png_chunk(out, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (1 + img.width * 3));
  std::size_t i = 0;
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter: none
    for (int k = 0; k < img.width * 3; ++k)
      raw.push_back(quantize8(img.data[i++]));
  }
  png_chunk(out, "IDAT", zlib_compress_stored(raw));
  png_chunk(out, "IEND", {});
  return out;
}

inline std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

inline Image decode_png(const std::vector<std::uint8_t>& b) {
  if (b.size() < 8 || std::memcmp(b.data(), kPngSig, 8) != 0)
    throw IoError("png: bad signature");
  std::size_t pos = 8;
  int w = 0, h = 0;
  bool have_ihdr = false;
  std::vector<std::uint8_t> idat;
  while (pos + 12 <= b.size()) {
    const std::uint32_t len = get_u32be(&b[pos]);
    if (pos + 12 + len > b.size()) throw IoError("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(&b[pos + 4]);
    const std::uint8_t* payload = &b[pos + 8];
    const std::uint32_t crc_expect = get_u32be(&b[pos + 8 + len]);
    if (crc32(&b[pos + 4], 4 + len) != crc_expect)
      throw IoError("png: chunk crc mismatch");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError("png: bad IHDR");
      w = static_cast<int>(get_u32be(payload));
      h = static_cast<int>(get_u32be(payload + 4));
      const int depth = payload[8], color = payload[9], interlace = payload[12];
      if (w <= 0 || h <= 0) throw IoError("png: bad dimensions");
      if (depth != 8 || color != 2)
        throw IoError("png: unsupported format (8-bit RGB only)");
      if (interlace != 0) throw IoError("png: interlacing not supported");
      have_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!have_ihdr) throw IoError("png: missing IHDR");
  if (idat.empty()) throw IoError("png: missing IDAT");

  const auto raw = zlib_decompress(idat.data(), idat.size());
  const std::size_t stride = static_cast<std::size_t>(w) * 3;
  if (raw.size() != static_cast<std::size_t>(h) * (stride + 1))
    throw IoError("png: decompressed size mismatch");

  std::vector<std::uint8_t> pix(static_cast<std::size_t>(h) * stride);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
    const std::uint8_t* src = &raw[static_cast<std::size_t>(y) * (stride + 1) + 1];
    std::uint8_t* dst = &pix[static_cast<std::size_t>(y) * stride];
    const std::uint8_t* up = y > 0 ? dst - stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= 3 ? dst[i - 3] : 0;
      const int u = up ? up[i] : 0;
      const int c = (up && i >= 3) ? up[i - 3] : 0;
      switch (filter) {
        case 0: dst[i] = src[i]; break;
        case 1: dst[i] = static_cast<std::uint8_t>(src[i] + a); break;
        case 2: dst[i] = static_cast<std::uint8_t>(src[i] + u); break;
        case 3: dst[i] = static_cast<std::uint8_t>(src[i] + (a + u) / 2); break;
        case 4: dst[i] = static_cast<std::uint8_t>(src[i] + paeth(a, u, c)); break;
        default: throw IoError("png: unknown filter type");
      }
    }
  }
  Image img(h, w);
  for (std::size_t i = 0; i < pix.size(); ++i)
    img.data[i] = static_cast<double>(pix[i]) / 255.0;
  return img;
}

}  // namespace detail

inline Image read_ppm(const std::string& path) {
  return detail::decode_ppm(detail::read_file_bytes(path));
}

inline void write_ppm(const Image& img, const std::string& path) {
  detail::write_file_bytes(path, detail::encode_ppm(img));
}

inline Image read_png(const std::string& path) {
  return detail::decode_png(detail::read_file_bytes(path));
}

inline void write_png(const Image& img, const std::string& path) {
  detail::write_file_bytes(path, detail::encode_png(img));
}

// Dispatches on content (magic bytes), not extension.
inline Image read_image(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6')
    return detail::decode_ppm(bytes);
  if (bytes.size() >= 8 &&
      std::memcmp(bytes.data(), detail::kPngSig, 8) == 0)
    return detail::decode_png(bytes);
  throw IoError("unsupported image format: " + path);
}

// Dispatches on extension; anything that is not .png is written as PPM.
inline void write_image(const Image& img, const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".png" || ext == ".PNG")
    write_png(img, path);
  else
    write_ppm(img, path);
}

}  // namespace dslic

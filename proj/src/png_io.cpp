#include "fewfont/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace fewfont {

namespace {

const uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint32_t get_u32be(const uint8_t* p) {
    return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | uint32_t(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& payload) {
    put_u32be(out, uint32_t(payload.size()));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = uint32_t(::crc32(0, out.data() + start, uInt(out.size() - start)));
    put_u32be(out, crc);
}

std::vector<uint8_t> deflate_bytes(const std::vector<uint8_t>& raw) {
    uLongf bound = ::compressBound(uLong(raw.size()));
    std::vector<uint8_t> out(bound);
    if (::compress2(out.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw ValueError("png: deflate failed");
    out.resize(bound);
    return out;
}

std::vector<uint8_t> inflate_bytes(const std::vector<uint8_t>& in, std::size_t expected) {
    std::vector<uint8_t> out(expected);
    uLongf len = uLongf(expected);
    int rc = ::uncompress(out.data(), &len, in.data(), uLong(in.size()));
    if (rc != Z_OK || len != expected) throw ParseError("png: corrupt compressed data");
    return out;
}

uint8_t paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return uint8_t(a);
    if (pb <= pc) return uint8_t(b);
    return uint8_t(c);
}

}  // namespace

std::vector<uint8_t> encode_png(const GrayImage& img) {
    if (img.width < 1 || img.height < 1 ||
        img.pixels.size() != std::size_t(img.width) * std::size_t(img.height))
        throw ValueError("png: bad image dimensions");

    std::vector<uint8_t> out(kSignature, kSignature + 8);

    std::vector<uint8_t> ihdr;
    put_u32be(ihdr, uint32_t(img.width));
    put_u32be(ihdr, uint32_t(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // adaptive filtering
    ihdr.push_back(0);  // no interlace
    put_chunk(out, "IHDR", ihdr);

    std::vector<uint8_t> raw;
    raw.reserve(std::size_t(img.height) * (std::size_t(img.width) + 1));
    for (int y = 0; y < img.height; y++) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), img.pixels.begin() + std::size_t(y) * img.width,
                   img.pixels.begin() + std::size_t(y + 1) * img.width);
    }
    put_chunk(out, "IDAT", deflate_bytes(raw));
    put_chunk(out, "IEND", {});
    return out;
}

GrayImage decode_png(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw ParseError("png: bad signature");

    GrayImage img;
    std::vector<uint8_t> idat;
    std::size_t pos = 8;
    bool seen_ihdr = false, seen_iend = false;
    while (pos + 8 <= bytes.size() && !seen_iend) {
        uint32_t len = get_u32be(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw ParseError("png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uint8_t* payload = bytes.data() + pos + 8;
        uint32_t crc = get_u32be(bytes.data() + pos + 8 + len);
        uint32_t actual = uint32_t(::crc32(0, bytes.data() + pos + 4, uInt(len + 4)));
        if (crc != actual) throw ParseError("png: chunk crc mismatch");

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw ParseError("png: bad IHDR");
            img.width = int(get_u32be(payload));
            img.height = int(get_u32be(payload + 4));
            if (payload[8] != 8 || payload[9] != 0)
                throw ParseError("png: only 8-bit grayscale is supported");
            if (payload[12] != 0) throw ParseError("png: interlaced images not supported");
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || !seen_iend || img.width < 1 || img.height < 1)
        throw ParseError("png: missing required chunks");

    std::size_t stride = std::size_t(img.width) + 1;
    std::vector<uint8_t> raw = inflate_bytes(idat, stride * std::size_t(img.height));

    img.pixels.resize(std::size_t(img.width) * std::size_t(img.height));
    std::vector<uint8_t> prev(std::size_t(img.width), 0);
    for (int y = 0; y < img.height; y++) {
        uint8_t filter = raw[std::size_t(y) * stride];
        const uint8_t* src = raw.data() + std::size_t(y) * stride + 1;
        uint8_t* dst = img.pixels.data() + std::size_t(y) * img.width;
        for (int x = 0; x < img.width; x++) {
            int a = x > 0 ? dst[x - 1] : 0;
            int b = prev[std::size_t(x)];
            int c = x > 0 ? prev[std::size_t(x) - 1] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw ParseError("png: unknown filter type");
            }
            dst[x] = uint8_t(v);
        }
        std::memcpy(prev.data(), dst, std::size_t(img.width));
    }
    return img;
}

void write_png(const std::string& path, const GrayImage& img) {
    auto bytes = encode_png(img);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write png: " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!os) throw DataError("short write: " + path);
}

GrayImage read_png(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open png: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

}  // namespace fewfont

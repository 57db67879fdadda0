#include "streammem/image_io.hpp"

#include "streammem/error.hpp"
#include "streammem/frame.hpp"

#include <fmt/format.h>
#include <png.h>

#include <cstring>
#include <fstream>
#include <sstream>

namespace streammem {

namespace {

png_image blank_image()
{
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    return image;
}

GrayImage finish_gray(png_image& image, const std::string& what)
{
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw FormatError(fmt::format("{}: cannot decode png: {}", what, msg));
    }
    GrayImage out;
    out.width = static_cast<int>(image.width);
    out.height = static_cast<int>(image.height);
    out.pixels = to_grayscale(rgb, out.width, out.height);
    return out;
}

} // namespace

GrayImage read_png_gray(const std::filesystem::path& path)
{
    png_image image = blank_image();
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw FormatError(fmt::format("{}: cannot decode png: {}", path.string(), image.message));
    }
    return finish_gray(image, path.string());
}

GrayImage decode_png_gray(std::string_view bytes)
{
    png_image image = blank_image();
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw FormatError(fmt::format("in-memory image: cannot decode png: {}", image.message));
    }
    return finish_gray(image, "in-memory image");
}

void write_png_gray(const std::filesystem::path& path, const GrayImage& gray)
{
    png_image image = blank_image();
    image.width = static_cast<png_uint_32>(gray.width);
    image.height = static_cast<png_uint_32>(gray.height);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, gray.pixels.data(), 0, nullptr)) {
        throw DataError(fmt::format("{}: cannot write png: {}", path.string(), image.message));
    }
}

std::string encode_png_gray(const GrayImage& gray)
{
    png_image image = blank_image();
    image.width = static_cast<png_uint_32>(gray.width);
    image.height = static_cast<png_uint_32>(gray.height);
    image.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(image, size, 0, gray.pixels.data(), 0, nullptr)) {
        throw DataError(fmt::format("cannot size png: {}", image.message));
    }
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, gray.pixels.data(), 0, nullptr)) {
        throw DataError(fmt::format("cannot encode png: {}", image.message));
    }
    out.resize(size);
    return out;
}

std::string read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(fmt::format("{}: cannot open", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

std::string base64_encode(std::string_view bytes)
{
    static constexpr char kAlphabet[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const auto n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                       (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
        out += kAlphabet[(n >> 18) & 63];
        out += kAlphabet[(n >> 12) & 63];
        out += kAlphabet[(n >> 6) & 63];
        out += kAlphabet[n & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest > 0) {
        std::uint32_t n = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16;
        if (rest == 2) {
            n |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8;
        }
        out += kAlphabet[(n >> 18) & 63];
        out += kAlphabet[(n >> 12) & 63];
        out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text)
{
    const auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') {
            return c - 'A';
        }
        if (c >= 'a' && c <= 'z') {
            return c - 'a' + 26;
        }
        if (c >= '0' && c <= '9') {
            return c - '0' + 52;
        }
        if (c == '+') {
            return 62;
        }
        if (c == '/') {
            return 63;
        }
        return -1;
    };
    std::string out;
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') {
            break;
        }
        const int v = value(c);
        if (v < 0) {
            throw FormatError(fmt::format("invalid base64 character '{}'", c));
        }
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out += static_cast<char>((acc >> bits) & 0xFF);
        }
    }
    return out;
}

} // namespace streammem

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace streammem {

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};

// Decodes any PNG and converts it to grayscale with BT.601 weights.
GrayImage read_png_gray(const std::filesystem::path& path);

GrayImage decode_png_gray(std::string_view bytes);

void write_png_gray(const std::filesystem::path& path, const GrayImage& image);
std::string encode_png_gray(const GrayImage& image);

std::string read_file_bytes(const std::filesystem::path& path);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

} // namespace streammem

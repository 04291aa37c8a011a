#pragma once

#include "avatarforge/render.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace avatarforge {

// 8-bit image, rows top to bottom, channels interleaved.
struct Image8 {
  int width = 0, height = 0, channels = 0;
  std::vector<uint8_t> pixels;

  uint8_t at(int x, int y, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
};

void write_png(const std::filesystem::path& path, const Image8& image);
std::vector<uint8_t> encode_png(const Image8& image);
Image8 read_png(const std::filesystem::path& path);
Image8 decode_png(const std::vector<uint8_t>& bytes);

// Stand-in for a latent decoder: channels 0..2 mapped from [-1, 1] to RGB.
Image8 mock_decode(const LatentImage& latent);
// Accumulated opacity as an 8-bit gray image.
Image8 opacity_image(const LatentImage& latent);
// Nearest-neighbour upscale by an integer factor.
Image8 upscale(const Image8& image, int factor);

// Raw latent container ("AVIM"): features [4, H, W] and opacity [H, W], f64.
void save_latent(const LatentImage& latent, const std::filesystem::path& path);
LatentImage load_latent(const std::filesystem::path& path);

}  // namespace avatarforge

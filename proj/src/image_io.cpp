#include "avatarforge/image_io.hpp"

#include "avatarforge/binio.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace avatarforge {

namespace {

int color_type_for(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGBA;
    default: throw InputError("png: unsupported channel count " + std::to_string(channels));
  }
}

struct ReadCursor {
  const std::vector<uint8_t>* bytes;
  size_t pos;
};

[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  auto* slot = static_cast<std::string*>(png_get_error_ptr(png));
  if (slot) *slot = message;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

uint8_t to_byte(double v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

std::vector<uint8_t> encode_png(const Image8& image) {
  if (image.width <= 0 || image.height <= 0) throw InputError("png: empty image");
  if (image.pixels.size() != static_cast<size_t>(image.width) * image.height * image.channels)
    throw InputError("png: pixel buffer does not match the image size");
  const int color_type = color_type_for(image.channels);

  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  if (!png) throw Error("png: out of memory");
  png_infop info = png_create_info_struct(png);
  std::vector<uint8_t> out;
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png: " + message);
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* v = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(p));
        v->insert(v->end(), data, data + n);
      },
      nullptr);
  png_set_IHDR(png, info, image.width, image.height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  for (int y = 0; y < image.height; ++y)
    rows[y] = const_cast<png_bytep>(image.pixels.data() + static_cast<size_t>(y) * image.width * image.channels);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  const std::vector<uint8_t> bytes = encode_png(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + path.string());
}

Image8 decode_png(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw InputError("png: bad signature");
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  if (!png) throw Error("png: out of memory");
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{&bytes, 0};
  Image8 image;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("png: " + message);
  }
  png_set_read_fn(png, &cursor, [](png_structp p, png_bytep data, png_size_t n) {
    auto* c = static_cast<ReadCursor*>(png_get_io_ptr(p));
    if (n > c->bytes->size() - c->pos) png_error(p, "truncated stream");
    std::memcpy(data, c->bytes->data() + c->pos, n);
    c->pos += n;
  });
  png_read_png(png, info, PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND, nullptr);
  image.width = static_cast<int>(png_get_image_width(png, info));
  image.height = static_cast<int>(png_get_image_height(png, info));
  image.channels = png_get_channels(png, info);
  png_bytepp rows = png_get_rows(png, info);
  const size_t stride = static_cast<size_t>(image.width) * image.channels;
  image.pixels.resize(stride * image.height);
  for (int y = 0; y < image.height; ++y) std::memcpy(image.pixels.data() + y * stride, rows[y], stride);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

Image8 read_png(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path.string());
  const std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

Image8 mock_decode(const LatentImage& latent) {
  Image8 out{latent.width, latent.height, 3, {}};
  out.pixels.resize(static_cast<size_t>(latent.pixels()) * 3);
  for (int p = 0; p < latent.pixels(); ++p)
    for (int c = 0; c < 3; ++c) out.pixels[3 * p + c] = to_byte(0.5 * (latent.features(c, p) + 1.0));
  return out;
}

Image8 opacity_image(const LatentImage& latent) {
  Image8 out{latent.width, latent.height, 1, {}};
  out.pixels.resize(latent.pixels());
  for (int p = 0; p < latent.pixels(); ++p) out.pixels[p] = to_byte(latent.opacity[p]);
  return out;
}

Image8 upscale(const Image8& image, int factor) {
  if (factor < 1) throw InputError("upscale factor must be positive");
  Image8 out{image.width * factor, image.height * factor, image.channels, {}};
  out.pixels.resize(static_cast<size_t>(out.width) * out.height * out.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        out.pixels[(static_cast<size_t>(y) * out.width + x) * out.channels + c] = image.at(x / factor, y / factor, c);
  return out;
}

void save_latent(const LatentImage& latent, const std::filesystem::path& path) {
  TensorFile file;
  file.magic = "AVIM";
  file.metadata = nlohmann::json{{"space", to_string(latent.space)}}.dump();
  const auto h = static_cast<uint64_t>(latent.height), w = static_cast<uint64_t>(latent.width);
  std::vector<double> features(kLatentChannels * h * w);
  for (int c = 0; c < kLatentChannels; ++c)
    for (int p = 0; p < latent.pixels(); ++p) features[c * h * w + p] = latent.features(c, p);
  file.tensors.push_back({"features", {kLatentChannels, h, w}, features});
  file.tensors.push_back({"opacity", {h, w}, std::vector<double>(latent.opacity.data(), latent.opacity.data() + h * w)});
  write_tensor_file(path, file);
}

LatentImage load_latent(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path, "AVIM");
  const Tensor& f = file.get("features");
  const Tensor& o = file.get("opacity");
  if (f.shape.size() != 3 || f.shape[0] != kLatentChannels || o.shape.size() != 2 || o.shape[0] != f.shape[1] ||
      o.shape[1] != f.shape[2])
    throw InputError("AVIM: inconsistent shapes");
  const auto meta = nlohmann::json::parse(file.metadata, nullptr, false);
  const Space space = meta.is_object() && meta.contains("space") ? space_from_string(meta["space"].get<std::string>())
                                                                 : Space::kCanonical;
  LatentImage img = LatentImage::zeros(static_cast<int>(f.shape[2]), static_cast<int>(f.shape[1]), space);
  const std::vector<double> fv = f.as_f64(), ov = o.as_f64();
  for (int c = 0; c < kLatentChannels; ++c)
    for (int p = 0; p < img.pixels(); ++p) img.features(c, p) = fv[static_cast<size_t>(c) * img.pixels() + p];
  for (int p = 0; p < img.pixels(); ++p) img.opacity[p] = ov[p];
  return img;
}

}  // namespace avatarforge

#include "fknet/io/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "fknet/io/binary_io.hpp"

namespace fknet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string lower_extension(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot == std::string::npos) return {};
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* message = static_cast<std::string*>(png_get_error_ptr(png));
  if (message) *message = msg;
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

Image read_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw std::runtime_error("cannot open " + path);
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  Image image;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG decode failed for " + path + ": " + message);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const auto depth = png_get_bit_depth(png, info);
  const auto channels = png_get_channels(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * height);
  rows.resize(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  image = Image(height, width, channels);
  const float scale = depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t i = 0; i < width * channels; ++i) {
      unsigned v = depth == 16 ? (rows[y][2 * i] << 8) | rows[y][2 * i + 1] : rows[y][i];
      image.values[y * width * channels + i] = static_cast<float>(v) * scale;
    }
  }
  return image;
}

unsigned quantize(float v, unsigned maxval) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned>(std::lround(c * static_cast<float>(maxval)));
}

void check_writable(const Image& image, int bit_depth) {
  if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("only 1- or 3-channel images can be written");
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("bit depth must be 8 or 16");
  if (image.values.size() != image.height * image.width * image.channels) throw std::invalid_argument("image buffer size mismatch");
}

std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw FormatError("truncated PNM header");
}

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto magic = next_token(in);
  std::size_t channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw FormatError(path + ": unsupported PNM magic " + magic);
  const auto width = std::stoul(next_token(in));
  const auto height = std::stoul(next_token(in));
  const auto maxval = std::stoul(next_token(in));
  if (maxval == 0 || maxval > 65535) throw FormatError(path + ": bad PNM maxval");
  in.get();
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(width * height * channels * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw FormatError(path + ": truncated PNM data");
  Image image(height, width, channels);
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const unsigned v = bytes_per == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    image.values[i] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return image;
}

}  // namespace

Image read_image(const std::string& path) {
  const auto ext = lower_extension(path);
  if (ext == "png") return read_png(path);
  if (ext == "pgm" || ext == "ppm" || ext == "pnm") return read_pnm(path);
  if (ext == "pfm") return read_pfm(path);
  throw FormatError("unsupported image extension for " + path);
}

void write_png(const std::string& path, const Image& image, int bit_depth) {
  check_writable(image, bit_depth);
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot open " + path + " for writing");
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  const std::size_t bytes_per = bit_depth == 16 ? 2 : 1;
  const std::size_t row_len = image.width * image.channels * bytes_per;
  std::vector<std::uint8_t> buffer(row_len * image.height);
  const unsigned maxval = bit_depth == 16 ? 65535u : 255u;
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const unsigned q = quantize(image.values[i], maxval);
    if (bytes_per == 2) {
      buffer[2 * i] = static_cast<std::uint8_t>(q >> 8);
      buffer[2 * i + 1] = static_cast<std::uint8_t>(q & 0xFF);
    } else {
      buffer[i] = static_cast<std::uint8_t>(q);
    }
  }
  std::vector<png_bytep> rows(image.height);
  for (std::size_t y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * row_len;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encode failed for " + path + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), bit_depth,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_pnm(const std::string& path, const Image& image, int bit_depth) {
  check_writable(image, bit_depth);
  const unsigned maxval = bit_depth == 16 ? 65535u : 255u;
  std::ostringstream header;
  header << (image.channels == 3 ? "P6" : "P5") << "\n" << image.width << " " << image.height << "\n" << maxval << "\n";
  ByteWriter w;
  w.put_tag(header.str());
  for (float v : image.values) {
    const unsigned q = quantize(v, maxval);
    if (bit_depth == 16) {
      w.put(static_cast<std::uint8_t>(q >> 8));
      w.put(static_cast<std::uint8_t>(q & 0xFF));
    } else {
      w.put(static_cast<std::uint8_t>(q));
    }
  }
  write_file_bytes(path, w.bytes());
}

void write_image(const std::string& path, const Image& image, int bit_depth) {
  const auto ext = lower_extension(path);
  if (ext == "png") return write_png(path, image, bit_depth);
  if (ext == "pgm" || ext == "ppm" || ext == "pnm") return write_pnm(path, image, bit_depth);
  if (ext == "pfm") return write_pfm(path, image);
  throw std::invalid_argument("unsupported image extension for " + path);
}

void write_pfm(const std::string& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("PFM needs 1 or 3 channels");
  ByteWriter w;
  w.put_tag(std::string(image.channels == 3 ? "PF" : "Pf") + "\n" + std::to_string(image.width) + " " +
            std::to_string(image.height) + "\n-1.0\n");
  for (std::size_t y = image.height; y-- > 0;) {
    for (std::size_t i = 0; i < image.width * image.channels; ++i) w.put_f32(image.values[y * image.width * image.channels + i]);
  }
  write_file_bytes(path, w.bytes());
}

Image read_pfm(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  std::string head(bytes.begin(), bytes.begin() + std::min<std::size_t>(bytes.size(), 128));
  std::istringstream hs(head);
  std::string magic;
  std::size_t width = 0, height = 0;
  double scale = 0;
  hs >> magic >> width >> height >> scale;
  if (!hs || (magic != "PF" && magic != "Pf")) throw FormatError(path + ": not a PFM file");
  if (scale >= 0) throw FormatError(path + ": big-endian PFM is not supported");
  const auto offset = static_cast<std::size_t>(hs.tellg()) + 1;
  const std::size_t channels = magic == "PF" ? 3 : 1;
  Image image(height, width, channels);
  ByteReader r(std::span<const std::uint8_t>(bytes).subspan(std::min(offset, bytes.size())));
  for (std::size_t y = height; y-- > 0;) {
    for (std::size_t i = 0; i < width * channels; ++i) image.values[y * width * channels + i] = r.get_f32("PFM data");
  }
  return image;
}

Tensor<float> image_to_chw(const Image& image, std::size_t channels) {
  if (image.channels != channels && image.channels != 1) {
    throw ContractViolation("image has " + std::to_string(image.channels) + " channels, expected " +
                            std::to_string(channels));
  }
  Tensor<float> out({channels, image.height, image.width});
  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t src_c = image.channels == 1 ? 0 : c;
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x)
        out[(c * image.height + y) * image.width + x] = image.at(y, x, src_c);
  }
  return out;
}

Image chw_to_image(const Tensor<float>& chw) {
  if (chw.dim() != 3) throw ContractViolation("expected a C x H x W tensor, got " + shape_str(chw.shape()));
  const auto C = chw.size(0), H = chw.size(1), W = chw.size(2);
  Image image(H, W, C);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) image.at(y, x, c) = chw[(c * H + y) * W + x];
  return image;
}

}  // namespace fknet

#include "ediv/png_io.hpp"

#include <png.h>

#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace ediv::image {

RasterImage read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw std::runtime_error("read_png " + path.string() + ": " + img.message);
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  const png_color black{0, 0, 0};
  if (!png_image_finish_read(&img, &black, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("read_png " + path.string() + ": " + msg);
  }
  RasterImage out(img.width, img.height, gray ? 1 : 3, Range::byte);
  for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = buf[i];
  return out;
}

void write_png(const std::filesystem::path& path, const RasterImage& img) {
  img.validate();
  const RasterImage bytes = quantize_u8(img);
  std::vector<png_byte> buf(bytes.pixels.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<png_byte>(bytes.pixels[i]);
  png_image out;
  std::memset(&out, 0, sizeof out);
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(img.width);
  out.height = static_cast<png_uint_32>(img.height);
  out.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.c_str(), 0, buf.data(), 0, nullptr))
    throw std::runtime_error("write_png " + path.string() + ": " + out.message);
}

}  // namespace ediv::image

#include "adlite/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#ifdef ADLITE_HAVE_PNG
#include <png.h>
#endif
#ifdef ADLITE_HAVE_JPEG
#include <jpeglib.h>
#endif

namespace adlite {

namespace fs = std::filesystem;

bool png_supported() {
#ifdef ADLITE_HAVE_PNG
  return true;
#else
  return false;
#endif
}

bool jpeg_supported() {
#ifdef ADLITE_HAVE_JPEG
  return true;
#else
  return false;
#endif
}

namespace {

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Interleaved HWC -> planar CHW.
Image from_interleaved(std::size_t w, std::size_t h, std::size_t c, const std::uint8_t* src) {
  Image img(w, h, c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) img.at(k, y, x) = src[(y * w + x) * c + k];
    }
  }
  return img;
}

std::vector<std::uint8_t> to_interleaved(const Image& img) {
  std::vector<std::uint8_t> out(img.pixels.size());
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t k = 0; k < img.channels; ++k) {
        out[(y * img.width + x) * img.channels + k] = img.at(k, y, x);
      }
    }
  }
  return out;
}

Image decode_pnm(const fs::path& path) {
  const auto bytes = read_all(path);
  std::size_t pos = 0;
  auto bad = [&](const std::string& why) {
    return DatasetError("cannot decode " + path.string() + ": " + why);
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw bad("malformed header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw bad("not a binary PGM/PPM");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  const std::size_t w = read_int(), h = read_int(), maxval = read_int();
  if (maxval != 255) throw bad("only 8-bit PNM is supported");
  ++pos;  // single whitespace after maxval
  if (w == 0 || h == 0) throw bad("zero-sized image");
  if (bytes.size() < pos + w * h * channels) throw bad("truncated pixel data");
  return from_interleaved(w, h, channels, bytes.data() + pos);
}

void write_pnm(const fs::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw IoError("PNM needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
  const auto data = to_interleaved(img);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path.string());
}

#ifdef ADLITE_HAVE_PNG
Image decode_png(const fs::path& path) {
  const auto bytes = read_all(path);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw DatasetError("cannot decode " + path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = color ? 3 : 1;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&png);
    throw DatasetError("cannot decode " + path.string() + ": " + png.message);
  }
  if (png.width == 0 || png.height == 0) throw DatasetError("zero-sized image " + path.string());
  return from_interleaved(png.width, png.height, channels, buf.data());
}

void write_png(const fs::path& path, const Image& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto data = to_interleaved(img);
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, data.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + png.message);
  }
}
#endif

#ifdef ADLITE_HAVE_JPEG
struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(const fs::path& path) {
  const auto bytes = read_all(path);
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  std::vector<std::uint8_t> buf;
  std::size_t w = 0, h = 0, c = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DatasetError("cannot decode " + path.string() + ": invalid JPEG");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  w = cinfo.output_width;
  h = cinfo.output_height;
  c = static_cast<std::size_t>(cinfo.output_components);
  buf.resize(w * h * c);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buf.data() + cinfo.output_scanline * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  if (w == 0 || h == 0) throw DatasetError("zero-sized image " + path.string());
  return from_interleaved(w, h, c, buf.data());
}
#endif

}  // namespace

Image decode_image(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file " + path.string());
  const std::string ext = lower_ext(path);
  if (ext == ".pgm" || ext == ".ppm") return decode_pnm(path);
#ifdef ADLITE_HAVE_PNG
  if (ext == ".png") return decode_png(path);
#endif
#ifdef ADLITE_HAVE_JPEG
  if (ext == ".jpg" || ext == ".jpeg") return decode_jpeg(path);
#endif
  throw DatasetError("unsupported image format: " + path.string());
}

void write_image(const fs::path& path, const Image& img) {
  const std::string ext = lower_ext(path);
  if (ext == ".pgm" || ext == ".ppm") return write_pnm(path, img);
#ifdef ADLITE_HAVE_PNG
  if (ext == ".png") return write_png(path, img);
#endif
  throw IoError("cannot encode " + path.string() + " (unsupported extension or codec missing)");
}

}  // namespace adlite

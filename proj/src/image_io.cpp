#include "csar/image_io.hpp"

#include <png.h>

#include <array>
#include <cctype>
#include <fstream>
#include <vector>

namespace csar {

namespace {

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

struct PgmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
};

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.peek();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int value = -1;
  if (!(in >> value) || value <= 0) throw InputError("malformed PGM header in " + quoted(path));
  return value;
}

PgmHeader read_pgm_header(std::istream& in, const std::filesystem::path& path) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw InputError("not a binary PGM (P5): " + quoted(path));
  PgmHeader h;
  h.width = read_header_int(in, path);
  h.height = read_header_int(in, path);
  h.maxval = read_header_int(in, path);
  if (h.maxval > 255) throw InputError("only 8-bit PGM is supported: " + quoted(path));
  in.get();  // single whitespace before the raster
  return h;
}

bool has_png_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<unsigned char, 8> sig{};
  in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  return in && png_sig_cmp(sig.data(), 0, sig.size()) == 0;
}

// RAII wrapper for the libpng simplified API.
struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

void begin_png(PngImage& png, const std::filesystem::path& path) {
  if (!png_image_begin_read_from_file(&png.image, path.string().c_str())) {
    throw InputError("cannot decode PNG " + quoted(path) + ": " + png.image.message);
  }
  if (png.image.format != PNG_FORMAT_GRAY) {
    throw InputError("only 8-bit grayscale PNG is supported: " + quoted(path));
  }
}

}  // namespace

Frame read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + quoted(path));
  const auto h = read_pgm_header(in, path);
  std::vector<unsigned char> raw(std::size_t(h.width) * h.height);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!in) throw InputError("truncated PGM raster in " + quoted(path));
  Frame f(h.height, h.width);
  const double scale = 255.0 / h.maxval;
  for (std::size_t i = 0; i < raw.size(); ++i) f.data()[i] = std::min(255.0, raw[i] * scale);
  return f;
}

Frame read_png(const std::filesystem::path& path) {
  PngImage png;
  begin_png(png, path);
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, raw.data(), 0, nullptr)) {
    throw InputError("cannot decode PNG " + quoted(path) + ": " + png.image.message);
  }
  Frame f(png.image.height, png.image.width);
  for (std::size_t i = 0; i < raw.size(); ++i) f.data()[i] = raw[i];
  return f;
}

Frame read_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw InputError("not a file: " + quoted(path));
  return has_png_signature(path) ? read_png(path) : read_pgm(path);
}

ImageSize read_image_size(const std::filesystem::path& path) {
  if (has_png_signature(path)) {
    PngImage png;
    begin_png(png, path);
    return {int(png.image.width), int(png.image.height)};
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + quoted(path));
  const auto h = read_pgm_header(in, path);
  return {h.width, h.height};
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + quoted(path));
  out << "P5\n" << frame.cols() << ' ' << frame.rows() << "\n255\n";
  const Image<std::uint8_t> q = quantize(frame);
  out.write(reinterpret_cast<const char*>(q.data()), std::streamsize(q.size()));
  if (!out) throw InputError("failed writing " + quoted(path));
}

}  // namespace csar

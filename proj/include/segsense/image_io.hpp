#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "segsense/errors.hpp"
#include "segsense/mask.hpp"

namespace segsense {

namespace fs = std::filesystem;

namespace detail {

inline GrayImage read_png_gray(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError("cannot read PNG '" + path.string() + "': " + image.message);
  }
  if (image.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA | PNG_FORMAT_FLAG_LINEAR)) {
    png_image_free(&image);
    throw DataError("'" + path.string() + "' is not an 8-bit grayscale PNG");
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  return GrayImage(image.width, image.height, std::move(buffer));
}

inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline GrayImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5" && magic != "P2") {
    throw DataError("'" + path.string() + "' is not a grayscale PGM (magic '" + magic + "')");
  }
  std::size_t w = 0, h = 0;
  int maxval = 0;
  skip_pnm_space(in);
  in >> w;
  skip_pnm_space(in);
  in >> h;
  skip_pnm_space(in);
  in >> maxval;
  if (!in || w == 0 || h == 0 || maxval <= 0 || maxval > 255) {
    throw DataError("'" + path.string() + "' has an unsupported PGM header (8-bit only)");
  }
  std::vector<std::uint8_t> data(w * h);
  if (magic == "P5") {
    in.get();
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  } else {
    for (auto& v : data) {
      int x = 0;
      in >> x;
      v = static_cast<std::uint8_t>(std::clamp(x, 0, maxval));
    }
  }
  if (!in) throw DataError("'" + path.string() + "' is truncated");
  if (maxval != 255) {
    for (auto& v : data) v = static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
  }
  return GrayImage(w, h, std::move(data));
}

}  // namespace detail

inline bool is_raster_path(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm";
}

/// Reads an 8-bit grayscale PNG or PGM.
inline GrayImage load_gray(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw DataError("no such file '" + path.string() + "'");
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm") return detail::read_pgm(path);
  if (ext == ".png") return detail::read_png_gray(path);
  throw DataError("unsupported raster format '" + path.string() + "' (expected .png or .pgm)");
}

inline void save_gray(const GrayImage& img, const fs::path& path) {
  auto ext = path.extension().string();
  if (ext == ".pgm") {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.values().data()),
              static_cast<std::streamsize>(img.size()));
    if (!out) throw DataError("failed writing '" + path.string() + "'");
    return;
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.values().data(), 0, nullptr)) {
    throw DataError("failed writing PNG '" + path.string() + "': " + image.message);
  }
}

/// 0/1 mask to 0/255 raster.
inline GrayImage to_gray(const Mask& m) {
  std::vector<std::uint8_t> data(m.size());
  std::transform(m.values().begin(), m.values().end(), data.begin(),
                 [](std::uint8_t v) -> std::uint8_t { return v ? 255 : 0; });
  return GrayImage(m.width(), m.height(), std::move(data));
}

/// Probabilities scaled to 0..255 with rounding.
inline GrayImage to_gray(const SoftMask& m) {
  std::vector<std::uint8_t> data(m.size());
  std::transform(m.values().begin(), m.values().end(), data.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
  });
  return GrayImage(m.width(), m.height(), std::move(data));
}

inline SoftMask to_soft(const GrayImage& img) {
  std::vector<double> data(img.size());
  std::transform(img.values().begin(), img.values().end(), data.begin(),
                 [](std::uint8_t v) { return v / 255.0; });
  return SoftMask(img.width(), img.height(), std::move(data));
}

inline Mask load_mask(const fs::path& path, int cutoff = kDefaultBinaryCutoff) {
  Mask m = to_binary(load_gray(path), cutoff);
  m.set_source_id(path.stem().string());
  return m;
}

/// Numeric suffix of a slice file stem such as "slice_0012"; -1 if absent.
inline long slice_index(const fs::path& p) {
  const std::string stem = p.stem().string();
  auto pos = stem.find_last_not_of("0123456789");
  if (pos == stem.size() - 1) return -1;
  const std::string digits = stem.substr(pos == std::string::npos ? 0 : pos + 1);
  long value = -1;
  std::from_chars(digits.data(), digits.data() + digits.size(), value);
  return value;
}

/// Loads `<dir>/slice_<NNNN>.{png,pgm}` in index order. Rejects slices of
/// differing dimensions and files without a numeric suffix.
inline MaskStack load_stack(const fs::path& dir, int cutoff = kDefaultBinaryCutoff) {
  if (!fs::is_directory(dir)) throw DataError("stack directory '" + dir.string() + "' not found");
  std::map<long, fs::path> ordered;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_raster_path(entry.path())) continue;
    const long idx = slice_index(entry.path());
    if (idx < 0) {
      throw DataError("slice file '" + entry.path().string() + "' has no numeric index suffix");
    }
    if (!ordered.emplace(idx, entry.path()).second) {
      throw DataError("duplicate slice index " + std::to_string(idx) + " in '" + dir.string() + "'");
    }
  }
  const int origin = ordered.empty() ? 0 : static_cast<int>(ordered.begin()->first);
  MaskStack stack(dir.filename().string(), origin);
  for (const auto& [idx, path] : ordered) stack.push_back(load_mask(path, cutoff));
  return stack;
}

}  // namespace segsense

#include "overlap/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace overlap {

namespace {

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      if (!token.empty()) break;
    } else {
      token.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
  return token;
}

int parse_positive(const std::string& token, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used != token.size() || v <= 0) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw IoError("malformed PNM header in " + path.string());
  }
}

PnmHeader read_header(std::istream& in, const std::filesystem::path& path) {
  PnmHeader h;
  h.magic = next_token(in);
  h.width = parse_positive(next_token(in), path);
  h.height = parse_positive(next_token(in), path);
  h.maxval = parse_positive(next_token(in), path);
  if (h.maxval > 65535) throw IoError("PNM maxval out of range in " + path.string());
  return h;
}

std::vector<unsigned> read_samples(std::istream& in, std::size_t count, int maxval,
                                   const std::filesystem::path& path) {
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(count * bytes_per);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw IoError("truncated PNM data in " + path.string());
  }
  std::vector<unsigned> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = bytes_per == 2 ? (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
  }
  return out;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const PnmHeader h = read_header(in, path);
  if (h.magic != "P6") throw IoError("not a binary PPM (P6): " + path.string());
  const auto samples = read_samples(in, static_cast<std::size_t>(h.width) * h.height * 3, h.maxval, path);
  Image img(h.width, h.height);
  auto bytes = img.bytes();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(
        h.maxval == 255 ? samples[i] : std::lround(255.0 * samples[i] / h.maxval));
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  const auto bytes = image.bytes();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Field2D read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const PnmHeader h = read_header(in, path);
  if (h.magic != "P5") throw IoError("not a binary PGM (P5): " + path.string());
  const auto samples = read_samples(in, static_cast<std::size_t>(h.width) * h.height, h.maxval, path);
  Field2D f(h.width, h.height);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    f.data()[i] = static_cast<float>(static_cast<double>(samples[i]) / h.maxval);
  }
  return f;
}

void write_pgm(const std::filesystem::path& path, const Field2D& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << field.width() << ' ' << field.height() << "\n255\n";
  std::vector<unsigned char> bytes(field.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(field.data()[i], 0.0f, 1.0f) * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Image resize_nearest(const Image& image, int width, int height) {
  if (image.width() == width && image.height() == height) return image;
  Image out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(image.height() - 1,
                            static_cast<int>((y + 0.5) * image.height() / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(image.width() - 1, static_cast<int>((x + 0.5) * image.width() / width));
      out.set(x, y, image.at(sx, sy, 0), image.at(sx, sy, 1), image.at(sx, sy, 2));
    }
  }
  return out;
}

std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              const std::string& extension) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace overlap

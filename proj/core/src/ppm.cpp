#include "hypm/ppm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace hypm {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& why) {
  throw std::runtime_error("ppm: " + path.string() + ": " + why);
}

// Next whitespace-separated token; '#' starts a comment running to newline.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

std::size_t parse_dim(const std::string& tok, const std::filesystem::path& path,
                      const char* what) {
  if (tok.empty()) fail(path, std::string("missing ") + what);
  for (char c : tok)
    if (!std::isdigit(static_cast<unsigned char>(c)))
      fail(path, std::string("invalid ") + what + " '" + tok + "'");
  const unsigned long v = std::stoul(tok);
  if (v == 0) fail(path, std::string(what) + " must be positive");
  return static_cast<std::size_t>(v);
}

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const std::string magic = next_token(in);
  if (magic != "P6") {
    if (magic.size() == 2 && magic[0] == 'P') fail(path, "unsupported PPM variant '" + magic + "'");
    fail(path, "not a PPM file");
  }
  const std::size_t w = parse_dim(next_token(in), path, "width");
  const std::size_t h = parse_dim(next_token(in), path, "height");
  const std::string maxval = next_token(in);
  if (maxval != "255") fail(path, "unsupported max value '" + maxval + "' (must be 255)");
  // The token reader consumed exactly one whitespace byte after the maxval;
  // raw pixel data starts here.
  Tensor img({h, w, 3});
  std::string bytes(h * w * 3, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) fail(path, "truncated pixel data");
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.data[i] = static_cast<double>(static_cast<unsigned char>(bytes[i])) / 255.0;
  return img;
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
  if (image.rank() != 3 || image.shape[2] != 3)
    throw std::invalid_argument("write_ppm: image must be {H,W,3}");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out << "P6\n" << image.shape[1] << " " << image.shape[0] << "\n255\n";
  std::string bytes;
  bytes.reserve(image.numel());
  for (double v : image.data) {
    const double q = std::round(std::fmin(std::fmax(v, 0.0), 1.0) * 255.0);
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(q)));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(path, "write failed");
}

}  // namespace hypm

#include "frame.hpp"

#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "error.hpp"

namespace gridpure {

namespace {

constexpr std::size_t kMaxElements = std::size_t{1} << 26;
constexpr int kMaxDim = 1 << 20;
constexpr int kMaxTimestep = 1 << 20;

void put_f32_le(float v, std::uint8_t* out) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out[0] = static_cast<std::uint8_t>(bits & 0xff);
  out[1] = static_cast<std::uint8_t>((bits >> 8) & 0xff);
  out[2] = static_cast<std::uint8_t>((bits >> 16) & 0xff);
  out[3] = static_cast<std::uint8_t>((bits >> 24) & 0xff);
}

float get_f32_le(const std::uint8_t* in) {
  std::uint32_t bits = static_cast<std::uint32_t>(in[0]) | (static_cast<std::uint32_t>(in[1]) << 8) |
                       (static_cast<std::uint32_t>(in[2]) << 16) | (static_cast<std::uint32_t>(in[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

std::size_t parse_frame_header(const std::string& line, int* h, int* w, int* c, int* timestep) {
  std::istringstream ss(line);
  std::string magic;
  long hv = -1, wv = -1, cv = -1, tv = -1;
  ss >> magic >> hv >> wv >> cv >> tv;
  if (magic != "EPS" || ss.fail()) fail(ErrorKind::format, "tensor frame: bad magic or malformed header");
  std::string trailing;
  if (ss >> trailing) fail(ErrorKind::format, "tensor frame: trailing tokens in header");
  if (hv == 0 || wv == 0 || cv == 0) fail(ErrorKind::format, "tensor frame: zero dimension");
  if (hv < 0 || wv < 0 || cv < 0 || tv < 0) fail(ErrorKind::format, "tensor frame: negative header field");
  if (hv > kMaxDim || wv > kMaxDim || tv > kMaxTimestep) fail(ErrorKind::format, "tensor frame: dimension overflow");
  if (cv != 1 && cv != 3) fail(ErrorKind::format, "tensor frame: unsupported channel layout");
  const std::size_t elems = static_cast<std::size_t>(hv) * static_cast<std::size_t>(wv) * static_cast<std::size_t>(cv);
  if (elems > kMaxElements) fail(ErrorKind::format, "tensor frame: dimension overflow");
  *h = static_cast<int>(hv);
  *w = static_cast<int>(wv);
  *c = static_cast<int>(cv);
  *timestep = static_cast<int>(tv);
  return elems * 4;
}

std::vector<std::uint8_t> encode_frame(const ImageBuffer& img, int timestep) {
  if (img.size() == 0) fail(ErrorKind::invalid_argument, "encode_frame: empty image");
  if (timestep < 0 || timestep > kMaxTimestep) fail(ErrorKind::invalid_argument, "encode_frame: timestep out of range");
  std::ostringstream header;
  header << "EPS " << img.height << ' ' << img.width << ' ' << img.channels << ' ' << timestep << '\n';
  const std::string head = header.str();
  std::vector<std::uint8_t> out(head.size() + img.size() * 4);
  std::memcpy(out.data(), head.data(), head.size());
  std::uint8_t* p = out.data() + head.size();
  for (std::size_t i = 0; i < img.size(); ++i, p += 4) put_f32_le(static_cast<float>(img.data[i]), p);
  return out;
}

ImageBuffer decode_frame(const std::uint8_t* data, std::size_t size, int* timestep_out) {
  std::size_t eol = 0;
  const std::size_t scan = size < 128 ? size : 128;
  while (eol < scan && data[eol] != '\n') ++eol;
  if (eol == scan) fail(ErrorKind::format, "tensor frame: missing header terminator");
  int h, w, c, t;
  const std::size_t payload = parse_frame_header(std::string(reinterpret_cast<const char*>(data), eol + 1), &h, &w, &c, &t);
  if (size - (eol + 1) < payload) fail(ErrorKind::format, "tensor frame: truncated payload");
  ImageBuffer img(h, w, c);
  const std::uint8_t* p = data + eol + 1;
  for (std::size_t i = 0; i < img.size(); ++i, p += 4) img.data[i] = get_f32_le(p);
  if (timestep_out) *timestep_out = t;
  return img;
}

void write_tensor(const ImageBuffer& img, int timestep, std::ostream& out) {
  const auto bytes = encode_frame(img, timestep);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "write_tensor: stream failure");
}

ImageBuffer read_tensor(std::istream& in, int* timestep_out) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::format, "tensor frame: missing header");
  line.push_back('\n');
  int h, w, c, t;
  const std::size_t payload = parse_frame_header(line, &h, &w, &c, &t);
  std::vector<std::uint8_t> bytes(payload);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(payload));
  if (static_cast<std::size_t>(in.gcount()) != payload) fail(ErrorKind::format, "tensor frame: truncated payload");
  ImageBuffer img(h, w, c);
  const std::uint8_t* p = bytes.data();
  for (std::size_t i = 0; i < img.size(); ++i, p += 4) img.data[i] = get_f32_le(p);
  if (timestep_out) *timestep_out = t;
  return img;
}

}  // namespace gridpure

#pragma once

#include <gridpure.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cli {

// Exit codes: 1 bad flags / validation, 2 backend failure, 3 I/O failure,
// 4 gradient unavailable.
struct CliError : std::runtime_error {
  CliError(int code_, const std::string& msg) : std::runtime_error(msg), code(code_) {}
  int code;
};

inline int exit_code_of(gp_status s) {
  switch (s) {
    case GP_OK:
      return 0;
    case GP_ERR_INVALID_ARGUMENT:
      return 1;
    case GP_ERR_BACKEND:
      return 2;
    case GP_ERR_IO:
      return 3;
    case GP_ERR_GRADIENT:
      return 4;
    case GP_ERR_INTERNAL:
      return 2;
  }
  return 2;
}

inline void check(gp_status s) {
  if (s != GP_OK) throw CliError(exit_code_of(s), gp_last_error());
}

struct ImageDeleter {
  void operator()(gp_image* p) const { gp_image_free(p); }
};
struct ScheduleDeleter {
  void operator()(gp_schedule* p) const { gp_schedule_free(p); }
};
struct BackendDeleter {
  void operator()(gp_backend* p) const { gp_backend_free(p); }
};

using Image = std::unique_ptr<gp_image, ImageDeleter>;
using Schedule = std::unique_ptr<gp_schedule, ScheduleDeleter>;
using Backend = std::unique_ptr<gp_backend, BackendDeleter>;

inline Image load_image(const std::string& path) {
  gp_image* img = nullptr;
  check(gp_image_load_png(path.c_str(), &img));
  return Image(img);
}

inline void save_image(const gp_image* img, const std::string& path) {
  check(gp_image_save_png(img, path.c_str()));
}

inline Schedule make_schedule(int steps, double beta_start, double beta_end) {
  gp_schedule* s = nullptr;
  check(gp_schedule_create(steps, beta_start, beta_end, &s));
  return Schedule(s);
}

// "oracle:<dir>" | "affine:<file>" | "external:<command>"
inline Backend make_backend(const std::string& spec, int timeout_ms) {
  gp_backend* b = nullptr;
  if (spec.rfind("oracle:", 0) == 0) {
    check(gp_backend_oracle_from_dir(spec.substr(7).c_str(), &b));
  } else if (spec.rfind("affine:", 0) == 0) {
    check(gp_backend_affine_load(spec.substr(7).c_str(), &b));
  } else if (spec.rfind("external:", 0) == 0) {
    check(gp_backend_external_create(spec.substr(9).c_str(), timeout_ms, &b));
  } else {
    throw CliError(1, "bad --denoiser spec (expected oracle:<dir>, affine:<file> or external:<command>): " + spec);
  }
  return Backend(b);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// Sorted basenames of the *.png files under dir.
inline std::vector<std::string> list_pngs(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
  if (ec) throw CliError(3, "cannot list " + dir + ": " + ec.message());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace cli

#include "denoiser.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "error.hpp"
#include "frame.hpp"

namespace gridpure {

ImageBuffer DenoiserBackend::predict_eps_vjp(const ImageBuffer&, int, const NoiseSchedule&,
                                             const ImageBuffer&) const {
  fail(ErrorKind::gradient_unavailable, "gradient unavailable for this backend");
}

// ---------------------------------------------------------------------------
// OracleBackend

OracleBackend::OracleBackend(std::vector<ImageBuffer> dataset) : dataset_(std::move(dataset)) {
  if (dataset_.empty()) fail(ErrorKind::invalid_argument, "oracle backend: empty dataset");
  for (const ImageBuffer& img : dataset_)
    if (!img.same_shape(dataset_.front()))
      fail(ErrorKind::invalid_argument, "oracle backend: dataset images must share one shape");
}

std::vector<double> OracleBackend::weights(const ImageBuffer& x_t, double a, double s2) const {
  const std::size_t k = dataset_.size();
  std::vector<double> logw(k);
  for (std::size_t i = 0; i < k; ++i) {
    long double d2 = 0.0L;
    const ImageBuffer& xi = dataset_[i];
    for (std::size_t j = 0; j < x_t.data.size(); ++j) {
      const long double d = static_cast<long double>(x_t.data[j]) - static_cast<long double>(a) * xi.data[j];
      d2 += d * d;
    }
    logw[i] = static_cast<double>(-d2 / (2.0L * static_cast<long double>(s2)));
  }
  const double m = *std::max_element(logw.begin(), logw.end());
  long double total = 0.0L;
  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) {
    w[i] = std::exp(logw[i] - m);
    total += w[i];
  }
  for (std::size_t i = 0; i < k; ++i) w[i] = static_cast<double>(w[i] / total);
  return w;
}

ImageBuffer OracleBackend::predict_eps(const ImageBuffer& x_t, int t, const NoiseSchedule& sched) const {
  sched.require_step(t);
  require_same_shape(x_t, dataset_.front(), "oracle predict_eps");
  const double a = sched.sqrt_ab(t);
  const double s2 = 1.0 - sched.ab(t);
  const std::vector<double> w = weights(x_t, a, s2);

  const std::size_t n = x_t.data.size();
  std::vector<long double> mean(n, 0.0L);
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    if (w[i] == 0.0) continue;
    const ImageBuffer& xi = dataset_[i];
    for (std::size_t j = 0; j < n; ++j) mean[j] += static_cast<long double>(w[i]) * xi.data[j];
  }
  const double inv_sigma = 1.0 / std::sqrt(s2);
  ImageBuffer eps(x_t.height, x_t.width, x_t.channels);
  for (std::size_t j = 0; j < n; ++j)
    eps.data[j] = (x_t.data[j] - a * static_cast<double>(mean[j])) * inv_sigma;
  return eps;
}

ImageBuffer OracleBackend::predict_eps_vjp(const ImageBuffer& x_t, int t, const NoiseSchedule& sched,
                                           const ImageBuffer& upstream) const {
  sched.require_step(t);
  require_same_shape(x_t, dataset_.front(), "oracle predict_eps_vjp");
  require_same_shape(x_t, upstream, "oracle predict_eps_vjp");
  const double a = sched.sqrt_ab(t);
  const double s2 = 1.0 - sched.ab(t);
  const std::vector<double> w = weights(x_t, a, s2);
  const std::size_t n = x_t.data.size();
  const std::size_t k = dataset_.size();

  // eps^ = (x_t - a*m(x_t))/sqrt(s2) with m = sum_i w_i x_i. With
  // d_i = x_t - a*x_i and p_i = w_i <x_i, v>, the adjoint of dm/dx applied
  // to v is (P*dbar - q)/s2 where q = sum p_i d_i, dbar = sum w_i d_i,
  // P = sum p_i; the full VJP is (v - a * that) / sqrt(s2).
  std::vector<double> p(k);
  double big_p = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    long double acc = 0.0L;
    for (std::size_t j = 0; j < n; ++j) acc += static_cast<long double>(dataset_[i].data[j]) * upstream.data[j];
    p[i] = w[i] * static_cast<double>(acc);
    big_p += p[i];
  }
  std::vector<long double> q(n, 0.0L), dbar(n, 0.0L);
  for (std::size_t i = 0; i < k; ++i) {
    if (w[i] == 0.0 && p[i] == 0.0) continue;
    const ImageBuffer& xi = dataset_[i];
    for (std::size_t j = 0; j < n; ++j) {
      const long double d = static_cast<long double>(x_t.data[j]) - static_cast<long double>(a) * xi.data[j];
      q[j] += static_cast<long double>(p[i]) * d;
      dbar[j] += static_cast<long double>(w[i]) * d;
    }
  }
  const double inv_sigma = 1.0 / std::sqrt(s2);
  ImageBuffer out(x_t.height, x_t.width, x_t.channels);
  for (std::size_t j = 0; j < n; ++j) {
    const double mt_v = static_cast<double>((static_cast<long double>(big_p) * dbar[j] - q[j]) /
                                            static_cast<long double>(s2));
    out.data[j] = (upstream.data[j] - a * mt_v) * inv_sigma;
  }
  return out;
}

// ---------------------------------------------------------------------------
// AffineBackend

AffineBackend::AffineBackend(int h, int w, int c, int t_lo, int t_hi, int n_blocks)
    : height_(h), width_(w), channels_(c), t_lo_(t_lo), t_hi_(t_hi) {
  if (t_lo < 1 || t_hi < t_lo) fail(ErrorKind::invalid_argument, "affine backend: bad timestep support");
  if (n_blocks < 1 || n_blocks > t_hi - t_lo + 1)
    fail(ErrorKind::invalid_argument, "affine backend: bad block count");
  blocks_.reserve(n_blocks);
  for (int i = 0; i < n_blocks; ++i) blocks_.push_back({ImageBuffer(h, w, c), ImageBuffer(h, w, c)});
}

AffineBackend AffineBackend::random_init(int h, int w, int c, int t_lo, int t_hi, int n_blocks, double scale,
                                         RngState rng) {
  AffineBackend backend(h, w, c, t_lo, t_hi, n_blocks);
  for (Block& blk : backend.blocks_) {
    const std::vector<double> ga = sample_gaussian(rng, blk.a.size());
    const std::vector<double> gb = sample_gaussian(rng, blk.b.size());
    for (std::size_t j = 0; j < blk.a.size(); ++j) {
      blk.a.data[j] = scale * ga[j];
      blk.b.data[j] = scale * gb[j];
    }
  }
  return backend;
}

int AffineBackend::block_of(int t) const {
  if (t < t_lo_ || t > t_hi_)
    fail(ErrorKind::invalid_argument, "affine backend: timestep " + std::to_string(t) +
                                          " outside declared support [" + std::to_string(t_lo_) + "," +
                                          std::to_string(t_hi_) + "]");
  const long span = t_hi_ - t_lo_ + 1;
  long idx = static_cast<long>(t - t_lo_) * static_cast<long>(blocks_.size()) / span;
  if (idx >= static_cast<long>(blocks_.size())) idx = static_cast<long>(blocks_.size()) - 1;
  return static_cast<int>(idx);
}

ImageBuffer AffineBackend::predict_eps(const ImageBuffer& x_t, int t, const NoiseSchedule& sched) const {
  sched.require_step(t);
  const Block& blk = blocks_[block_of(t)];
  require_same_shape(x_t, blk.a, "affine predict_eps");
  ImageBuffer eps(x_t.height, x_t.width, x_t.channels);
  for (std::size_t j = 0; j < x_t.data.size(); ++j) eps.data[j] = blk.a.data[j] * x_t.data[j] + blk.b.data[j];
  return eps;
}

ImageBuffer AffineBackend::predict_eps_vjp(const ImageBuffer& x_t, int t, const NoiseSchedule& sched,
                                           const ImageBuffer& upstream) const {
  sched.require_step(t);
  const Block& blk = blocks_[block_of(t)];
  require_same_shape(x_t, blk.a, "affine predict_eps_vjp");
  require_same_shape(upstream, blk.a, "affine predict_eps_vjp");
  ImageBuffer out(x_t.height, x_t.width, x_t.channels);
  for (std::size_t j = 0; j < out.data.size(); ++j) out.data[j] = blk.a.data[j] * upstream.data[j];
  return out;
}

namespace {

void write_f32_array(std::ostream& os, const std::vector<double>& v) {
  for (double x : v) {
    const float f = static_cast<float>(x);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                       static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    os.write(b, 4);
  }
}

void read_f32_array(std::istream& is, std::vector<double>& v) {
  std::vector<unsigned char> buf(v.size() * 4);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size())
    fail(ErrorKind::format, "affine backend file: truncated payload");
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * i]) | (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                         (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                         (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    v[i] = f;
  }
}

}  // namespace

void AffineBackend::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write " + path);
  os << "GPAF 1 " << height_ << ' ' << width_ << ' ' << channels_ << ' ' << t_lo_ << ' ' << t_hi_ << ' '
     << blocks_.size() << '\n';
  for (const Block& blk : blocks_) {
    write_f32_array(os, blk.a.data);
    write_f32_array(os, blk.b.data);
  }
  if (!os) fail(ErrorKind::io, "write failure for " + path);
}

AffineBackend AffineBackend::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open " + path);
  std::string magic;
  int version = 0, h = 0, w = 0, c = 0, lo = 0, hi = 0, nb = 0;
  is >> magic >> version >> h >> w >> c >> lo >> hi >> nb;
  if (!is || magic != "GPAF" || version != 1) fail(ErrorKind::format, path + ": not an affine backend file");
  is.get();  // newline
  if (h < 1 || w < 1 || (c != 1 && c != 3) || nb < 1) fail(ErrorKind::format, path + ": bad header");
  AffineBackend backend(h, w, c, lo, hi, nb);
  for (Block& blk : backend.blocks_) {
    read_f32_array(is, blk.a.data);
    read_f32_array(is, blk.b.data);
  }
  return backend;
}

// ---------------------------------------------------------------------------
// ExternalBackend

namespace {

void write_all(int fd, const std::uint8_t* data, std::size_t size, int timeout_ms) {
  std::size_t off = 0;
  while (off < size) {
    pollfd pfd{fd, POLLOUT, 0};
    const int pr = ::poll(&pfd, 1, timeout_ms);
    if (pr == 0) fail(ErrorKind::backend, "external denoiser: request timed out");
    if (pr < 0) fail(ErrorKind::backend, "external denoiser: poll failed");
    const ssize_t n = ::write(fd, data + off, size - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorKind::backend, "external denoiser: process closed its input");
    }
    off += static_cast<std::size_t>(n);
  }
}

void read_all(int fd, std::uint8_t* data, std::size_t size, int timeout_ms) {
  std::size_t off = 0;
  while (off < size) {
    pollfd pfd{fd, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, timeout_ms);
    if (pr == 0) fail(ErrorKind::backend, "external denoiser: response timed out");
    if (pr < 0) fail(ErrorKind::backend, "external denoiser: poll failed");
    const ssize_t n = ::read(fd, data + off, size - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorKind::backend, "external denoiser: read failed");
    }
    if (n == 0) fail(ErrorKind::backend, "external denoiser: process exited mid-response");
    off += static_cast<std::size_t>(n);
  }
}

}  // namespace

ExternalBackend::ExternalBackend(std::string command, int timeout_ms)
    : command_(std::move(command)), timeout_ms_(timeout_ms) {
  if (command_.empty()) fail(ErrorKind::invalid_argument, "external backend: empty command");
  if (timeout_ms_ <= 0) fail(ErrorKind::invalid_argument, "external backend: timeout must be positive");
}

ExternalBackend::~ExternalBackend() { shutdown(); }

void ExternalBackend::spawn() const {
  static std::once_flag sigpipe_once;
  std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });

  int to_child[2], from_child[2];
  if (::pipe(to_child) != 0) fail(ErrorKind::backend, "external denoiser: pipe failed");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    fail(ErrorKind::backend, "external denoiser: pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    fail(ErrorKind::backend, "external denoiser: fork failed");
  }
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  pid_ = pid;
  to_child_ = to_child[1];
  from_child_ = from_child[0];
}

void ExternalBackend::shutdown() const {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 20; ++i) {
      if (::waitpid(static_cast<pid_t>(pid_), &status, WNOHANG) != 0) {
        pid_ = -1;
        return;
      }
      ::usleep(10000);
    }
    ::kill(static_cast<pid_t>(pid_), SIGKILL);
    ::waitpid(static_cast<pid_t>(pid_), &status, 0);
    pid_ = -1;
  }
}

ImageBuffer ExternalBackend::predict_eps(const ImageBuffer& x_t, int t, const NoiseSchedule& sched) const {
  sched.require_step(t);
  std::lock_guard<std::mutex> lock(mutex_);
  if (pid_ < 0) spawn();

  try {
    const std::vector<std::uint8_t> request = encode_frame(x_t, t);
    write_all(to_child_, request.data(), request.size(), timeout_ms_);

    // Header comes back as a short text line; read it byte-wise so the payload
    // stays untouched in the pipe.
    std::string header;
    while (header.size() < 128) {
      std::uint8_t ch = 0;
      read_all(from_child_, &ch, 1, timeout_ms_);
      header.push_back(static_cast<char>(ch));
      if (ch == '\n') break;
    }
    if (header.empty() || header.back() != '\n')
      fail(ErrorKind::backend, "external denoiser: malformed response header");

    int h = 0, w = 0, c = 0, rt = 0;
    std::size_t payload = 0;
    try {
      payload = parse_frame_header(header, &h, &w, &c, &rt);
    } catch (const Error& e) {
      fail(ErrorKind::backend, std::string("external denoiser: ") + e.what());
    }
    if (h != x_t.height || w != x_t.width || c != x_t.channels)
      fail(ErrorKind::backend, "external denoiser: response dimension mismatch");

    std::vector<std::uint8_t> bytes(header.size() + payload);
    std::memcpy(bytes.data(), header.data(), header.size());
    read_all(from_child_, bytes.data() + header.size(), payload, timeout_ms_);
    return decode_frame(bytes.data(), bytes.size(), nullptr);
  } catch (...) {
    // Stream state is unrecoverable after a failed exchange; a later call
    // starts a fresh child.
    if (pid_ > 0) ::kill(static_cast<pid_t>(pid_), SIGKILL);
    shutdown();
    throw;
  }
}

}  // namespace gridpure

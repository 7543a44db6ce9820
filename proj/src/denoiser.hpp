#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "image.hpp"
#include "rng.hpp"
#include "schedule.hpp"

namespace gridpure {

// Epsilon-prediction contract: given a diffused image x_t and its timestep,
// estimate the standard-normal noise component.
class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;

  virtual ImageBuffer predict_eps(const ImageBuffer& x_t, int t, const NoiseSchedule& sched) const = 0;

  virtual bool differentiable() const { return false; }

  // Vector-Jacobian product of predict_eps with respect to x_t. Backends that
  // cannot differentiate (external processes) reject with gradient_unavailable.
  virtual ImageBuffer predict_eps_vjp(const ImageBuffer& x_t, int t, const NoiseSchedule& sched,
                                      const ImageBuffer& upstream) const;
};

// Exact posterior-mean epsilon predictor for a finite dataset: with
// a = sqrt(alpha_bar), s2 = 1 - alpha_bar,
//
//   w_i    = softmax_i( -||x_t - a*x_i||^2 / (2*s2) )
//   eps^   = (x_t - a * sum_i w_i x_i) / sqrt(s2)
//
// which is the conditional-mean noise estimate when the data distribution is
// uniform over the dataset. Softmax uses max-subtraction; distances and the
// mixture mean are accumulated in extended precision.
class OracleBackend : public DenoiserBackend {
 public:
  explicit OracleBackend(std::vector<ImageBuffer> dataset);

  ImageBuffer predict_eps(const ImageBuffer& x_t, int t, const NoiseSchedule& sched) const override;
  bool differentiable() const override { return true; }
  ImageBuffer predict_eps_vjp(const ImageBuffer& x_t, int t, const NoiseSchedule& sched,
                              const ImageBuffer& upstream) const override;

  const std::vector<ImageBuffer>& dataset() const { return dataset_; }

 private:
  std::vector<double> weights(const ImageBuffer& x_t, double a, double s2) const;
  std::vector<ImageBuffer> dataset_;
};

// Trainable diagonal-affine predictor eps^ = a_t (*) x_t + b_t with per-pixel
// parameters shared across uniform timestep blocks covering [t_lo, t_hi].
class AffineBackend : public DenoiserBackend {
 public:
  struct Block {
    ImageBuffer a;
    ImageBuffer b;
  };

  AffineBackend(int h, int w, int c, int t_lo, int t_hi, int n_blocks);

  static AffineBackend random_init(int h, int w, int c, int t_lo, int t_hi, int n_blocks, double scale,
                                   RngState rng);

  ImageBuffer predict_eps(const ImageBuffer& x_t, int t, const NoiseSchedule& sched) const override;
  bool differentiable() const override { return true; }
  ImageBuffer predict_eps_vjp(const ImageBuffer& x_t, int t, const NoiseSchedule& sched,
                              const ImageBuffer& upstream) const override;

  int block_of(int t) const;  // rejects t outside [t_lo, t_hi]
  int t_lo() const { return t_lo_; }
  int t_hi() const { return t_hi_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::vector<Block>& blocks() { return blocks_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  // On-disk format: "GPAF 1 <h> <w> <c> <t_lo> <t_hi> <n_blocks>\n" followed
  // by n_blocks * 2 arrays (a then b per block) of float32 little-endian.
  void save(const std::string& path) const;
  static AffineBackend load(const std::string& path);

 private:
  int height_, width_, channels_;
  int t_lo_, t_hi_;
  std::vector<Block> blocks_;
};

// Out-of-process predictor speaking the tensor-frame protocol: one request
// frame on the child's stdin, one response frame of identical dimensions on
// its stdout, per prediction. The child is spawned lazily from /bin/sh -c and
// reused across requests; calls are serialized. Not differentiable.
//
// Spawning installs a process-wide SIG_IGN for SIGPIPE (once) so that a dying
// child surfaces as an error instead of terminating the host.
class ExternalBackend : public DenoiserBackend {
 public:
  explicit ExternalBackend(std::string command, int timeout_ms = 60000);
  ~ExternalBackend() override;

  ExternalBackend(const ExternalBackend&) = delete;
  ExternalBackend& operator=(const ExternalBackend&) = delete;

  ImageBuffer predict_eps(const ImageBuffer& x_t, int t, const NoiseSchedule& sched) const override;

 private:
  void spawn() const;
  void shutdown() const;

  std::string command_;
  int timeout_ms_;
  mutable std::mutex mutex_;
  mutable long pid_ = -1;
  mutable int to_child_ = -1;
  mutable int from_child_ = -1;
};

}  // namespace gridpure

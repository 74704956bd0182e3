#ifndef SPINET_DATASETS_HPP
#define SPINET_DATASETS_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spinet/matrix.hpp"
#include "spinet/spin.hpp"

namespace spinet::datasets {

// B x d points uniform on [-halfwidth+margin, halfwidth-margin]^d, drawn
// row-major from the engine.
DenseMatrix sample_uniform_box(int batch, int dim, double halfwidth,
                               double margin, std::mt19937_64& eng);

struct BallState {
  double x, y, vx, vy;  // unit-square coordinates, velocity per frame
};

// Bouncing-ball clip. The simulation runs in the unit square; radius and
// speed are unit-square fractions, so the trajectories are independent of
// the render resolution. Frames are the anti-aliased disc rasterization.
struct VideoClip {
  int t_frames = 0;
  int height = 0;
  int width = 0;
  int n_balls = 0;
  std::vector<float> frames;       // T*H*W, values in [0,1]
  std::vector<BallState> states;   // T*n_balls

  const float* frame(int t) const {
    return frames.data() + static_cast<size_t>(t) * height * width;
  }
  const BallState& state(int t, int ball) const {
    return states[static_cast<size_t>(t) * n_balls + ball];
  }
};

// Elastic equal-mass discs with specular wall reflections, fixed substeps.
// Throws PlacementFailure when no non-overlapping start exists in 1e4 tries.
VideoClip bouncing_balls_generate(int t_frames, int height, int width,
                                  int n_balls, double radius, double speed,
                                  std::uint64_t seed);

// Continues the dynamics of `clip` for extra_frames more frames (used by the
// time-reversal tests: negate velocities first).
std::vector<BallState> simulate_from(const std::vector<BallState>& start,
                                     int n_balls, double radius, int n_frames);

// Raw binary clip format: "BBV1", T,H,W,n_balls as u32, T*H*W f32 frames,
// then T*n_balls*4 f64 ball states (x,y,vx,vy). Little-endian.
void save_clip(const std::string& path, const VideoClip& clip);
VideoClip load_clip(const std::string& path);

// All consecutive two-frame pairs of one clip: row t of `first` is frames
// (t, t+1) flattened, row t of `second` is frames (t+1, t+2).
// Throws InsufficientFrames when the clip has fewer than 3 frames.
operators::PairBatch consecutive_pairs(const VideoClip& clip);

// --- batch sources for the trainer ----------------------------------------

// Uniform box samples for local operators (single batch per step).
class BoxSource : public spin::BatchSource {
 public:
  BoxSource(int batch, int dim, double halfwidth, double margin)
      : batch_(batch), dim_(dim), halfwidth_(halfwidth), margin_(margin) {}
  operators::PairBatch batch(std::uint64_t seed,
                             std::uint64_t step) const override;

 private:
  int batch_;
  int dim_;
  double halfwidth_;
  double margin_;
};

// Independent uniform state pairs for tabular kernels. With exact_population
// set, every step enumerates all M^2 ordered pairs instead of sampling.
class TabularSource : public spin::BatchSource {
 public:
  TabularSource(int n_states, int batch, bool exact_population = false)
      : n_states_(n_states), batch_(batch), exact_(exact_population) {}
  operators::PairBatch batch(std::uint64_t seed,
                             std::uint64_t step) const override;

 private:
  int n_states_;
  int batch_;
  bool exact_;
};

// Draws clips_per_batch clips (with replacement) from a fixed pool and
// stacks every consecutive pair of each drawn clip.
class SfaSource : public spin::BatchSource {
 public:
  SfaSource(std::vector<VideoClip> pool, int clips_per_batch);
  operators::PairBatch batch(std::uint64_t seed,
                             std::uint64_t step) const override;
  int pairs_per_batch() const;

 private:
  std::vector<VideoClip> pool_;
  std::vector<operators::PairBatch> pool_pairs_;
  int clips_per_batch_;
};

}  // namespace spinet::datasets

#endif  // SPINET_DATASETS_HPP

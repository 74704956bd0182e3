#include "spinet/datasets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "spinet/kernels.hpp"
#include "spinet/rng.hpp"

namespace spinet::datasets {

DenseMatrix sample_uniform_box(int batch, int dim, double halfwidth,
                               double margin, std::mt19937_64& eng) {
  require(margin < halfwidth, "sample_uniform_box: margin must be < halfwidth");
  const double lo = -halfwidth + margin;
  const double hi = halfwidth - margin;
  DenseMatrix x(batch, dim);
  for (int r = 0; r < batch; ++r)
    for (int c = 0; c < dim; ++c) x(r, c) = uniform_in(eng, lo, hi);
  return x;
}

namespace {

constexpr int kSubsteps = 8;

void advance_substep(std::vector<BallState>& balls, double radius, double dt) {
  const int n = static_cast<int>(balls.size());
  for (auto& b : balls) {
    b.x += b.vx * dt;
    b.y += b.vy * dt;
  }
  // specular wall reflections; position mirroring keeps them reversible
  const double lo = radius;
  const double hi = 1.0 - radius;
  for (auto& b : balls) {
    while (b.x < lo || b.x > hi) {
      if (b.x < lo) {
        b.x = 2.0 * lo - b.x;
        b.vx = -b.vx;
      } else {
        b.x = 2.0 * hi - b.x;
        b.vx = -b.vx;
      }
    }
    while (b.y < lo || b.y > hi) {
      if (b.y < lo) {
        b.y = 2.0 * lo - b.y;
        b.vy = -b.vy;
      } else {
        b.y = 2.0 * hi - b.y;
        b.vy = -b.vy;
      }
    }
  }
  // pairwise elastic impulses, applied when overlapping and approaching;
  // no positional projection, which keeps the step time-reversible
  const double contact = 2.0 * radius;
  const double deep = radius;  // projection only below this, never hit with
                               // sane substep sizes
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      BallState& a = balls[i];
      BallState& b = balls[j];
      const double dx = b.x - a.x;
      const double dy = b.y - a.y;
      const double d2 = dx * dx + dy * dy;
      if (d2 >= contact * contact || d2 == 0.0) continue;
      const double dvx = b.vx - a.vx;
      const double dvy = b.vy - a.vy;
      const double approach = dx * dvx + dy * dvy;
      if (approach < 0.0) {
        // equal masses: exchange the normal velocity components
        const double f = approach / d2;
        a.vx += f * dx;
        a.vy += f * dy;
        b.vx -= f * dx;
        b.vy -= f * dy;
      }
      const double d = std::sqrt(d2);
      if (d < deep) {
        const double push = 0.5 * (contact - d);
        const double ux = dx / d;
        const double uy = dy / d;
        a.x -= push * ux;
        a.y -= push * uy;
        b.x += push * ux;
        b.y += push * uy;
      }
    }
  }
}

void advance_frame(std::vector<BallState>& balls, double radius) {
  const double dt = 1.0 / kSubsteps;
  for (int s = 0; s < kSubsteps; ++s) advance_substep(balls, radius, dt);
}

void render_frame(const std::vector<BallState>& balls, double radius,
                  int height, int width, float* out) {
  std::vector<double> centers;
  centers.reserve(balls.size() * 2);
  for (const auto& b : balls) {
    centers.push_back(b.x);
    centers.push_back(b.y);
  }
  kernels::render_discs(height, width, centers, radius,
                        std::span<float>(out, static_cast<size_t>(height) * width));
}

}  // namespace

VideoClip bouncing_balls_generate(int t_frames, int height, int width,
                                  int n_balls, double radius, double speed,
                                  std::uint64_t seed) {
  require(t_frames >= 1 && height >= 1 && width >= 1 && n_balls >= 1,
          "bouncing_balls_generate: counts must be positive");
  if (!(n_balls * M_PI * radius * radius < 0.5))
    throw PlacementFailure("bouncing_balls_generate: balls do not fit");

  auto eng = make_engine(seed, 0x42414C /* BAL */);
  std::vector<BallState> balls(n_balls);
  const double lo = radius;
  const double hi = 1.0 - radius;
  bool placed = false;
  for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
    for (auto& b : balls) {
      b.x = uniform_in(eng, lo, hi);
      b.y = uniform_in(eng, lo, hi);
    }
    placed = true;
    for (int i = 0; i < n_balls && placed; ++i)
      for (int j = i + 1; j < n_balls && placed; ++j) {
        const double dx = balls[i].x - balls[j].x;
        const double dy = balls[i].y - balls[j].y;
        if (dx * dx + dy * dy < 4.41 * radius * radius)  // 2.1 r separation
          placed = false;
      }
  }
  if (!placed)
    throw PlacementFailure(
        "bouncing_balls_generate: no non-overlapping placement in 10000 tries");

  for (auto& b : balls) {
    const double angle = uniform_in(eng, 0.0, 2.0 * M_PI);
    b.vx = speed * std::cos(angle);
    b.vy = speed * std::sin(angle);
  }

  VideoClip clip;
  clip.t_frames = t_frames;
  clip.height = height;
  clip.width = width;
  clip.n_balls = n_balls;
  clip.frames.resize(static_cast<size_t>(t_frames) * height * width);
  clip.states.resize(static_cast<size_t>(t_frames) * n_balls);

  for (int t = 0; t < t_frames; ++t) {
    std::copy(balls.begin(), balls.end(),
              clip.states.begin() + static_cast<size_t>(t) * n_balls);
    render_frame(balls, radius, height, width,
                 clip.frames.data() + static_cast<size_t>(t) * height * width);
    if (t + 1 < t_frames) advance_frame(balls, radius);
  }
  return clip;
}

std::vector<BallState> simulate_from(const std::vector<BallState>& start,
                                     int n_balls, double radius, int n_frames) {
  std::vector<BallState> balls(start);
  require(static_cast<int>(balls.size()) == n_balls,
          "simulate_from: state size mismatch");
  for (int t = 0; t < n_frames; ++t) advance_frame(balls, radius);
  return balls;
}

void save_clip(const std::string& path, const VideoClip& clip) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_clip: cannot open " + path);
  out.write("BBV1", 4);
  const std::uint32_t head[4] = {
      static_cast<std::uint32_t>(clip.t_frames),
      static_cast<std::uint32_t>(clip.height),
      static_cast<std::uint32_t>(clip.width),
      static_cast<std::uint32_t>(clip.n_balls)};
  out.write(reinterpret_cast<const char*>(head), sizeof(head));
  out.write(reinterpret_cast<const char*>(clip.frames.data()),
            static_cast<std::streamsize>(clip.frames.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(clip.states.data()),
            static_cast<std::streamsize>(clip.states.size() * sizeof(BallState)));
  if (!out) throw IoError("save_clip: short write to " + path);
}

VideoClip load_clip(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_clip: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "BBV1", 4) != 0)
    throw IoError("load_clip: bad magic in " + path);
  std::uint32_t head[4];
  in.read(reinterpret_cast<char*>(head), sizeof(head));
  if (!in) throw IoError("load_clip: truncated header in " + path);
  VideoClip clip;
  clip.t_frames = static_cast<int>(head[0]);
  clip.height = static_cast<int>(head[1]);
  clip.width = static_cast<int>(head[2]);
  clip.n_balls = static_cast<int>(head[3]);
  clip.frames.resize(static_cast<size_t>(clip.t_frames) * clip.height * clip.width);
  clip.states.resize(static_cast<size_t>(clip.t_frames) * clip.n_balls);
  in.read(reinterpret_cast<char*>(clip.frames.data()),
          static_cast<std::streamsize>(clip.frames.size() * sizeof(float)));
  in.read(reinterpret_cast<char*>(clip.states.data()),
          static_cast<std::streamsize>(clip.states.size() * sizeof(BallState)));
  if (!in) throw IoError("load_clip: truncated payload in " + path);
  return clip;
}

operators::PairBatch consecutive_pairs(const VideoClip& clip) {
  if (clip.t_frames < 3)
    throw InsufficientFrames(
        "consecutive_pairs: need at least 3 frames per clip");
  const int n_pairs = clip.t_frames - 2;
  const int fdim = clip.height * clip.width;
  operators::PairBatch out;
  out.first = DenseMatrix(n_pairs, 2 * fdim);
  out.second = DenseMatrix(n_pairs, 2 * fdim);
  for (int t = 0; t < n_pairs; ++t) {
    const float* f0 = clip.frame(t);
    const float* f1 = clip.frame(t + 1);
    const float* f2 = clip.frame(t + 2);
    double* x = out.first.row(t);
    double* xp = out.second.row(t);
    for (int i = 0; i < fdim; ++i) {
      x[i] = f0[i];
      x[fdim + i] = f1[i];
      xp[i] = f1[i];
      xp[fdim + i] = f2[i];
    }
  }
  return out;
}

operators::PairBatch BoxSource::batch(std::uint64_t seed,
                                      std::uint64_t step) const {
  auto eng = make_engine(seed, 0x424F58 /* BOX */, step);
  operators::PairBatch out;
  out.first = sample_uniform_box(batch_, dim_, halfwidth_, margin_, eng);
  return out;
}

operators::PairBatch TabularSource::batch(std::uint64_t seed,
                                          std::uint64_t step) const {
  operators::PairBatch out;
  if (exact_) {
    out.first = DenseMatrix(n_states_ * n_states_, 1);
    out.second = DenseMatrix(n_states_ * n_states_, 1);
    for (int s = 0; s < n_states_; ++s)
      for (int sp = 0; sp < n_states_; ++sp) {
        const int r = s * n_states_ + sp;
        out.first(r, 0) = s;
        out.second(r, 0) = sp;
      }
    return out;
  }
  auto eng = make_engine(seed, 0x544150 /* TAP */, step);
  out.first = DenseMatrix(batch_, 1);
  out.second = DenseMatrix(batch_, 1);
  for (int r = 0; r < batch_; ++r) {
    out.first(r, 0) = static_cast<double>(uniform_index(eng, n_states_));
    out.second(r, 0) = static_cast<double>(uniform_index(eng, n_states_));
  }
  return out;
}

SfaSource::SfaSource(std::vector<VideoClip> pool, int clips_per_batch)
    : pool_(std::move(pool)), clips_per_batch_(clips_per_batch) {
  require(!pool_.empty(), "SfaSource: empty clip pool");
  pool_pairs_.reserve(pool_.size());
  for (const auto& clip : pool_) pool_pairs_.push_back(consecutive_pairs(clip));
}

int SfaSource::pairs_per_batch() const {
  return clips_per_batch_ * pool_pairs_.front().first.rows();
}

operators::PairBatch SfaSource::batch(std::uint64_t seed,
                                      std::uint64_t step) const {
  auto eng = make_engine(seed, 0x534641 /* SFA */, step);
  const int per_clip = pool_pairs_.front().first.rows();
  const int dim = pool_pairs_.front().first.cols();
  operators::PairBatch out;
  out.first = DenseMatrix(clips_per_batch_ * per_clip, dim);
  out.second = DenseMatrix(clips_per_batch_ * per_clip, dim);
  for (int c = 0; c < clips_per_batch_; ++c) {
    const auto& pairs =
        pool_pairs_[uniform_index(eng, pool_pairs_.size())];
    for (int t = 0; t < per_clip; ++t) {
      std::memcpy(out.first.row(c * per_clip + t), pairs.first.row(t),
                  sizeof(double) * dim);
      std::memcpy(out.second.row(c * per_clip + t), pairs.second.row(t),
                  sizeof(double) * dim);
    }
  }
  return out;
}

}  // namespace spinet::datasets

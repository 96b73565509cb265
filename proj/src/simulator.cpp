#include "fvrm/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "fvrm/errors.hpp"

namespace fvrm {

namespace {

constexpr std::int64_t kChunkSize = 1 << 16;

constexpr double kZeroWeight = 1e-12;
constexpr double kPositiveWeight = 1e-9;

} // namespace

MotionModel::MotionModel(VelocitySet velocities, SwitchKernel kernel, WaitingTimeModel waiting)
    : velocities_(std::move(velocities)), kernel_(std::move(kernel)), waiting_(std::move(waiting)) {
  if (kernel_.size() != velocities_.num_velocities()) {
    throw std::invalid_argument("MotionModel: kernel size does not match velocity count");
  }
  if (waiting_->size() != velocities_.num_velocities()) {
    throw std::invalid_argument("MotionModel: waiting-law count does not match velocity count");
  }
}

MotionModel::MotionModel(VelocitySet velocities, SwitchKernel kernel, RateFunction rate)
    : velocities_(std::move(velocities)), kernel_(std::move(kernel)), rate_(std::move(rate)) {
  if (kernel_.size() != velocities_.num_velocities()) {
    throw std::invalid_argument("MotionModel: kernel size does not match velocity count");
  }
}

WaitingTimeModel MotionModel::analytic_waiting() const {
  if (waiting_) return *waiting_;
  if (rate_->is_constant()) {
    return WaitingTimeModel::homogeneous_exponential(velocities_.num_velocities(),
                                                     rate_->constant_value());
  }
  throw Error("MotionModel: non-constant rate has no per-velocity renewal form");
}

namespace {

// Core event loop shared by path and endpoint simulation. Walks displacements
// and reports each completed segment (velocity, duration) plus the switch.
template <typename SegmentFn, typename SwitchFn>
void run_path(const MotionModel& model, double t, RngStream& rng, SegmentFn&& on_segment,
              SwitchFn&& on_switch) {
  const SwitchKernel& kernel = model.kernel();
  int h = kernel.sample_initial(rng);
  on_switch(h, 0.0);
  if (t <= 0.0) {
    on_segment(h, 0.0, true);
    return;
  }
  if (model.has_waiting_model()) {
    const WaitingTimeModel& waiting = model.waiting();
    double now = 0.0;
    for (;;) {
      const double w = waiting.law(h).sample(rng);
      if (now + w >= t) {
        on_segment(h, t - now, true);
        return;
      }
      now += w;
      on_segment(h, w, false);
      h = next_velocity(kernel, h, rng);
      on_switch(h, now);
    }
  }
  const std::vector<double> arrivals = sample_arrivals(model.rate(), t, rng);
  double prev = 0.0;
  for (double s : arrivals) {
    on_segment(h, s - prev, false);
    prev = s;
    h = next_velocity(kernel, h, rng);
    on_switch(h, s);
  }
  on_segment(h, t - prev, true);
}

} // namespace

Trajectory simulate_path(const MotionModel& model, double t, RngStream& rng) {
  if (t < 0.0) throw std::invalid_argument("simulate_path: negative horizon");
  const int n = model.velocities().num_velocities();
  Trajectory traj;
  traj.horizon = t;
  traj.occupation = Eigen::VectorXd::Zero(n);
  traj.counts.assign(std::size_t(n), 0);
  traj.endpoint = Eigen::VectorXd::Zero(model.velocities().dim());
  run_path(
      model, t, rng,
      [&](int h, double dt, bool last) {
        traj.occupation(h) += dt;
        traj.endpoint += model.velocities().velocity(h) * dt;
        if (last) traj.terminal = h;
      },
      [&](int h, double when) {
        traj.switch_times.push_back(when);
        traj.velocity_indices.push_back(h);
        traj.counts[std::size_t(h)] += 1;
      });
  return traj;
}

EndpointSample simulate_endpoint(const MotionModel& model, double t, RngStream& rng) {
  if (t < 0.0) throw std::invalid_argument("simulate_endpoint: negative horizon");
  const int n = model.velocities().num_velocities();
  EndpointSample s;
  s.x = Eigen::VectorXd::Zero(model.velocities().dim());
  s.occupation = Eigen::VectorXd::Zero(n);
  run_path(
      model, t, rng,
      [&](int h, double dt, bool last) {
        s.occupation(h) += dt;
        s.x += model.velocities().velocity(h) * dt;
        if (last) s.terminal = h;
      },
      [&](int h, double) {
        s.used_mask |= (1u << unsigned(h));
        ++s.events;
      });
  --s.events;  // displacements are one more than the switches
  return s;
}

std::pair<double, Eigen::VectorXd> occupation_to_position(const VelocitySet& vs,
                                                          const Eigen::VectorXd& occupation) {
  if (occupation.size() != vs.num_velocities()) {
    throw std::invalid_argument("occupation_to_position: size mismatch");
  }
  for (int h = 0; h < occupation.size(); ++h) {
    if (occupation(h) < 0.0) throw std::invalid_argument("occupation_to_position: negative time");
  }
  return {occupation.sum(), vs.matrix() * occupation};
}

Eigen::VectorXd position_to_occupation(const VelocitySet& vs, double t, const Eigen::VectorXd& x) {
  if (!vs.is_minimal()) {
    throw NotMinimal("position_to_occupation: velocities are affinely dependent");
  }
  const int D = vs.dim();
  Eigen::VectorXd occ(D + 1);
  if (vs.is_canonical()) {
    occ(0) = t - x.sum();
    occ.tail(D) = x;
  } else {
    Eigen::MatrixXd B(D + 1, D + 1);
    B.row(0).setOnes();
    B.bottomRows(D) = vs.matrix();
    Eigen::VectorXd rhs(D + 1);
    rhs(0) = t;
    rhs.tail(D) = x;
    occ = B.partialPivLu().solve(rhs);
  }
  const double tol = 1e-9 * std::max(1.0, vs.scale()) * std::max(1.0, t);
  for (int h = 0; h <= D; ++h) {
    if (occ(h) < -tol) {
      throw OutsideHull("position_to_occupation: point outside the support");
    }
  }
  return occ;
}

Eigen::VectorXd canonical_transport(const VelocitySet& source, const Eigen::MatrixXd& target,
                                    double t, const Eigen::VectorXd& x) {
  if (target.cols() != source.num_velocities()) {
    throw std::invalid_argument("canonical_transport: target velocity count mismatch");
  }
  return target * position_to_occupation(source, t, x);
}

namespace {

struct ChunkTally {
  std::map<std::vector<int>, std::int64_t> histogram;
  std::map<std::vector<int>, std::int64_t> region_counts;
  std::map<std::pair<std::vector<int>, int>, std::int64_t> joint_counts;
  std::int64_t boundary_degenerate = 0;
  Eigen::VectorXd occupation_sum;
};

} // namespace

MonteCarloSummary mc_summary(const MotionModel& model, double t, std::int64_t replicas,
                             const GridSpec& grid, std::uint64_t seed, const McOptions& options) {
  if (replicas < 1) throw std::invalid_argument("mc_summary: need at least one replica");
  if (t <= 0.0) throw std::invalid_argument("mc_summary: horizon must be positive");
  const VelocitySet& vs = model.velocities();
  const int n = vs.num_velocities();
  const int R = state_space_dim(vs);

  GridSpec::Kind kind = grid.kind;
  if (kind == GridSpec::Kind::Auto) {
    kind = vs.is_canonical() ? GridSpec::Kind::Simplex : GridSpec::Kind::Boxes;
  }
  if (kind == GridSpec::Kind::Simplex && !vs.is_canonical()) {
    throw std::invalid_argument("mc_summary: simplex grid requires canonical velocities");
  }

  std::optional<SimplexGrid> simplex;
  std::optional<BoxGrid> boxes;
  Eigen::VectorXd lo, hi;
  if (kind == GridSpec::Kind::Simplex) {
    simplex.emplace(vs.dim(), grid.bins, t);
  } else {
    lo = vs.matrix().rowwise().minCoeff() * t;
    hi = vs.matrix().rowwise().maxCoeff() * t;
    for (int d = 0; d < vs.dim(); ++d) {
      if (hi(d) - lo(d) <= 0.0) {  // flat axis: widen so the grid stays valid
        lo(d) -= 0.5;
        hi(d) += 0.5;
      }
    }
    boxes.emplace(lo, hi, grid.bins);
  }

  const std::int64_t num_chunks = (replicas + kChunkSize - 1) / kChunkSize;
  std::vector<ChunkTally> tallies(static_cast<std::size_t>(num_chunks));
  std::atomic<std::int64_t> next_chunk{0};

  auto worker = [&] {
    // dimension spanned by each used-velocity set, cached per worker; a sample
    // enters the position histogram only when its set spans the full state space
    std::map<std::uint32_t, int> mask_dim;
    auto mask_spans_state_space = [&](std::uint32_t mask) {
      auto it = mask_dim.find(mask);
      if (it == mask_dim.end()) {
        std::vector<int> idx;
        for (int h = 0; h < n; ++h) {
          if (mask & (1u << unsigned(h))) idx.push_back(h);
        }
        Eigen::MatrixXd cols(vs.dim(), int(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) cols.col(int(i)) = vs.velocity(idx[i]);
        it = mask_dim.emplace(mask, affine_rank(cols)).first;
      }
      return it->second == R;
    };
    for (;;) {
      const std::int64_t chunk = next_chunk.fetch_add(1);
      if (chunk >= num_chunks) return;
      ChunkTally& tally = tallies[std::size_t(chunk)];
      tally.occupation_sum = Eigen::VectorXd::Zero(n);
      const std::int64_t begin = chunk * kChunkSize;
      const std::int64_t end = std::min(replicas, begin + kChunkSize);
      for (std::int64_t r = begin; r < end; ++r) {
        RngStream rng(seed, std::uint64_t(r));
        EndpointSample s;
        if (options.track_joint_counts) {
          const Trajectory traj = simulate_path(model, t, rng);
          s.x = traj.endpoint;
          s.occupation = traj.occupation;
          s.terminal = traj.terminal;
          tally.joint_counts[{traj.counts, traj.terminal}] += 1;
        } else {
          s = simulate_endpoint(model, t, rng);
        }
        tally.occupation_sum += s.occupation;

        std::vector<int> used;
        bool ambiguous = false;
        for (int h = 0; h < n; ++h) {
          const double w = s.occupation(h) / t;
          if (w > kPositiveWeight) {
            used.push_back(h);
          } else if (w > kZeroWeight) {
            ambiguous = true;
          }
        }
        if (ambiguous) {
          ++tally.boundary_degenerate;
          continue;
        }
        tally.region_counts[used] += 1;

        std::uint32_t used_mask = 0;
        for (int h : used) used_mask |= (1u << unsigned(h));
        if (used.size() >= 2 && mask_spans_state_space(used_mask)) {
          tally.histogram[simplex ? simplex->key_for(s.x) : boxes->key_for(s.x)] += 1;
        }
      }
    }
  };

  const int workers = std::max(1, options.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  MonteCarloSummary out;
  out.t = t;
  out.replicas = replicas;
  out.seed = seed;
  out.grid_kind = kind;
  out.bins = grid.bins;
  if (boxes) {
    out.box_lo = lo;
    out.box_hi = hi;
  }
  out.occupation_sum = Eigen::VectorXd::Zero(n);
  for (const ChunkTally& tally : tallies) {
    for (const auto& [key, count] : tally.histogram) out.histogram[key] += count;
    for (const auto& [key, count] : tally.region_counts) out.region_counts[key] += count;
    for (const auto& [key, count] : tally.joint_counts) out.joint_counts[key] += count;
    out.boundary_degenerate += tally.boundary_degenerate;
    out.occupation_sum += tally.occupation_sum;
  }
  return out;
}

} // namespace fvrm

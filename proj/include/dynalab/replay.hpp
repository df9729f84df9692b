#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "dynalab/array.hpp"
#include "dynalab/params.hpp"
#include "dynalab/rng.hpp"

namespace dynalab {

class SamplingError : public std::runtime_error {
 public:
  explicit SamplingError(const std::string& msg) : std::runtime_error(msg) {}
};

// A minibatch in structure-of-arrays layout. `done` is 1.0 only for true
// environment termination, never for horizon truncation, so targets can
// bootstrap through truncated episode ends.
struct Batch {
  Array obs, act, rew, next_obs, done;
  // Composition bookkeeping: rows [0, n_real) came from the real buffer,
  // rows [n_real, n_real + n_synthetic) from the synthetic buffer.
  std::int64_t n_real = 0;
  std::int64_t n_synthetic = 0;

  std::int64_t size() const { return obs.rows(); }
};

// Fixed-capacity FIFO transition store in structure-of-arrays layout.
// Logical index 0 is always the oldest retained transition.
class ReplayBuffer {
 public:
  ReplayBuffer(std::string name, std::int64_t capacity, std::int64_t obs_dim,
               std::int64_t act_dim);

  void push(const Array& obs, const Array& act, double reward,
            const Array& next_obs, bool terminated);
  void clear();

  std::int64_t size() const { return size_; }
  std::int64_t capacity() const { return capacity_; }
  std::int64_t obs_dim() const { return obs_dim_; }
  std::int64_t act_dim() const { return act_dim_; }
  const std::string& name() const { return name_; }
  // Total pushes ever, including overwritten ones.
  std::int64_t total_pushed() const { return total_pushed_; }

  // Read back one stored transition by logical (oldest-first) index.
  Array obs_at(std::int64_t i) const;
  Array act_at(std::int64_t i) const;
  double reward_at(std::int64_t i) const;
  Array next_obs_at(std::int64_t i) const;
  bool terminated_at(std::int64_t i) const;

  // n transitions uniformly with replacement; one rng draw per row.
  // Throws SamplingError naming the buffer when it is empty.
  Batch sample(std::int64_t n, Rng& rng) const;

  // Fill rows [offset, offset + n) of a preallocated batch with uniform
  // draws; consumes exactly n rng draws.
  void sample_into(Batch& dst, std::int64_t offset, std::int64_t n,
                   Rng& rng) const;

  // Snapshot / restore of the logical content (oldest-first) via the flat
  // binary parameter format.
  ParamSet to_params() const;
  static ReplayBuffer from_params(const std::string& name, const ParamSet& p);

 private:
  std::int64_t storage_index(std::int64_t logical) const;

  std::string name_;
  std::int64_t capacity_, obs_dim_, act_dim_;
  std::int64_t head_ = 0, size_ = 0, total_pushed_ = 0;
  std::vector<double> obs_, act_, rew_, next_obs_, done_;
};

// Mix `batch` rows from the two buffers: round(ratio * batch) synthetic rows
// (round-half-even) and the remainder real. When the synthetic share is zero
// the synthetic buffer and rng stream are untouched; when the synthetic
// buffer is empty its share falls back to real rows.
Batch sample_mixed(const ReplayBuffer& real, const ReplayBuffer& synthetic,
                   std::int64_t batch, double synthetic_ratio, Rng& rng);

// The synthetic row count used by sample_mixed.
std::int64_t synthetic_rows(std::int64_t batch, double synthetic_ratio);

}  // namespace dynalab

#include "dynalab/replay.hpp"

#include <cmath>
#include <cstring>

namespace dynalab {

ReplayBuffer::ReplayBuffer(std::string name, std::int64_t capacity,
                           std::int64_t obs_dim, std::int64_t act_dim)
    : name_(std::move(name)), capacity_(capacity), obs_dim_(obs_dim),
      act_dim_(act_dim) {
  if (capacity_ <= 0 || obs_dim_ <= 0 || act_dim_ <= 0)
    throw DimensionError("ReplayBuffer " + name_ +
                         ": capacity and dims must be positive");
  obs_.resize(static_cast<std::size_t>(capacity_ * obs_dim_));
  act_.resize(static_cast<std::size_t>(capacity_ * act_dim_));
  rew_.resize(static_cast<std::size_t>(capacity_));
  next_obs_.resize(static_cast<std::size_t>(capacity_ * obs_dim_));
  done_.resize(static_cast<std::size_t>(capacity_));
}

void ReplayBuffer::push(const Array& obs, const Array& act, double reward,
                        const Array& next_obs, bool terminated) {
  if (obs.size() != obs_dim_ || next_obs.size() != obs_dim_)
    throw DimensionError("ReplayBuffer " + name_ + ": observation size " +
                         std::to_string(obs.size()) + " != " +
                         std::to_string(obs_dim_));
  if (act.size() != act_dim_)
    throw DimensionError("ReplayBuffer " + name_ + ": action size " +
                         std::to_string(act.size()) + " != " +
                         std::to_string(act_dim_));
  const auto row = static_cast<std::size_t>(head_);
  std::memcpy(&obs_[row * static_cast<std::size_t>(obs_dim_)], obs.data.data(),
              sizeof(double) * static_cast<std::size_t>(obs_dim_));
  std::memcpy(&act_[row * static_cast<std::size_t>(act_dim_)], act.data.data(),
              sizeof(double) * static_cast<std::size_t>(act_dim_));
  std::memcpy(&next_obs_[row * static_cast<std::size_t>(obs_dim_)],
              next_obs.data.data(),
              sizeof(double) * static_cast<std::size_t>(obs_dim_));
  rew_[row] = reward;
  done_[row] = terminated ? 1.0 : 0.0;
  head_ = (head_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
  ++total_pushed_;
}

void ReplayBuffer::clear() {
  head_ = 0;
  size_ = 0;
}

std::int64_t ReplayBuffer::storage_index(std::int64_t logical) const {
  if (logical < 0 || logical >= size_)
    throw DimensionError("ReplayBuffer " + name_ + ": index " +
                         std::to_string(logical) + " out of range");
  if (size_ < capacity_) return logical;
  return (head_ + logical) % capacity_;
}

Array ReplayBuffer::obs_at(std::int64_t i) const {
  const auto r = static_cast<std::size_t>(storage_index(i));
  const auto d = static_cast<std::size_t>(obs_dim_);
  return Array({1, obs_dim_},
               std::vector<double>(obs_.begin() + static_cast<std::ptrdiff_t>(r * d),
                                   obs_.begin() + static_cast<std::ptrdiff_t>((r + 1) * d)));
}

Array ReplayBuffer::act_at(std::int64_t i) const {
  const auto r = static_cast<std::size_t>(storage_index(i));
  const auto d = static_cast<std::size_t>(act_dim_);
  return Array({1, act_dim_},
               std::vector<double>(act_.begin() + static_cast<std::ptrdiff_t>(r * d),
                                   act_.begin() + static_cast<std::ptrdiff_t>((r + 1) * d)));
}

double ReplayBuffer::reward_at(std::int64_t i) const {
  return rew_[static_cast<std::size_t>(storage_index(i))];
}

Array ReplayBuffer::next_obs_at(std::int64_t i) const {
  const auto r = static_cast<std::size_t>(storage_index(i));
  const auto d = static_cast<std::size_t>(obs_dim_);
  return Array({1, obs_dim_},
               std::vector<double>(next_obs_.begin() + static_cast<std::ptrdiff_t>(r * d),
                                   next_obs_.begin() + static_cast<std::ptrdiff_t>((r + 1) * d)));
}

bool ReplayBuffer::terminated_at(std::int64_t i) const {
  return done_[static_cast<std::size_t>(storage_index(i))] != 0.0;
}

namespace {

void copy_row(const std::vector<double>& src, std::int64_t src_row,
              std::int64_t dim, Array& dst, std::int64_t dst_row) {
  std::memcpy(&dst.data[static_cast<std::size_t>(dst_row * dim)],
              &src[static_cast<std::size_t>(src_row * dim)],
              sizeof(double) * static_cast<std::size_t>(dim));
}

Batch make_batch(std::int64_t n, std::int64_t obs_dim, std::int64_t act_dim) {
  Batch b;
  b.obs = Array::zeros({n, obs_dim});
  b.act = Array::zeros({n, act_dim});
  b.rew = Array::zeros({n, 1});
  b.next_obs = Array::zeros({n, obs_dim});
  b.done = Array::zeros({n, 1});
  return b;
}

}  // namespace

void ReplayBuffer::sample_into(Batch& dst, std::int64_t offset, std::int64_t n,
                               Rng& rng) const {
  if (size_ == 0)
    throw SamplingError("ReplayBuffer " + name_ + ": sample from empty buffer");
  for (std::int64_t k = 0; k < n; ++k) {
    std::int64_t logical = rng.below(size_);
    std::int64_t row =
        size_ < capacity_ ? logical : (head_ + logical) % capacity_;
    copy_row(obs_, row, obs_dim_, dst.obs, offset + k);
    copy_row(act_, row, act_dim_, dst.act, offset + k);
    dst.rew(offset + k, 0) = rew_[static_cast<std::size_t>(row)];
    copy_row(next_obs_, row, obs_dim_, dst.next_obs, offset + k);
    dst.done(offset + k, 0) = done_[static_cast<std::size_t>(row)];
  }
}

Batch ReplayBuffer::sample(std::int64_t n, Rng& rng) const {
  if (n <= 0)
    throw SamplingError("ReplayBuffer " + name_ + ": non-positive sample size");
  Batch b = make_batch(n, obs_dim_, act_dim_);
  b.n_real = n;
  sample_into(b, 0, n, rng);
  return b;
}

ParamSet ReplayBuffer::to_params() const {
  ParamSet p;
  Array obs = Array::zeros({size_, obs_dim_});
  Array act = Array::zeros({size_, act_dim_});
  Array rew = Array::zeros({size_, 1});
  Array next_obs = Array::zeros({size_, obs_dim_});
  Array done = Array::zeros({size_, 1});
  for (std::int64_t i = 0; i < size_; ++i) {
    std::int64_t row = storage_index(i);
    copy_row(obs_, row, obs_dim_, obs, i);
    copy_row(act_, row, act_dim_, act, i);
    rew(i, 0) = rew_[static_cast<std::size_t>(row)];
    copy_row(next_obs_, row, obs_dim_, next_obs, i);
    done(i, 0) = done_[static_cast<std::size_t>(row)];
  }
  p.insert("obs", std::move(obs));
  p.insert("act", std::move(act));
  p.insert("rew", std::move(rew));
  p.insert("next_obs", std::move(next_obs));
  p.insert("done", std::move(done));
  p.insert("meta.capacity", Array::scalar(static_cast<double>(capacity_)));
  p.insert("meta.total_pushed",
           Array::scalar(static_cast<double>(total_pushed_)));
  return p;
}

ReplayBuffer ReplayBuffer::from_params(const std::string& name,
                                       const ParamSet& p) {
  const Array& obs = p.at("obs");
  const Array& act = p.at("act");
  auto capacity = static_cast<std::int64_t>(p.at("meta.capacity")[0]);
  ReplayBuffer buf(name, capacity, obs.cols(), act.cols());
  for (std::int64_t i = 0; i < obs.rows(); ++i) {
    Array o = Array::zeros({1, obs.cols()});
    Array a = Array::zeros({1, act.cols()});
    Array no = Array::zeros({1, obs.cols()});
    copy_row(obs.data, i, obs.cols(), o, 0);
    copy_row(act.data, i, act.cols(), a, 0);
    copy_row(p.at("next_obs").data, i, obs.cols(), no, 0);
    buf.push(o, a, p.at("rew")(i, 0), no, p.at("done")(i, 0) != 0.0);
  }
  buf.total_pushed_ =
      static_cast<std::int64_t>(p.at("meta.total_pushed")[0]);
  return buf;
}

std::int64_t synthetic_rows(std::int64_t batch, double synthetic_ratio) {
  if (synthetic_ratio <= 0.0) return 0;
  if (synthetic_ratio >= 1.0) return batch;
  auto n = static_cast<std::int64_t>(
      std::nearbyint(synthetic_ratio * static_cast<double>(batch)));
  return std::min(std::max<std::int64_t>(n, 0), batch);
}

Batch sample_mixed(const ReplayBuffer& real, const ReplayBuffer& synthetic,
                   std::int64_t batch, double synthetic_ratio, Rng& rng) {
  std::int64_t n_syn = synthetic_rows(batch, synthetic_ratio);
  if (n_syn > 0 && synthetic.size() == 0) n_syn = 0;
  const std::int64_t n_real = batch - n_syn;
  if (real.obs_dim() != synthetic.obs_dim() ||
      real.act_dim() != synthetic.act_dim())
    throw DimensionError("sample_mixed: buffer dimensions differ");
  Batch b = make_batch(batch, real.obs_dim(), real.act_dim());
  b.n_real = n_real;
  b.n_synthetic = n_syn;
  if (n_real > 0) real.sample_into(b, 0, n_real, rng);
  if (n_syn > 0) synthetic.sample_into(b, n_real, n_syn, rng);
  return b;
}

}  // namespace dynalab

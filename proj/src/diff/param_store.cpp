#include "netmarl/diff/param_store.hpp"

#include <cmath>
#include <stdexcept>

#include "netmarl/binio.hpp"
#include "netmarl/error.hpp"
#include "netmarl/rng.hpp"

namespace netmarl::diff {

namespace {
constexpr std::uint32_t kCheckpointMagic = 0x4B434D4E;  // "NMCK"
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

ParamId ParamStore::add(const std::string& name, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw ShapeMismatch("parameter '" + name + "' has empty shape");
  if (index_.count(name)) throw ShapeMismatch("parameter '" + name + "' registered twice");
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  Param p;
  p.name = name;
  p.rows = rows;
  p.cols = cols;
  p.value.assign(n, 0.0);
  p.grad.assign(n, 0.0);
  p.m.assign(n, 0.0);
  p.v.assign(n, 0.0);
  const int id = static_cast<int>(params_.size());
  params_.push_back(std::move(p));
  index_.emplace(name, id);
  return ParamId{id};
}

ParamId ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return ParamId{it->second};
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  has_gradients_ = false;
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_) {
    if (p.frozen) continue;
    for (double g : p.grad) s += g * g;
  }
  return std::sqrt(s);
}

void ParamStore::scale_grads(double factor) {
  for (auto& p : params_) {
    for (double& g : p.grad) g *= factor;
  }
}

std::uint64_t ParamStore::shape_digest() const {
  std::uint64_t h = fnv1a("netmarl-shapes");
  for (const auto& p : params_) {
    h = fnv1a(p.name, h);
    h = fnv1a(std::to_string(p.rows) + "x" + std::to_string(p.cols), h);
  }
  return h;
}

std::uint64_t ParamStore::value_digest() const {
  std::uint64_t h = shape_digest();
  for (const auto& p : params_) {
    for (double x : p.value) {
      const float f = static_cast<float>(x);
      h = fnv1a(std::string_view(reinterpret_cast<const char*>(&f), sizeof f), h);
    }
  }
  return h;
}

std::string ParamStore::save_checkpoint(std::uint64_t config_digest) const {
  binio::Writer w;
  w.put(kCheckpointMagic);
  w.put(kCheckpointVersion);
  w.put(config_digest);
  w.put(static_cast<std::uint32_t>(params_.size()));
  for (const auto& p : params_) {
    w.put_string(p.name);
    w.put(static_cast<std::uint32_t>(p.rows));
    w.put(static_cast<std::uint32_t>(p.cols));
  }
  for (const auto& p : params_) {
    for (double x : p.value) w.put(static_cast<float>(x));
  }
  return w.take();
}

std::uint64_t checkpoint_digest(const std::string& bytes) {
  binio::Reader r(bytes);
  if (r.get<std::uint32_t>() != kCheckpointMagic) throw CheckpointMismatch("not a netmarl checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointMismatch("unsupported checkpoint version " + std::to_string(version));
  }
  return r.get<std::uint64_t>();
}

std::uint64_t ParamStore::load_checkpoint(const std::string& bytes, std::uint64_t expected_digest,
                                          bool check_digest) {
  binio::Reader r(bytes);
  try {
    if (r.get<std::uint32_t>() != kCheckpointMagic) throw CheckpointMismatch("not a netmarl checkpoint");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
      throw CheckpointMismatch("unsupported checkpoint version " + std::to_string(version));
    }
    const auto digest = r.get<std::uint64_t>();
    if (check_digest && digest != expected_digest) {
      throw CheckpointMismatch("config digest mismatch");
    }
    const auto n = r.get<std::uint32_t>();
    if (n != params_.size()) throw CheckpointMismatch("parameter count mismatch");
    for (const auto& p : params_) {
      const std::string name = r.get_string();
      const auto rows = r.get<std::uint32_t>();
      const auto cols = r.get<std::uint32_t>();
      if (name != p.name || static_cast<int>(rows) != p.rows || static_cast<int>(cols) != p.cols) {
        throw CheckpointMismatch("shape mismatch at parameter '" + p.name + "'");
      }
    }
    for (auto& p : params_) {
      for (double& x : p.value) x = static_cast<double>(r.get<float>());
    }
    if (!r.at_end()) throw CheckpointMismatch("trailing bytes in checkpoint");
    return digest;
  } catch (const FormatError& e) {
    throw CheckpointMismatch(e.what());
  }
}

void adam_update(ParamStore& store, const AdamConfig& cfg) {
  if (!store.has_gradients()) throw MissingGradient("adam_update called before backward");
  const int t = store.adam_steps() + 1;
  store.set_adam_steps(t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : store.params()) {
    if (p.frozen) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
      p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = p.m[i] / c1;
      const double vhat = p.v[i] / c2;
      p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  store.zero_grad();
}

}  // namespace netmarl::diff

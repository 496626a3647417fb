#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace netmarl::diff {

struct ParamId {
  int index = -1;
  bool valid() const { return index >= 0; }
  friend bool operator==(ParamId, ParamId) = default;
};

/// Named, row-major parameter matrices with gradient accumulators and Adam
/// moments. Shapes are fixed at registration.
class ParamStore {
 public:
  struct Param {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> m;
    std::vector<double> v;
    bool frozen = false;  // excluded from optimization
  };

  /// Registers a zero-initialised parameter; names must be unique.
  ParamId add(const std::string& name, int rows, int cols);
  /// Throws std::out_of_range for unknown names.
  ParamId find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Param& at(ParamId id) { return params_[static_cast<std::size_t>(id.index)]; }
  const Param& at(ParamId id) const { return params_[static_cast<std::size_t>(id.index)]; }
  std::span<double> value(ParamId id) { return at(id).value; }
  std::span<const double> value(ParamId id) const { return at(id).value; }
  std::span<double> grad(ParamId id) { return at(id).grad; }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  /// Set by Tape::backward, cleared by zero_grad / adam_update.
  bool has_gradients() const { return has_gradients_; }
  void mark_gradients() { has_gradients_ = true; }
  double grad_norm() const;
  void scale_grads(double factor);

  int adam_steps() const { return adam_steps_; }
  void set_adam_steps(int n) { adam_steps_ = n; }

  /// Stable hash of names and shapes.
  std::uint64_t shape_digest() const;
  /// Hash of parameter values (as stored in checkpoints).
  std::uint64_t value_digest() const;

  /// Versioned checkpoint: header (version, config digest, names, shapes)
  /// followed by little-endian float32 arrays.
  std::string save_checkpoint(std::uint64_t config_digest) const;
  /// Overwrites values in place; throws CheckpointMismatch on shape or
  /// digest mismatch. Returns the stored config digest.
  std::uint64_t load_checkpoint(const std::string& bytes,
                                std::uint64_t expected_digest, bool check_digest = true);

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> index_;
  bool has_gradients_ = false;
  int adam_steps_ = 0;
};

/// Reads the config digest stored in a checkpoint without loading it.
std::uint64_t checkpoint_digest(const std::string& bytes);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam step over every non-frozen parameter, then zeroes the
/// gradients. Throws MissingGradient when no backward pass has populated them.
void adam_update(ParamStore& store, const AdamConfig& cfg = {});

}  // namespace netmarl::diff

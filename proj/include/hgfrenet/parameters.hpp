#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hgfrenet/autograd.hpp"

namespace hgf {

/// Named model state. Trainable entries receive gradients; buffers (batch
/// norm running statistics) are saved with the weights but never optimized.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Var var;
    bool trainable;
  };

  /// Registers a trainable parameter. Names must be unique.
  Var add(std::string name, Tensor init);
  Var add_buffer(std::string name, Tensor init);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<Var> trainable() const;
  const Entry* find(std::string_view name) const;

  /// Number of trainable scalars.
  std::size_t trainable_count() const;
  void zero_grad();

 private:
  Entry& insert(std::string name, Tensor init, bool trainable);
  std::vector<Entry> entries_;
};

// Checkpoint file: magic "HGFW1", then one record per entry until end of
// file: u32 name length, name bytes, u32 rank, rank x u32 dims, f32 payload.
// All integers and floats little-endian.
inline constexpr std::string_view kCheckpointMagic = "HGFW1";

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);

/// Loads every record into the entry of the same name. Missing, unknown or
/// mis-shaped records are DataErrors.
void load_checkpoint(ParameterSet& params, const std::filesystem::path& path);

/// Rounds every entry to f32, matching what a save/load round trip stores.
void round_to_checkpoint_precision(ParameterSet& params);

}  // namespace hgf

// SPDX-License-Identifier: Apache-2.0
//
// Self-describing binary checkpoints. Layout, all little-endian:
//   "MVAE" | u32 version | str config-json | u32 n, n x str vocabulary
//   | tensors parameters | i64 adam step | tensors m | tensors v
//   | i64 global step | i32 epoch | "END!"
// where str = u64 length + bytes and tensors = u32 count, then per tensor
// str name, u64 rows, u64 cols, rows*cols f64 in column-major order.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvae/config.hpp"
#include "mvae/corpus.hpp"
#include "mvae/vae.hpp"

namespace mvae::training {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class VersionMismatch : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> data;

  bool operator==(const NamedTensor &) const = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  TrainConfig config;
  Vocabulary vocab;
  std::vector<NamedTensor> parameters;
  std::int64_t adam_step = 0;
  std::vector<NamedTensor> adam_m;
  std::vector<NamedTensor> adam_v;
  std::int64_t global_step = 0;
  std::int32_t epoch = 0;

  bool operator==(const Checkpoint &) const = default;
};

template <typename Scalar>
Checkpoint make_checkpoint(const TrainConfig &config, const Vocabulary &vocab, vae::SequenceVae<Scalar> &model,
                           const nn::AdamState<Scalar> &adam, long global_step, int epoch);

/// Rebuilds the model described by the checkpoint. Throws IoError when a
/// tensor is missing or has the wrong shape.
template <typename Scalar>
vae::SequenceVae<Scalar> restore_model(const Checkpoint &c);

template <typename Scalar>
nn::AdamState<Scalar> restore_optimizer(const Checkpoint &c);

/// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path &path, const Checkpoint &c);

/// Throws IoError on unreadable, truncated or corrupt files and
/// VersionMismatch on an unknown format version.
Checkpoint load_checkpoint(const std::filesystem::path &path);

}  // namespace mvae::training

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lpdh/errors.hpp"
#include "lpdh/network.hpp"
#include "lpdh/training.hpp"

namespace lpdh {

enum class CheckpointErrorKind { io, bad_magic, version, truncated, shape_mismatch };

class CheckpointError : public Error {
public:
    CheckpointError(CheckpointErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    CheckpointErrorKind kind() const noexcept { return kind_; }

private:
    CheckpointErrorKind kind_;
};

inline constexpr char kCheckpointMagic[] = "LPDH1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Contents of a checkpoint file, independent of the model's scalar type.
// Tensors are stored as little-endian f32.
struct Checkpoint {
    ModelConfig config;
    std::vector<std::pair<std::string, Tensor<float>>> params;
    std::optional<AdamState<float>> optimizer;
};

// Writes to `path + ".tmp"` and renames, so a crash never leaves a partial
// file under `path`.
template <typename T>
void save_checkpoint(const std::string& path, const DehazeModel<T>& model, const AdamState<T>* optimizer = nullptr);

Checkpoint read_checkpoint(const std::string& path);

// Copies parameters into `model`. The stored hyperparameters and every
// tensor's name and shape must match; the error names the first mismatch.
template <typename T>
void load_into(const Checkpoint& ckpt, DehazeModel<T>& model);

template <typename T>
DehazeModel<T> load_model(const std::string& path);

template <typename T>
AdamState<T> load_optimizer(const Checkpoint& ckpt);

} // namespace lpdh

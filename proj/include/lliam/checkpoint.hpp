// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory layout:
//
//   manifest.txt   text; one record per line
//   tensors.bin    raw little-endian float64 data, tensors back to back
//
// manifest.txt:
//
//   lliam-checkpoint 1
//   kind <base|merged|adapter>
//   dtype f64le
//   blob tensors.bin <bytes> <sha256>
//   meta <key> <value...>
//   tensor <name> <d0xd1...> <offset> <bytes>
//
// Records appear in that order; meta and tensor lines repeat.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lliam/model.hpp"
#include "lliam/tensor.hpp"

namespace lliam {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    std::string kind = "base";
    std::map<std::string, std::string> meta;
    std::vector<NamedTensor> tensors;

    const Tensor& tensor(const std::string& name) const;
    const std::string& meta_at(const std::string& key) const;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
// Throws ParseError on a malformed manifest, a size mismatch or a blob whose
// digest differs from the manifest.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Model config <-> meta entries ("model.d_model" = "128", ...).
void write_model_config(const ModelConfig& config, std::map<std::string, std::string>& meta);
ModelConfig read_model_config(const std::map<std::string, std::string>& meta);

// Full model (base weights; adapters are not stored here).
void save_model(const Model& model, const std::filesystem::path& dir, const std::string& kind = "base",
                const std::map<std::string, std::string>& extra_meta = {});
Model load_model(const std::filesystem::path& dir);

// SHA-256 over names, shapes and values of the base (non-adapter) weights.
std::string base_digest(const Model& model);

} // namespace lliam

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lliam/lora.hpp"
#include "lliam/model.hpp"

namespace lliam {

// Target names: "query", "key", "value", "output".
bool is_lora_target(const std::string& name);

// Wraps the targeted projections of every layer with fresh adapters and
// freezes every base weight. Returns the number of adapters created.
std::size_t inject_lora(Model& model, const LoraConfig& config, std::uint64_t seed);

// Copy of the model with every adapter folded into its base weight.
Model merge_lora(const Model& model);

// Adapter checkpoint: A/B tensors plus the LoRA config, the model config and
// the digest of the base weights the adapters were trained against.
void save_adapters(const Model& model, const LoraConfig& config, const std::filesystem::path& dir);

// Injects adapters into `model` and loads their values. Throws ConfigError if
// the model config or base digest differs from the recorded one.
LoraConfig load_adapters(Model& model, const std::filesystem::path& dir);

} // namespace lliam

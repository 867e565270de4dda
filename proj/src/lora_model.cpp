// SPDX-License-Identifier: Apache-2.0
#include "lliam/lora_model.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "lliam/checkpoint.hpp"
#include "lliam/errors.hpp"

namespace lliam {

namespace {

constexpr const char* kTargets[] = {"query", "key", "value", "output"};

Projection& projection_for(DecoderLayer& L, const std::string& target) {
    if (target == "query") return L.wq;
    if (target == "key") return L.wk;
    if (target == "value") return L.wv;
    if (target == "output") return L.wo;
    throw ConfigError("unknown LoRA target '" + target + "' (expected query, key, value or output)");
}

std::size_t target_index(const std::string& target) {
    for (std::size_t i = 0; i < std::size(kTargets); ++i)
        if (target == kTargets[i]) return i;
    throw ConfigError("unknown LoRA target '" + target + "' (expected query, key, value or output)");
}

std::string real_to_string(Real v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

Real parse_real(const std::string& s) {
    Real v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("invalid number in adapter manifest: " + s);
    return v;
}

} // namespace

bool is_lora_target(const std::string& name) {
    return std::find(std::begin(kTargets), std::end(kTargets), name) != std::end(kTargets);
}

std::size_t inject_lora(Model& model, const LoraConfig& config, std::uint64_t seed) {
    if (config.targets.empty()) throw ConfigError("LoRA needs at least one target projection");
    for (const auto& t : config.targets) target_index(t);
    if (model.adapter_count() != 0) throw ConfigError("model already carries LoRA adapters");

    model.set_base_trainable(false);
    std::size_t created = 0;
    auto& layers = model.weights().layers;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        for (const auto& t : config.targets) {
            Projection& p = projection_for(layers[l], t);
            if (p.lora) continue; // duplicate target name
            CounterRng rng(derive_key(seed, l * std::size(kTargets) + target_index(t)));
            p.lora = lora_init(p.weight, config, rng);
            ++created;
        }
    }
    return created;
}

Model merge_lora(const Model& model) {
    Model merged = model.clone();
    for (auto& L : merged.weights().layers) {
        for (Projection* p : {&L.wq, &L.wk, &L.wv, &L.wo}) {
            if (!p->lora) continue;
            p->weight = lora_merge(*p->lora);
            p->lora.reset();
        }
    }
    merged.set_base_trainable(false);
    return merged;
}

void save_adapters(const Model& model, const LoraConfig& config, const std::filesystem::path& dir) {
    if (model.adapter_count() == 0) throw ConfigError("model has no LoRA adapters to save");
    Checkpoint ckpt;
    ckpt.kind = "adapter";
    write_model_config(model.config(), ckpt.meta);
    ckpt.meta["base_digest"] = base_digest(model);
    ckpt.meta["lora.rank"] = std::to_string(config.rank);
    ckpt.meta["lora.alpha"] = real_to_string(config.alpha);
    ckpt.meta["lora.dropout"] = real_to_string(config.dropout);
    ckpt.meta["lora.scale"] = real_to_string(config.scale());
    std::string targets;
    for (const auto& t : config.targets) targets += (targets.empty() ? "" : ",") + t;
    ckpt.meta["lora.targets"] = targets;
    ckpt.tensors = model.adapter_tensors();
    save_checkpoint(dir, ckpt);
}

LoraConfig load_adapters(Model& model, const std::filesystem::path& dir) {
    const Checkpoint ckpt = load_checkpoint(dir);
    if (ckpt.kind != "adapter") throw ConfigError(dir.string() + " is not an adapter checkpoint");
    if (read_model_config(ckpt.meta) != model.config())
        throw ConfigError("adapter checkpoint " + dir.string() + " was trained for a different model config");
    if (ckpt.meta_at("base_digest") != base_digest(model))
        throw ConfigError("adapter checkpoint " + dir.string() + " was trained against different base weights");

    LoraConfig config;
    config.rank = std::stoul(ckpt.meta_at("lora.rank"));
    config.alpha = parse_real(ckpt.meta_at("lora.alpha"));
    config.dropout = parse_real(ckpt.meta_at("lora.dropout"));
    config.targets.clear();
    std::istringstream ts(ckpt.meta_at("lora.targets"));
    for (std::string t; std::getline(ts, t, ',');) config.targets.push_back(t);

    inject_lora(model, config, 0);
    for (auto& [name, t] : model.adapter_tensors()) {
        const Tensor& stored = ckpt.tensor(name);
        if (stored.shape() != t.shape())
            throw ConfigError("adapter tensor " + name + " has shape " + shape_to_string(stored.shape()) +
                              ", expected " + shape_to_string(t.shape()));
        std::copy(stored.data().begin(), stored.data().end(), t.data().begin());
    }
    if (ckpt.tensors.size() != model.adapter_tensors().size())
        throw ConfigError("adapter checkpoint " + dir.string() + " holds unexpected tensors");
    return config;
}

} // namespace lliam

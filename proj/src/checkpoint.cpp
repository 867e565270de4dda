// SPDX-License-Identifier: Apache-2.0
#include "lliam/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lliam/digest.hpp"
#include "lliam/errors.hpp"

namespace lliam {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.txt";
constexpr const char* kBlob = "tensors.bin";

std::string real_to_string(Real v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

Real parse_real(const std::string& text, const std::string& what) {
    Real v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) throw ParseError("invalid number for " + what + ": " + text);
    return v;
}

std::size_t parse_size(const std::string& text, const std::string& what) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) throw ParseError("invalid integer for " + what + ": " + text);
    return v;
}

Shape parse_shape(const std::string& text) {
    Shape shape;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('x', start);
        shape.push_back(parse_size(text.substr(start, end - start), "shape"));
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return shape;
}

void to_little_endian(std::vector<Real>& values) {
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& v : values) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            bits = __builtin_bswap64(bits);
            std::memcpy(&v, &bits, sizeof bits);
        }
    }
}

void hash_tensor(Sha256& h, const std::string& name, const Tensor& t) {
    h.update(name);
    h.update(std::string_view("\0", 1));
    h.update(shape_to_string(t.shape()));
    h.update(std::string_view("\0", 1));
    std::vector<Real> values(t.data().begin(), t.data().end());
    to_little_endian(values);
    h.update(std::as_bytes(std::span(values)));
}

} // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw ConfigError("checkpoint has no tensor named " + name);
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ConfigError("checkpoint has no meta entry " + key);
    return it->second;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
    fs::create_directories(dir);
    std::vector<std::string> tensor_lines;
    Sha256 blob_hash;
    std::size_t offset = 0;
    {
        std::ofstream blob(dir / kBlob, std::ios::binary | std::ios::trunc);
        if (!blob) throw ParseError("cannot write " + (dir / kBlob).string());
        for (const auto& [name, t] : ckpt.tensors) {
            if (name.find_first_of(" \t\n") != std::string::npos)
                throw ConfigError("tensor names may not contain whitespace: " + name);
            std::vector<Real> values(t.data().begin(), t.data().end());
            to_little_endian(values);
            const auto bytes = std::as_bytes(std::span(values));
            blob.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
            blob_hash.update(bytes);
            tensor_lines.push_back("tensor " + name + " " + shape_to_string(t.shape()) + " " +
                                   std::to_string(offset) + " " + std::to_string(bytes.size()));
            offset += bytes.size();
        }
        if (!blob) throw ParseError("failed writing " + (dir / kBlob).string());
    }
    std::ofstream manifest(dir / kManifest, std::ios::trunc);
    if (!manifest) throw ParseError("cannot write " + (dir / kManifest).string());
    manifest << "lliam-checkpoint " << kCheckpointVersion << '\n';
    manifest << "kind " << ckpt.kind << '\n';
    manifest << "dtype f64le\n";
    manifest << "blob " << kBlob << ' ' << offset << ' ' << blob_hash.hex_digest() << '\n';
    for (const auto& [k, v] : ckpt.meta) {
        if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos)
            throw ConfigError("invalid meta entry " + k);
        manifest << "meta " << k << ' ' << v << '\n';
    }
    for (const auto& line : tensor_lines) manifest << line << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
    std::ifstream manifest(dir / kManifest);
    if (!manifest) throw ParseError("cannot open checkpoint manifest " + (dir / kManifest).string());

    Checkpoint ckpt;
    std::string line;
    std::size_t line_no = 0;
    std::size_t blob_bytes = 0;
    std::string blob_digest;
    struct Entry {
        std::string name;
        Shape shape;
        std::size_t offset, bytes;
    };
    std::vector<Entry> entries;
    const auto fail = [&](const std::string& why) {
        throw ParseError((dir / kManifest).string() + ":" + std::to_string(line_no) + ": " + why);
    };
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string tag;
        is >> tag;
        if (line_no == 1) {
            int version = 0;
            if (tag != "lliam-checkpoint" || !(is >> version)) fail("not a checkpoint manifest");
            if (version != kCheckpointVersion) fail("unsupported checkpoint version " + std::to_string(version));
        } else if (tag == "kind") {
            is >> ckpt.kind;
        } else if (tag == "dtype") {
            std::string dtype;
            is >> dtype;
            if (dtype != "f64le") fail("unsupported dtype " + dtype);
        } else if (tag == "blob") {
            std::string file, bytes;
            if (!(is >> file >> bytes >> blob_digest) || file != kBlob) fail("malformed blob record");
            blob_bytes = parse_size(bytes, "blob size");
        } else if (tag == "meta") {
            std::string key;
            is >> key;
            std::string value;
            std::getline(is >> std::ws, value);
            ckpt.meta[key] = value;
        } else if (tag == "tensor") {
            std::string name, shape, offset, bytes;
            if (!(is >> name >> shape >> offset >> bytes)) fail("malformed tensor record");
            entries.push_back({name, parse_shape(shape), parse_size(offset, "offset"), parse_size(bytes, "bytes")});
        } else {
            fail("unknown record '" + tag + "'");
        }
    }
    if (line_no == 0) throw ParseError("empty checkpoint manifest in " + dir.string());

    std::ifstream blob(dir / kBlob, std::ios::binary);
    if (!blob) throw ParseError("cannot open " + (dir / kBlob).string());
    std::vector<char> raw((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
    if (raw.size() != blob_bytes)
        throw ParseError("checkpoint blob is " + std::to_string(raw.size()) + " bytes, manifest says " +
                         std::to_string(blob_bytes));
    Sha256 h;
    h.update(std::as_bytes(std::span(raw)));
    if (h.hex_digest() != blob_digest) throw ParseError("checkpoint blob digest mismatch in " + dir.string());

    for (const auto& e : entries) {
        if (e.bytes != shape_numel(e.shape) * sizeof(Real) || e.offset + e.bytes > raw.size())
            throw ParseError("tensor " + e.name + " has an inconsistent extent");
        std::vector<Real> values(shape_numel(e.shape));
        std::memcpy(values.data(), raw.data() + e.offset, e.bytes);
        to_little_endian(values);
        ckpt.tensors.emplace_back(e.name, Tensor(e.shape, std::move(values)));
    }
    return ckpt;
}

void write_model_config(const ModelConfig& c, std::map<std::string, std::string>& meta) {
    meta["model.n_layers"] = std::to_string(c.n_layers);
    meta["model.n_heads"] = std::to_string(c.n_heads);
    meta["model.d_model"] = std::to_string(c.d_model);
    meta["model.d_ff"] = std::to_string(c.d_ff);
    meta["model.vocab_size"] = std::to_string(c.vocab_size);
    meta["model.max_context"] = std::to_string(c.max_context);
    meta["model.rope_base"] = real_to_string(c.rope_base);
    meta["model.norm_eps"] = real_to_string(c.norm_eps);
    meta["model.use_rope"] = c.use_rope ? "1" : "0";
}

ModelConfig read_model_config(const std::map<std::string, std::string>& meta) {
    const auto get = [&](const std::string& key) -> const std::string& {
        auto it = meta.find(key);
        if (it == meta.end()) throw ParseError("checkpoint is missing " + key);
        return it->second;
    };
    ModelConfig c;
    c.n_layers = parse_size(get("model.n_layers"), "n_layers");
    c.n_heads = parse_size(get("model.n_heads"), "n_heads");
    c.d_model = parse_size(get("model.d_model"), "d_model");
    c.d_ff = parse_size(get("model.d_ff"), "d_ff");
    c.vocab_size = parse_size(get("model.vocab_size"), "vocab_size");
    c.max_context = parse_size(get("model.max_context"), "max_context");
    c.rope_base = parse_real(get("model.rope_base"), "rope_base");
    c.norm_eps = parse_real(get("model.norm_eps"), "norm_eps");
    c.use_rope = get("model.use_rope") != "0";
    return c;
}

void save_model(const Model& model, const fs::path& dir, const std::string& kind,
                const std::map<std::string, std::string>& extra_meta) {
    Checkpoint ckpt;
    ckpt.kind = kind;
    ckpt.meta = extra_meta;
    write_model_config(model.config(), ckpt.meta);
    ckpt.meta["base_digest"] = base_digest(model);
    ckpt.tensors = model.base_tensors();
    save_checkpoint(dir, ckpt);
}

Model load_model(const fs::path& dir) {
    Checkpoint ckpt = load_checkpoint(dir);
    if (ckpt.kind == "adapter") throw ConfigError(dir.string() + " holds adapters, not a model");
    const ModelConfig config = read_model_config(ckpt.meta);
    DecoderWeights w;
    w.embedding = ckpt.tensor("embedding");
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        DecoderLayer L;
        L.attn_norm = ckpt.tensor(p + "attn_norm");
        L.wq.weight = ckpt.tensor(p + "wq");
        L.wk.weight = ckpt.tensor(p + "wk");
        L.wv.weight = ckpt.tensor(p + "wv");
        L.wo.weight = ckpt.tensor(p + "wo");
        L.ffn_norm = ckpt.tensor(p + "ffn_norm");
        L.w_gate = ckpt.tensor(p + "w_gate");
        L.w_up = ckpt.tensor(p + "w_up");
        L.w_down = ckpt.tensor(p + "w_down");
        w.layers.push_back(std::move(L));
    }
    w.final_norm = ckpt.tensor("final_norm");
    w.output = ckpt.tensor("output");
    Model model(config, std::move(w));
    if (auto it = ckpt.meta.find("base_digest"); it != ckpt.meta.end() && it->second != base_digest(model))
        throw ParseError("model weights in " + dir.string() + " do not match the recorded digest");
    return model;
}

std::string base_digest(const Model& model) {
    Sha256 h;
    for (const auto& [name, t] : model.base_tensors()) hash_tensor(h, name, t);
    return h.hex_digest();
}

} // namespace lliam

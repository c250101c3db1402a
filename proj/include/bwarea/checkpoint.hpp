// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bwarea/layers.hpp"
#include "bwarea/models.hpp"
#include "bwarea/optimizer.hpp"

// Binary layout (all integers little-endian):
//
//   "BWA1"  u32 version  u64 total_length
//   u32 header_length  header (JSON: model hyperparameters, provenance, optimizer steps)
//   u32 record_count
//   per record, sorted by name:
//     u16 name_length  name  u8 rank  u64 dims[rank]  f32 payload[product(dims)]
namespace bwarea {

class CheckpointError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class CheckpointIntegrityError : public CheckpointError {
   public:
    using CheckpointError::CheckpointError;
};

class CheckpointVersionError : public CheckpointError {
   public:
    using CheckpointError::CheckpointError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"vocab_size", c.vocab_size},       {"d_model", c.d_model},
         {"d_code", c.d_code},               {"num_codes", c.num_codes},
         {"context_layers", c.context_layers}, {"dynamics_layers", c.dynamics_layers},
         {"inverse_layers", c.inverse_layers}, {"policy_layers", c.policy_layers},
         {"heads", c.heads},                 {"ffn_hidden", c.ffn_hidden},
         {"max_context", c.max_context},     {"init_std", c.init_std}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.d_model = j.value("d_model", d.d_model);
    c.d_code = j.value("d_code", d.d_code);
    c.num_codes = j.value("num_codes", d.num_codes);
    c.context_layers = j.value("context_layers", d.context_layers);
    c.dynamics_layers = j.value("dynamics_layers", d.dynamics_layers);
    c.inverse_layers = j.value("inverse_layers", d.inverse_layers);
    c.policy_layers = j.value("policy_layers", d.policy_layers);
    c.heads = j.value("heads", d.heads);
    c.ffn_hidden = j.value("ffn_hidden", d.ffn_hidden);
    c.max_context = j.value("max_context", d.max_context);
    c.init_std = j.value("init_std", d.init_std);
}

/// The four networks of one experiment, initialized from a single seed.
template <typename T>
struct ModelBundle {
    ModelConfig config;
    WorldModel<T> world;
    InverseModel<T> inverse;
    PolicyModel<T> policy;
    BaselineModel<T> baseline;

    ModelBundle(const ModelConfig& cfg, std::uint64_t seed) : ModelBundle(cfg, Rng(seed)) {}

    StoreList<T> stores() { return {&world.params(), &inverse.params(), &policy.params(), &baseline.params()}; }
    std::vector<const ParameterStore<T>*> stores() const {
        return {&world.params(), &inverse.params(), &policy.params(), &baseline.params()};
    }

   private:
    ModelBundle(const ModelConfig& cfg, Rng rng)
        : config(cfg), world(cfg, rng), inverse(cfg, rng), policy(cfg, rng), baseline(cfg, rng) {}
};

struct Provenance {
    std::string stage = "init";
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    bool operator==(const Provenance&) const = default;
};

struct TensorRecord {
    Shape shape;
    std::vector<float> values;
    bool operator==(const TensorRecord&) const = default;
};

struct Checkpoint {
    ModelConfig model;
    Provenance provenance;
    std::map<std::string, std::uint64_t> optimizer_steps;
    std::map<std::string, TensorRecord> records;
    bool operator==(const Checkpoint&) const = default;
};

// --------------------------------------------------- parameters <-> records

template <typename T>
void store_parameters(Checkpoint& ck, const ParameterStore<T>& store) {
    for (const auto& [name, t] : store.items()) {
        TensorRecord r{t.shape(), {}};
        r.values.reserve(t.size());
        for (T v : t.values()) r.values.push_back(static_cast<float>(v));
        ck.records[name] = std::move(r);
    }
}

template <typename T>
void load_parameters(const Checkpoint& ck, ParameterStore<T>& store) {
    for (const auto& [name, t] : store.items()) {
        const auto it = ck.records.find(name);
        if (it == ck.records.end()) throw CheckpointError("checkpoint has no record for parameter " + name);
        if (it->second.shape != t.shape())
            throw CheckpointError("shape mismatch for " + name + ": checkpoint " + shape_str(it->second.shape) +
                                  ", model " + shape_str(t.shape()));
        auto dst = const_cast<Tensor<T>&>(t).values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second.values[i]);
    }
}

/// Adam moments become records "optim.<key>.m.<param>" / "optim.<key>.v.<param>".
template <typename T>
void store_optimizer(Checkpoint& ck, const std::string& key, const Adam<T>& opt) {
    ck.optimizer_steps[key] = opt.step_count();
    for (const auto& [name, mom] : opt.moments()) {
        TensorRecord m{{mom.first.size()}, {}}, v{{mom.second.size()}, {}};
        for (T x : mom.first) m.values.push_back(static_cast<float>(x));
        for (T x : mom.second) v.values.push_back(static_cast<float>(x));
        ck.records["optim." + key + ".m." + name] = std::move(m);
        ck.records["optim." + key + ".v." + name] = std::move(v);
    }
}

/// Restores optimizer state if the checkpoint has it; returns false otherwise.
template <typename T>
bool load_optimizer(const Checkpoint& ck, const std::string& key, Adam<T>& opt) {
    const auto it = ck.optimizer_steps.find(key);
    if (it == ck.optimizer_steps.end()) return false;
    opt.set_step_count(it->second);
    opt.moments().clear();
    const std::string mp = "optim." + key + ".m.", vp = "optim." + key + ".v.";
    for (auto r = ck.records.lower_bound(mp); r != ck.records.end() && r->first.rfind(mp, 0) == 0; ++r) {
        const std::string name = r->first.substr(mp.size());
        const auto v = ck.records.find(vp + name);
        if (v == ck.records.end()) throw CheckpointError("optimizer state for " + name + " is incomplete");
        auto& mom = opt.moments()[name];
        mom.first.assign(r->second.values.begin(), r->second.values.end());
        mom.second.assign(v->second.values.begin(), v->second.values.end());
    }
    return true;
}

template <typename T>
Checkpoint make_checkpoint(const ModelBundle<T>& models, const Provenance& prov) {
    Checkpoint ck;
    ck.model = models.config;
    ck.provenance = prov;
    for (const auto* s : models.stores()) store_parameters(ck, *s);
    return ck;
}

template <typename T>
void restore_models(const Checkpoint& ck, ModelBundle<T>& models) {
    if (!(ck.model == models.config)) throw CheckpointError("checkpoint model hyperparameters differ from the target");
    for (auto* s : models.stores()) load_parameters(ck, *s);
}

// ------------------------------------------------------------- encoding

namespace detail {

class ByteWriter {
   public:
    template <typename U>
    void put(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i)
            bytes_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }
    void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
    void put_bytes(std::string_view s) { bytes_.append(s); }
    std::string& bytes() { return bytes_; }

   private:
    std::string bytes_;
};

class ByteReader {
   public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
    template <typename U>
    U get() {
        need(sizeof(U));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return static_cast<U>(v);
    }
    float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s(bytes_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

   private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CheckpointIntegrityError("checkpoint is truncated or malformed");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
    nlohmann::json header = {{"model", ck.model},
                             {"provenance",
                              {{"stage", ck.provenance.stage},
                               {"step", ck.provenance.step},
                               {"seed", ck.provenance.seed},
                               {"config_hash", ck.provenance.config_hash}}},
                             {"optimizer_steps", ck.optimizer_steps}};
    const std::string h = header.dump();
    detail::ByteWriter w;
    w.put_bytes("BWA1");
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint64_t>(0);  // total length, patched below
    w.put<std::uint32_t>(static_cast<std::uint32_t>(h.size()));
    w.put_bytes(h);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.records.size()));
    for (const auto& [name, r] : ck.records) {
        if (shape_size(r.shape) != r.values.size()) throw CheckpointError("record " + name + " has inconsistent size");
        w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.put_bytes(name);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(r.shape.size()));
        for (auto d : r.shape) w.put<std::uint64_t>(d);
        for (float v : r.values) w.put_f32(v);
    }
    auto& bytes = w.bytes();
    const std::uint64_t total = bytes.size();
    for (std::size_t i = 0; i < 8; ++i) bytes[8 + i] = static_cast<char>((total >> (8 * i)) & 0xFF);
    return bytes;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < 16) throw CheckpointIntegrityError("checkpoint is truncated: " + std::to_string(bytes.size()) + " bytes");
    if (bytes.substr(0, 4) != "BWA1") throw CheckpointError("not a checkpoint file (bad magic)");
    detail::ByteReader r(bytes.substr(4));
    const auto version = r.get<std::uint32_t>();
    const auto total = r.get<std::uint64_t>();
    if (total != bytes.size())
        throw CheckpointIntegrityError("checkpoint length mismatch: header says " + std::to_string(total) +
                                       " bytes, file has " + std::to_string(bytes.size()));
    if (version != kCheckpointVersion)
        throw CheckpointVersionError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                                     std::to_string(kCheckpointVersion) +
                                     "); re-export the weights with the tool version that wrote them");
    Checkpoint ck;
    try {
        const auto header = nlohmann::json::parse(r.get_bytes(r.get<std::uint32_t>()));
        header.at("model").get_to(ck.model);
        const auto& p = header.at("provenance");
        p.at("stage").get_to(ck.provenance.stage);
        p.at("step").get_to(ck.provenance.step);
        p.at("seed").get_to(ck.provenance.seed);
        p.at("config_hash").get_to(ck.provenance.config_hash);
        header.at("optimizer_steps").get_to(ck.optimizer_steps);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointIntegrityError(std::string("checkpoint header is malformed: ") + e.what());
    }
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.get_bytes(r.get<std::uint16_t>());
        TensorRecord rec;
        const auto rank = r.get<std::uint8_t>();
        for (std::uint8_t d = 0; d < rank; ++d) rec.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
        const std::size_t n = shape_size(rec.shape);
        if (n > r.remaining() / 4) throw CheckpointIntegrityError("record " + name + " extends past end of file");
        rec.values.resize(n);
        for (auto& v : rec.values) v = r.get_f32();
        if (!ck.records.emplace(name, std::move(rec)).second)
            throw CheckpointIntegrityError("duplicate record " + name);
    }
    if (r.remaining() != 0) throw CheckpointIntegrityError("trailing bytes after last record");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + tmp);
        const auto bytes = encode_checkpoint(ck);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace bwarea

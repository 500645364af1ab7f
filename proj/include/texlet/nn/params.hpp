// params.hpp — named parameter store with gradients and AdamW moments, plus
// the TXNN binary checkpoint format (magic, version, then name/shape/payload
// records, little-endian doubles).
#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "texlet/common.hpp"
#include "texlet/nn/tensor.hpp"

namespace texlet::nn {

enum class Init { TruncNormalFanIn, Zeros, Ones };

class ModelParams {
public:
    struct Slot {
        Tensor value, grad, m, v;
    };

    explicit ModelParams(uint64_t init_seed = 0) : init_seed_(init_seed) {}

    // Creates the parameter on first use with a deterministic per-name
    // initialization; afterwards verifies the shape and returns it.
    Tensor& declare(const std::string& name, const std::vector<int>& shape, Init kind) {
        auto it = slots_.find(name);
        if (it != slots_.end()) {
            require(it->second.value.shape == shape,
                    "parameter shape mismatch for " + name + ": have " +
                        it->second.value.shape_str() + ", want " + Tensor(shape).shape_str());
            return it->second.value;
        }
        require(!frozen_, "unknown parameter declared after freeze: " + name);
        Slot slot;
        slot.value = Tensor(shape);
        slot.grad = Tensor(shape);
        slot.m = Tensor(shape);
        slot.v = Tensor(shape);
        if (kind == Init::Ones) {
            for (double& x : slot.value.data) x = 1.0;
        } else if (kind == Init::TruncNormalFanIn) {
            int fan_in = shape.size() >= 1 ? shape[0] : 1;
            double std = 1.0 / std::sqrt((double)std::max(fan_in, 1));
            Rng rng(hash_combine(init_seed_, hash_string(name)));
            for (double& x : slot.value.data) x = std * rng.truncated_normal();
        }
        auto [pos, ok] = slots_.emplace(name, std::move(slot));
        return pos->second.value;
    }

    bool has(const std::string& name) const { return slots_.count(name) > 0; }

    Tensor& value(const std::string& name) { return slot(name).value; }
    const Tensor& value(const std::string& name) const { return slot(name).value; }
    Tensor& grad(const std::string& name) { return slot(name).grad; }

    void zero_grad() {
        for (auto& [n, s] : slots_) std::fill(s.grad.data.begin(), s.grad.data.end(), 0.0);
    }

    // After a model has declared every parameter, unknown names become errors.
    void freeze() { frozen_ = true; }

    size_t count() const { return slots_.size(); }
    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& [name, s] : slots_) n += s.value.numel();
        return n;
    }

    std::map<std::string, Slot>& slots() { return slots_; }
    const std::map<std::string, Slot>& slots() const { return slots_; }

    uint64_t init_seed() const { return init_seed_; }
    int64_t adam_step = 0;

private:
    Slot& slot(const std::string& name) {
        auto it = slots_.find(name);
        require(it != slots_.end(), "unknown parameter: " + name);
        return it->second;
    }
    const Slot& slot(const std::string& name) const {
        auto it = slots_.find(name);
        require(it != slots_.end(), "unknown parameter: " + name);
        return it->second;
    }

    std::map<std::string, Slot> slots_;
    uint64_t init_seed_ = 0;
    bool frozen_ = false;
};

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Decoupled-weight-decay Adam step over all parameters, in name order.
inline void adamw_step(ModelParams& params, const AdamWConfig& cfg) {
    params.adam_step += 1;
    double t = (double)params.adam_step;
    double bc1 = 1.0 - std::pow(cfg.beta1, t);
    double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, s] : params.slots()) {
        for (size_t i = 0; i < s.value.data.size(); ++i) {
            double g = s.grad.data[i];
            s.m.data[i] = cfg.beta1 * s.m.data[i] + (1.0 - cfg.beta1) * g;
            s.v.data[i] = cfg.beta2 * s.v.data[i] + (1.0 - cfg.beta2) * g * g;
            double mhat = s.m.data[i] / bc1;
            double vhat = s.v.data[i] / bc2;
            s.value.data[i] -=
                cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * s.value.data[i]);
        }
    }
}

// --- TXNN checkpoints ---------------------------------------------------------

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(bool(is), "truncated checkpoint");
    return v;
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write checkpoint: " + path);
    out.write("TXNN", 4);
    detail::write_pod<uint32_t>(out, 1);  // version
    detail::write_pod<uint64_t>(out, params.count());
    for (const auto& [name, s] : params.slots()) {
        detail::write_pod<uint32_t>(out, (uint32_t)name.size());
        out.write(name.data(), (std::streamsize)name.size());
        detail::write_pod<uint32_t>(out, (uint32_t)s.value.shape.size());
        for (int d : s.value.shape) detail::write_pod<uint64_t>(out, (uint64_t)d);
        out.write(reinterpret_cast<const char*>(s.value.data.data()),
                  (std::streamsize)(s.value.data.size() * sizeof(double)));
    }
    require(bool(out), "write failed for checkpoint: " + path);
}

// Loads weights into an already-declared parameter set. Every stored tensor
// must exist with a matching shape and vice versa, so dimension mismatches
// between a checkpoint and the runtime configuration fail before any compute.
inline void load_checkpoint(ModelParams& params, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    require(bool(in) && std::memcmp(magic, "TXNN", 4) == 0, "not a TXNN checkpoint: " + path);
    uint32_t version = detail::read_pod<uint32_t>(in);
    require(version == 1, "unsupported checkpoint version in " + path);
    uint64_t count = detail::read_pod<uint64_t>(in);
    require(count == params.count(), "checkpoint parameter count mismatch: " + path);
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t len = detail::read_pod<uint32_t>(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        require(params.has(name), "checkpoint has unknown parameter " + name);
        uint32_t ndim = detail::read_pod<uint32_t>(in);
        std::vector<int> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = (int)detail::read_pod<uint64_t>(in);
        Tensor& dst = params.value(name);
        require(dst.shape == shape, "checkpoint shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(dst.data.data()),
                (std::streamsize)(dst.data.size() * sizeof(double)));
        require(bool(in), "truncated checkpoint: " + path);
    }
}

}  // namespace texlet::nn

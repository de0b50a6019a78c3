#pragma once

// Binary checkpoint, all integers and floats little-endian:
//
//   "VICNN"  u8 version (=1)
//   u32 n    spec JSON (n bytes, UTF-8)
//   per conv layer in spec order: weights (out, in, k, k) then bias, f32
//   u32 n    history JSON (history, config, manifest digest, best epoch, status)
//   u8       1 if an optimizer state follows, else 0
//   [u64 step, f64 learning_rate, beta1, beta2, epsilon,
//    f32 first moments, f32 second moments, both in parameter order]

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicnn/adam.hpp"
#include "vicnn/error.hpp"
#include "vicnn/model.hpp"

namespace vicnn {

struct Checkpoint {
    ModelSpec spec;
    Params<float> params;
    std::optional<AdamState<float>> optimizer;
    nlohmann::json meta = nlohmann::json::object();

    friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
        if (!(a.spec == b.spec) || a.meta != b.meta || a.optimizer.has_value() != b.optimizer.has_value()) return false;
        if (a.params.size() != b.params.size()) return false;
        for (std::size_t n = 0; n < a.params.size(); ++n)
            if (a.params[n].weights != b.params[n].weights || a.params[n].bias != b.params[n].bias) return false;
        return !a.optimizer || *a.optimizer == *b.optimizer;
    }
};

inline constexpr char checkpoint_magic[5] = {'V', 'I', 'C', 'N', 'N'};
inline constexpr std::uint8_t checkpoint_version = 1;

namespace detail {

class ByteWriter {
public:
    template <typename U>
    void put(U v) {
        using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t,
                                        std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint8_t>>;
        const auto bits = std::bit_cast<Bits>(v);
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    void text(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void floats(const std::vector<float>& v) {
        for (const float f : v) put(f);
    }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string bytes) : buf_(std::move(bytes)) {}

    template <typename U>
    U get() {
        using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t,
                                        std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint8_t>>;
        need(sizeof(U));
        Bits bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            bits |= static_cast<Bits>(static_cast<Bits>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i));
        pos_ += sizeof(U);
        return std::bit_cast<U>(bits);
    }
    std::string text() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void floats(std::vector<float>& v) {
        for (auto& f : v) f = get<float>();
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw DataError("checkpoint is truncated");
    }
    std::string buf_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    check_params(ck.spec, ck.params);
    detail::ByteWriter w;
    for (const char c : checkpoint_magic) w.put(c);
    w.put(checkpoint_version);
    w.text(to_json(ck.spec).dump());
    for (const auto& p : ck.params) {
        w.floats(p.weights);
        w.floats(p.bias);
    }
    w.text(ck.meta.dump());
    w.put(static_cast<std::uint8_t>(ck.optimizer ? 1 : 0));
    if (ck.optimizer) {
        const auto& o = *ck.optimizer;
        w.put(o.step);
        w.put(o.config.learning_rate);
        w.put(o.config.beta1);
        w.put(o.config.beta2);
        w.put(o.config.epsilon);
        for (const auto* moments : {&o.first_moment, &o.second_moment}) {
            if (moments->empty()) {
                // no step taken yet: moments are implicitly zero
                for (const auto& p : ck.params) {
                    w.floats(std::vector<float>(p.weights.size(), 0.0f));
                    w.floats(std::vector<float>(p.bias.size(), 0.0f));
                }
                continue;
            }
            if (moments->size() != 2 * ck.params.size()) throw ValidationError("optimizer state does not match parameters");
            for (const auto& m : *moments) w.floats(m);
        }
    }
    return w.bytes();
}

inline Checkpoint deserialize_checkpoint(std::string bytes) {
    detail::ByteReader r(std::move(bytes));
    if (r.raw(5) != std::string(checkpoint_magic, 5)) throw DataError("not a checkpoint (bad magic)");
    if (const auto v = r.get<std::uint8_t>(); v != checkpoint_version)
        throw DataError("unsupported checkpoint version " + std::to_string(v));
    Checkpoint ck;
    try {
        ck.spec = model_spec_from_json(nlohmann::json::parse(r.text()));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint spec is not valid JSON: ") + e.what());
    }
    ck.params = init_params<float>(ck.spec, 0);
    for (auto& p : ck.params) {
        r.floats(p.weights);
        r.floats(p.bias);
    }
    try {
        ck.meta = nlohmann::json::parse(r.text());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint history is not valid JSON: ") + e.what());
    }
    if (r.get<std::uint8_t>() == 1) {
        AdamState<float> o;
        o.step = r.get<std::uint64_t>();
        o.config.learning_rate = r.get<double>();
        o.config.beta1 = r.get<double>();
        o.config.beta2 = r.get<double>();
        o.config.epsilon = r.get<double>();
        for (auto* moments : {&o.first_moment, &o.second_moment})
            for (const auto& p : ck.params) {
                moments->emplace_back(p.weights.size());
                r.floats(moments->back());
                moments->emplace_back(p.bias.size());
                r.floats(moments->back());
            }
        ck.optimizer = std::move(o);
    }
    if (!r.at_end()) throw DataError("checkpoint has trailing bytes");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    const std::string bytes = serialize_checkpoint(ck);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("cannot write checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return deserialize_checkpoint(std::move(bytes));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace vicnn

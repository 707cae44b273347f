#pragma once

#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dnmt/context_lm.hpp"
#include "dnmt/io.hpp"
#include "dnmt/model.hpp"

namespace dnmt {

// Checkpoint container: magic "DNMT1", one version byte, a little-endian
// u64 header length, a JSON metadata header (config, vocab hash, parameter
// manifest with shapes), then raw little-endian float32 arrays in manifest
// order. Optimizer state, when present, is appended the same way under
// "opt_manifest".
namespace ckpt {

constexpr char kMagic[5] = {'D', 'N', 'M', 'T', '1'};
constexpr std::uint8_t kVersion = 1;

// Optimizer/trainer state for exact resume.
struct TrainState {
    std::size_t step = 0;
    std::size_t adam_steps = 0;
    double best_val_loss = 0.0;
    bool has_best = false;
    std::string rng_state;
    std::vector<Tensor<float>> adam_m;
    std::vector<Tensor<float>> adam_v;
};

namespace detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

template <typename T>
void write_f32_array(std::ostream& out, const Tensor<T>& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        float f = static_cast<float>(t.at(i));
        char bytes[4];
        std::memcpy(bytes, &f, 4);
        out.write(bytes, 4);
    }
}

template <typename T>
void read_f32_array(std::istream& in, Tensor<T>& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        char bytes[4];
        in.read(bytes, 4);
        float f;
        std::memcpy(&f, bytes, 4);
        t.at(i) = static_cast<T>(f);
    }
}

template <typename T>
Json manifest_json(const ParamStore<T>& store) {
    Json m = Json::array();
    for (const auto& p : store.ordered()) {
        Json e;
        e["name"] = p->name;
        e["shape"] = p->value.shape();
        m.push_back(e);
    }
    return m;
}

inline Json header_read(std::istream& in, const std::string& label) {
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, kMagic, 5) != 0) {
        raise(ErrorKind::data, label + ": not a DNMT1 checkpoint");
    }
    char version;
    in.read(&version, 1);
    if (static_cast<std::uint8_t>(version) != kVersion) {
        raise(ErrorKind::data, label + ": unsupported checkpoint version");
    }
    std::uint64_t len = read_u64(in);
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) raise(ErrorKind::data, label + ": truncated checkpoint header");
    return Json::parse(header);
}

template <typename T>
void load_params(std::istream& in, ParamStore<T>& store, const Json& manifest,
                 const std::string& label) {
    const auto& ordered = store.ordered();
    if (manifest.size() != ordered.size()) {
        raise(ErrorKind::data, label + ": manifest has " + std::to_string(manifest.size()) +
                                   " parameters, model expects " + std::to_string(ordered.size()));
    }
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const Json& e = manifest.at(i);
        std::string name = e.at("name").get<std::string>();
        Shape shape = e.at("shape").get<Shape>();
        if (name != ordered[i]->name || shape != ordered[i]->value.shape()) {
            raise(ErrorKind::data, label + ": parameter " + std::to_string(i) + " is " + name + " " +
                                       shape_to_string(shape) + ", model expects " + ordered[i]->name +
                                       " " + shape_to_string(ordered[i]->value.shape()));
        }
        read_f32_array(in, ordered[i]->value);
    }
    if (!in) raise(ErrorKind::data, label + ": truncated parameter data");
}

} // namespace detail

template <typename T>
void save_model(const std::filesystem::path& path, const Model<T>& model, std::uint64_t vocab_hash,
                const TrainState* train_state = nullptr) {
    Json header;
    header["kind"] = "nmt";
    header["config"] = model.config().to_json();
    header["vocab_hash"] = vocab_hash;
    header["manifest"] = detail::manifest_json(model.params());
    if (train_state) {
        Json meta;
        meta["step"] = train_state->step;
        meta["adam_steps"] = train_state->adam_steps;
        if (train_state->has_best) meta["best_val_loss"] = train_state->best_val_loss;
        meta["rng_state"] = train_state->rng_state;
        header["train_state"] = meta;
        Json om = Json::array();
        for (const auto& p : model.params().ordered()) {
            Json e;
            e["name"] = "adam.m." + p->name;
            e["shape"] = p->value.shape();
            om.push_back(e);
        }
        for (const auto& p : model.params().ordered()) {
            Json e;
            e["name"] = "adam.v." + p->name;
            e["shape"] = p->value.shape();
            om.push_back(e);
        }
        header["opt_manifest"] = om;
    }
    std::string header_str = header.dump();
    atomic_write(path, [&](std::ostream& out) {
        out.write(ckpt::kMagic, 5);
        char version = static_cast<char>(kVersion);
        out.write(&version, 1);
        detail::write_u64(out, header_str.size());
        out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        for (const auto& p : model.params().ordered()) detail::write_f32_array(out, p->value);
        if (train_state) {
            for (const auto& t : train_state->adam_m) detail::write_f32_array(out, t);
            for (const auto& t : train_state->adam_v) detail::write_f32_array(out, t);
        }
    });
}

inline Json read_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::io, "cannot open checkpoint " + path.string());
    return detail::header_read(in, path.string());
}

template <typename T>
struct LoadedModel {
    Model<T> model;
    std::uint64_t vocab_hash = 0;
    std::optional<TrainState> train_state;
};

template <typename T>
LoadedModel<T> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::io, "cannot open checkpoint " + path.string());
    Json header = detail::header_read(in, path.string());
    if (header.at("kind").get<std::string>() != "nmt") {
        raise(ErrorKind::data, path.string() + ": not an NMT checkpoint");
    }
    ModelConfig cfg = ModelConfig::from_json(header.at("config"));
    LoadedModel<T> loaded{Model<T>(cfg), header.at("vocab_hash").get<std::uint64_t>(), std::nullopt};
    detail::load_params(in, loaded.model.params(), header.at("manifest"), path.string());
    if (header.contains("train_state")) {
        TrainState st;
        const Json& meta = header.at("train_state");
        st.step = meta.at("step").get<std::size_t>();
        st.adam_steps = meta.at("adam_steps").get<std::size_t>();
        if (meta.contains("best_val_loss")) {
            st.best_val_loss = meta.at("best_val_loss").get<double>();
            st.has_best = true;
        }
        st.rng_state = meta.at("rng_state").get<std::string>();
        for (const auto& p : loaded.model.params().ordered()) {
            Tensor<float> m(p->value.shape());
            detail::read_f32_array(in, m);
            st.adam_m.push_back(std::move(m));
        }
        for (const auto& p : loaded.model.params().ordered()) {
            Tensor<float> v(p->value.shape());
            detail::read_f32_array(in, v);
            st.adam_v.push_back(std::move(v));
        }
        if (!in) raise(ErrorKind::data, path.string() + ": truncated optimizer state");
        loaded.train_state = std::move(st);
    }
    return loaded;
}

template <typename T>
void save_context_lm(const std::filesystem::path& path, const ContextLM<T>& lm) {
    Json header;
    header["kind"] = "context_lm";
    Json cfg;
    cfg["n_layers"] = lm.config().n_layers;
    cfg["d_model"] = lm.config().d_model;
    cfg["d_ff"] = lm.config().d_ff;
    cfg["n_heads"] = lm.config().n_heads;
    cfg["vocab_size"] = lm.config().vocab_size;
    cfg["max_positions"] = lm.config().max_positions;
    header["config"] = cfg;
    header["vocab_hash"] = lm.vocab_hash();
    header["manifest"] = detail::manifest_json(lm.params());
    std::string header_str = header.dump();
    atomic_write(path, [&](std::ostream& out) {
        out.write(ckpt::kMagic, 5);
        char version = static_cast<char>(kVersion);
        out.write(&version, 1);
        detail::write_u64(out, header_str.size());
        out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        for (const auto& p : lm.params().ordered()) detail::write_f32_array(out, p->value);
    });
}

template <typename T>
ContextLM<T> load_context_lm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::io, "cannot open checkpoint " + path.string());
    Json header = detail::header_read(in, path.string());
    if (header.at("kind").get<std::string>() != "context_lm") {
        raise(ErrorKind::data, path.string() + ": not a context LM checkpoint");
    }
    const Json& cj = header.at("config");
    ContextLmConfig cfg;
    cfg.n_layers = cj.at("n_layers").get<std::size_t>();
    cfg.d_model = cj.at("d_model").get<std::size_t>();
    cfg.d_ff = cj.at("d_ff").get<std::size_t>();
    cfg.n_heads = cj.at("n_heads").get<std::size_t>();
    cfg.vocab_size = cj.at("vocab_size").get<std::size_t>();
    cfg.max_positions = cj.at("max_positions").get<std::size_t>();
    ContextLM<T> lm(cfg, header.at("vocab_hash").get<std::uint64_t>());
    detail::load_params(in, lm.params(), header.at("manifest"), path.string());
    return lm;
}

} // namespace ckpt
} // namespace dnmt

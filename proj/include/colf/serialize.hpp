#pragma once

// Binary snapshot format, version 1. All integers are little-endian; doubles
// are their IEEE-754 bit patterns as u64, so a round trip is bit-exact.
//
//   snapshot  := "COLFSNAP" u32(version) i32(day) pair
//   pair      := params(base) stack(head) u8(has_tuned) [u32(n) table*n]
//   params    := schema u8(kind) u64(seed) u32(n) table*n stack
//   schema    := u32(n) (str(name) u8(kind) u64(dim))*n
//   table     := str(field) u64(dim) f64(init_scale) u64(seed) u64(rows)
//                (u32(id) f64*dim)*rows
//   stack     := u32(n) (u64(in) u64(out) u8(activation) f64*(in*out) f64*out)*n
//   str       := u32(len) bytes

#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "colf/error.hpp"
#include "colf/model.hpp"
#include "colf/nn.hpp"

namespace colf::io {

inline constexpr std::string_view kSnapshotMagic = "COLFSNAP";
inline constexpr std::uint32_t kSnapshotVersion = 1;

inline InputError corrupt(std::size_t offset, const std::string& what) {
    return InputError("snapshot byte " + std::to_string(offset) + ": " + what);
}

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        for (int k = 0; k < 4; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
    }

    void u64(std::uint64_t v) {
        for (int k = 0; k < 8; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
    }

    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    void raw(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::uint8_t u8() {
        const int c = in_.get();
        if (c == std::char_traits<char>::eof()) throw corrupt(offset_, "unexpected end of snapshot");
        ++offset_;
        return static_cast<std::uint8_t>(c);
    }

    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(u8()) << (8 * k);
        return v;
    }

    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(u8()) << (8 * k);
        return v;
    }

    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string str() {
        const std::uint32_t n = u32();
        std::string s;
        s.reserve(n);
        for (std::uint32_t k = 0; k < n; ++k) s.push_back(static_cast<char>(u8()));
        return s;
    }

    std::size_t offset() const { return offset_; }

private:
    std::istream& in_;
    std::size_t offset_ = 0;
};

inline void write_stack(Writer& w, const nn::DenseStack& s) {
    w.u32(static_cast<std::uint32_t>(s.layers.size()));
    for (const auto& l : s.layers) {
        w.u64(l.in);
        w.u64(l.out);
        w.u8(l.activation == nn::Activation::relu ? 1 : 0);
        for (double x : l.weight) w.f64(x);
        for (double x : l.bias) w.f64(x);
    }
}

inline nn::DenseStack read_stack(Reader& r) {
    nn::DenseStack s;
    const std::uint32_t n = r.u32();
    for (std::uint32_t k = 0; k < n; ++k) {
        nn::DenseLayer l;
        l.in = r.u64();
        l.out = r.u64();
        const auto act = r.u8();
        if (act > 1) throw corrupt(r.offset(), "bad activation tag");
        l.activation = act == 1 ? nn::Activation::relu : nn::Activation::identity;
        l.weight.resize(l.in * l.out);
        for (auto& x : l.weight) x = r.f64();
        l.bias.resize(l.out);
        for (auto& x : l.bias) x = r.f64();
        s.layers.push_back(std::move(l));
    }
    return s;
}

inline void write_table(Writer& w, const nn::EmbeddingTable& t) {
    w.str(t.field());
    w.u64(t.dim());
    w.f64(t.init_scale());
    w.u64(t.seed());
    w.u64(t.size());
    for (std::size_t r = 0; r < t.size(); ++r) {
        w.u32(t.ids()[r]);
        for (double x : t.row(r)) w.f64(x);
    }
}

inline nn::EmbeddingTable read_table(Reader& r) {
    auto field = r.str();
    const std::size_t dim = r.u64();
    const double scale = r.f64();
    const std::uint64_t seed = r.u64();
    nn::EmbeddingTable t(std::move(field), dim, scale, seed);
    const std::uint64_t rows = r.u64();
    std::vector<double> row(dim);
    for (std::uint64_t k = 0; k < rows; ++k) {
        const Id id = r.u32();
        for (auto& x : row) x = r.f64();
        try {
            t.insert_with_values(id, row);
        } catch (const InputError& e) {
            throw corrupt(r.offset(), e.what());
        }
    }
    return t;
}

inline void write_params(Writer& w, const nn::ModelParams& p) {
    w.u32(static_cast<std::uint32_t>(p.schema.fields.size()));
    for (const auto& f : p.schema.fields) {
        w.str(f.name);
        w.u8(static_cast<std::uint8_t>(f.kind));
        w.u64(f.dim);
    }
    w.u8(p.kind == nn::ModelKind::lr ? 0 : 1);
    w.u64(p.seed);
    w.u32(static_cast<std::uint32_t>(p.tables.size()));
    for (const auto& t : p.tables) write_table(w, t);
    write_stack(w, p.head);
}

inline nn::ModelParams read_params(Reader& r) {
    nn::ModelParams p;
    const std::uint32_t n_fields = r.u32();
    for (std::uint32_t k = 0; k < n_fields; ++k) {
        FieldSpec f;
        f.name = r.str();
        const auto kind = r.u8();
        if (kind > 2) throw corrupt(r.offset(), "bad field kind tag");
        f.kind = static_cast<FieldKind>(kind);
        f.dim = r.u64();
        p.schema.fields.push_back(std::move(f));
    }
    const auto kind = r.u8();
    if (kind > 1) throw corrupt(r.offset(), "bad model kind tag");
    p.kind = kind == 0 ? nn::ModelKind::lr : nn::ModelKind::embed_mlp;
    p.seed = r.u64();
    const std::uint32_t n_tables = r.u32();
    for (std::uint32_t k = 0; k < n_tables; ++k) p.tables.push_back(read_table(r));
    p.head = read_stack(r);
    return p;
}

inline void write_snapshot(std::ostream& out, const model::ModelSnapshot& s) {
    Writer w(out);
    w.raw(kSnapshotMagic);
    w.u32(kSnapshotVersion);
    w.i32(s.day);
    write_params(w, *s.model.base);
    write_stack(w, s.model.head);
    w.u8(s.model.tuned_tables ? 1 : 0);
    if (s.model.tuned_tables) {
        w.u32(static_cast<std::uint32_t>(s.model.tuned_tables->size()));
        for (const auto& t : *s.model.tuned_tables) write_table(w, t);
    }
    if (!out) throw Error("write_snapshot: output failed");
}

inline model::ModelSnapshot read_snapshot(std::istream& in) {
    Reader r(in);
    for (char c : kSnapshotMagic) {
        if (static_cast<char>(r.u8()) != c) throw corrupt(r.offset(), "not a snapshot file");
    }
    const std::uint32_t version = r.u32();
    if (version != kSnapshotVersion) {
        throw corrupt(r.offset(), "unsupported snapshot version " + std::to_string(version));
    }
    model::ModelSnapshot s;
    s.day = r.i32();
    s.model.base = std::make_shared<const nn::ModelParams>(read_params(r));
    s.model.head = read_stack(r);
    const auto has_tuned = r.u8();
    if (has_tuned > 1) throw corrupt(r.offset(), "bad tuned-tables flag");
    if (has_tuned) {
        std::vector<nn::EmbeddingTable> tables;
        const std::uint32_t n = r.u32();
        for (std::uint32_t k = 0; k < n; ++k) tables.push_back(read_table(r));
        s.model.tuned_tables = std::move(tables);
    }
    return s;
}

inline void save_snapshot(const std::string& path, const model::ModelSnapshot& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write_snapshot(out, s);
}

inline model::ModelSnapshot load_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    return read_snapshot(in);
}

} // namespace colf::io

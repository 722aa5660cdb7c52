#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "colf/error.hpp"

namespace colf {

using Id = std::uint32_t;

enum class FieldKind { user, item, context };

inline const char* to_string(FieldKind k) {
    switch (k) {
    case FieldKind::user: return "user";
    case FieldKind::item: return "item";
    case FieldKind::context: return "context";
    }
    return "?";
}

inline FieldKind field_kind_from_string(const std::string& s) {
    if (s == "user") return FieldKind::user;
    if (s == "item") return FieldKind::item;
    if (s == "context") return FieldKind::context;
    throw InputError("unknown field kind '" + s + "'");
}

struct FieldSpec {
    std::string name;
    FieldKind kind = FieldKind::context;
    std::size_t dim = 8;

    bool operator==(const FieldSpec&) const = default;
};

// Categorical fields of x = (u, v, c). Exactly one user and one item field.
struct FeatureSchema {
    std::vector<FieldSpec> fields;

    static FeatureSchema standard(std::size_t context_fields, std::size_t dim) {
        FeatureSchema s;
        s.fields.push_back({"user", FieldKind::user, dim});
        s.fields.push_back({"item", FieldKind::item, dim});
        for (std::size_t k = 0; k < context_fields; ++k) {
            s.fields.push_back({"ctx_" + std::to_string(k + 1), FieldKind::context, dim});
        }
        return s;
    }

    void validate() const {
        std::size_t users = 0;
        std::size_t items = 0;
        for (const auto& f : fields) {
            if (f.dim == 0) throw ConfigError("schema." + f.name, "embedding dim must be positive");
            users += f.kind == FieldKind::user;
            items += f.kind == FieldKind::item;
        }
        if (users != 1 || items != 1) {
            throw ConfigError("schema", "needs exactly one user field and one item field");
        }
    }

    std::size_t size() const { return fields.size(); }

    std::size_t context_count() const {
        std::size_t n = 0;
        for (const auto& f : fields) n += f.kind == FieldKind::context;
        return n;
    }

    std::size_t input_width() const {
        std::size_t w = 0;
        for (const auto& f : fields) w += f.dim;
        return w;
    }

    bool operator==(const FeatureSchema&) const = default;
};

struct ClickSample {
    int day = 1;
    Id user = 0;
    Id item = 0;
    std::vector<Id> context;
    int label = 0;

    bool operator==(const ClickSample&) const = default;
    auto operator<=>(const ClickSample&) const = default;
};

struct DayPartition {
    int day = 1;
    std::vector<ClickSample> samples;

    bool empty() const { return samples.empty(); }
    std::size_t size() const { return samples.size(); }

    std::vector<double> labels() const {
        std::vector<double> y;
        y.reserve(samples.size());
        for (const auto& s : samples) y.push_back(static_cast<double>(s.label));
        return y;
    }

    bool operator==(const DayPartition&) const = default;
};

// Resolves the categorical id a sample carries for each schema field.
class FieldIndex {
public:
    explicit FieldIndex(const FeatureSchema& schema) {
        std::size_t ctx = 0;
        for (const auto& f : schema.fields) {
            kinds_.push_back(f.kind);
            slots_.push_back(f.kind == FieldKind::context ? ctx++ : 0);
        }
    }

    Id id(std::size_t field, const ClickSample& s) const {
        switch (kinds_[field]) {
        case FieldKind::user: return s.user;
        case FieldKind::item: return s.item;
        case FieldKind::context:
            if (slots_[field] >= s.context.size()) {
                throw InputError("sample has " + std::to_string(s.context.size()) +
                                 " context ids, schema expects more");
            }
            return s.context[slots_[field]];
        }
        return 0;
    }

    std::size_t size() const { return kinds_.size(); }

private:
    std::vector<FieldKind> kinds_;
    std::vector<std::size_t> slots_;
};

} // namespace colf

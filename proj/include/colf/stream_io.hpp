#pragma once

// Line-oriented stream file.
//
//   colf-stream 1
//   schema<TAB>user:user:8<TAB>item:item:8<TAB>ctx_1:context:8
//   <day><TAB><user><TAB><item><TAB><ctx,ctx,...><TAB><label>
//   ...
//
// Records are grouped by day in ascending, gap-free order. An empty file is an
// empty stream.

#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "colf/error.hpp"
#include "colf/sample.hpp"
#include "colf/stream.hpp"

namespace colf::stream {

inline constexpr std::string_view kStreamMagic = "colf-stream 1";

inline void write_stream(const ClickStream& s, std::ostream& out) {
    out << kStreamMagic << '\n' << "schema";
    for (const auto& f : s.schema.fields) out << '\t' << f.name << ':' << to_string(f.kind) << ':' << f.dim;
    out << '\n';
    for (const auto& day : s.days) {
        for (const auto& x : day.samples) {
            out << x.day << '\t' << x.user << '\t' << x.item << '\t';
            for (std::size_t k = 0; k < x.context.size(); ++k) {
                if (k) out << ',';
                out << x.context[k];
            }
            out << '\t' << x.label << '\n';
        }
    }
    if (!out) throw Error("write_stream: output failed");
}

inline void write_stream(const ClickStream& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write_stream(s, out);
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        parts.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

template <class T>
T parse_number(std::string_view text, std::size_t line, const char* what) {
    T v{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw ParseError(line, std::string("bad ") + what + " '" + std::string(text) + "'");
    }
    return v;
}

inline FeatureSchema parse_schema(std::string_view line, std::size_t lineno) {
    const auto parts = split(line, '\t');
    if (parts.empty() || parts[0] != "schema") throw ParseError(lineno, "expected schema line");
    FeatureSchema schema;
    for (std::size_t k = 1; k < parts.size(); ++k) {
        const auto spec = split(parts[k], ':');
        if (spec.size() != 3 || spec[0].empty()) throw ParseError(lineno, "bad field spec '" + std::string(parts[k]) + "'");
        FieldSpec f;
        f.name = std::string(spec[0]);
        try {
            f.kind = field_kind_from_string(std::string(spec[1]));
        } catch (const InputError& e) {
            throw ParseError(lineno, e.what());
        }
        f.dim = parse_number<std::size_t>(spec[2], lineno, "embedding dim");
        schema.fields.push_back(std::move(f));
    }
    try {
        schema.validate();
    } catch (const ConfigError& e) {
        throw ParseError(lineno, e.what());
    }
    return schema;
}

} // namespace detail

inline ClickStream read_stream(std::istream& in) {
    ClickStream s;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) return s;
    ++lineno;
    if (line != kStreamMagic) throw ParseError(lineno, "missing '" + std::string(kStreamMagic) + "' header");
    if (!std::getline(in, line)) throw ParseError(lineno + 1, "missing schema line");
    ++lineno;
    s.schema = detail::parse_schema(line, lineno);
    const std::size_t n_ctx = s.schema.context_count();

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) throw ParseError(lineno, "empty line");
        const auto cols = detail::split(line, '\t');
        if (cols.size() != 5) {
            throw ParseError(lineno, "expected 5 tab-separated columns, found " + std::to_string(cols.size()));
        }
        ClickSample x;
        x.day = detail::parse_number<int>(cols[0], lineno, "day");
        x.user = detail::parse_number<Id>(cols[1], lineno, "user id");
        x.item = detail::parse_number<Id>(cols[2], lineno, "item id");
        if (!cols[3].empty()) {
            for (auto c : detail::split(cols[3], ',')) x.context.push_back(detail::parse_number<Id>(c, lineno, "context id"));
        }
        if (x.context.size() != n_ctx) {
            throw ParseError(lineno, "expected " + std::to_string(n_ctx) + " context ids, found " +
                                         std::to_string(x.context.size()));
        }
        x.label = detail::parse_number<int>(cols[4], lineno, "label");
        if (x.label != 0 && x.label != 1) throw ParseError(lineno, "label must be 0 or 1");
        if (s.days.empty()) {
            if (x.day < 1) throw ParseError(lineno, "day must be at least 1");
            s.days.push_back({x.day, {}});
        } else if (x.day == s.days.back().day + 1) {
            s.days.push_back({x.day, {}});
        } else if (x.day != s.days.back().day) {
            throw ParseError(lineno, "day " + std::to_string(x.day) + " does not follow day " +
                                         std::to_string(s.days.back().day));
        }
        s.days.back().samples.push_back(std::move(x));
    }
    return s;
}

inline ClickStream read_stream(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    return read_stream(in);
}

} // namespace colf::stream

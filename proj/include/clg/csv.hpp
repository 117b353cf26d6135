#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace clg {

/// Shortest round-trip decimal form; "nan" and "inf" for non-finite values.
inline std::string formatDouble(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline std::string csvField(double x) { return formatDouble(x); }
inline std::string csvField(const std::string& s) { return s; }
inline std::string csvField(const char* s) { return s; }
inline std::string csvField(bool b) { return b ? "1" : "0"; }
template <typename T>
    requires std::is_integral_v<T>
std::string csvField(T v) {
    return std::to_string(v);
}

/// Comma-separated output with a fixed header; rows must match its width.
class CsvWriter {
public:
    CsvWriter(const std::string& path, std::vector<std::string> header) : out_(path), width_(header.size()), path_(path) {
        if (!out_) throw std::runtime_error("cannot write " + path);
        writeLine(header);
    }

    template <typename... T>
    void row(const T&... v) {
        if (sizeof...(T) != width_) throw std::logic_error(path_ + ": row width does not match header");
        writeLine({csvField(v)...});
    }

private:
    void writeLine(const std::vector<std::string>& fields) {
        for (std::size_t k = 0; k < fields.size(); ++k) out_ << (k ? "," : "") << fields[k];
        out_ << '\n';
    }

    std::ofstream out_;
    std::size_t width_;
    std::string path_;
};

}  // namespace clg

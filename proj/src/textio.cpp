#include "dopcc/textio.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>

#include "dopcc/errors.hpp"

namespace dopcc {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

}  // namespace

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view text, std::string_view key) {
    const auto t = trim(text);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    if (t == "-inf") return -std::numeric_limits<double>::infinity();
    double value = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty()) {
        throw PreconditionError("invalid number '" + std::string(t) + "'" +
                                (key.empty() ? "" : " for key '" + std::string(key) + "'"));
    }
    return value;
}

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& origin) {
    KeyValueConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view(line);
        if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        view = trim(view);
        if (view.empty()) continue;
        if (view.find('=') == std::string_view::npos) {
            throw PreconditionError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        }
        cfg.set_assignment(view);
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PreconditionError("cannot read configuration file " + path.string());
    return parse(in, path.string());
}

void KeyValueConfig::set_assignment(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw PreconditionError("expected key=value, got '" + std::string(assignment) + "'");
    }
    const auto key = trim(assignment.substr(0, eq));
    if (key.empty()) throw PreconditionError("empty key in '" + std::string(assignment) + "'");
    set(std::string(key), std::string(trim(assignment.substr(eq + 1))));
}

void KeyValueConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

const std::string& KeyValueConfig::at(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw PreconditionError("missing configuration key '" + key + "'");
    return it->second;
}

void KeyValueConfig::require_known(const std::vector<std::string>& allowed) const {
    for (const auto& [key, value] : values_) {
        bool known = false;
        for (const auto& a : allowed) known = known || a == key;
        if (!known) throw PreconditionError("unknown configuration key '" + key + "'");
    }
}

std::vector<std::string> split_list(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find(sep, start);
        if (end == std::string_view::npos) end = text.size();
        const auto item = trim(text.substr(start, end - start));
        if (!item.empty()) out.emplace_back(item);
        start = end + 1;
    }
    return out;
}

std::vector<double> parse_numbers(std::string_view text, std::string_view key) {
    std::vector<double> out;
    for (const auto& item : split_list(text, ',')) out.push_back(parse_double(item, key));
    return out;
}

}  // namespace dopcc

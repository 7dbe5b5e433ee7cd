#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dopcc {

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

/// Parses a double, accepting "inf" / "-inf"; throws PreconditionError on junk.
double parse_double(std::string_view text, std::string_view key = {});

/// Ordered key-value configuration: `key = value` lines, `#` starts a comment.
class KeyValueConfig {
  public:
    static KeyValueConfig parse(std::istream& in, const std::string& origin = "<input>");
    static KeyValueConfig load(const std::filesystem::path& path);

    /// Applies `key=value` text, e.g. from a command-line override.
    void set_assignment(std::string_view assignment);
    void set(const std::string& key, const std::string& value);

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& at(const std::string& key) const;
    const std::map<std::string, std::string>& values() const { return values_; }

    /// Throws PreconditionError naming the first key outside `allowed`.
    void require_known(const std::vector<std::string>& allowed) const;

  private:
    std::map<std::string, std::string> values_;
};

/// Splits on `sep`, trimming whitespace and dropping empty items.
std::vector<std::string> split_list(std::string_view text, char sep);

/// "1, 2, 3" -> {1, 2, 3}.
std::vector<double> parse_numbers(std::string_view text, std::string_view key = {});

}  // namespace dopcc

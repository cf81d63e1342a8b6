#pragma once

#include <string>
#include <utility>
#include <vector>

namespace clci {

// Ordered "key = value" text records. Blank lines and lines starting with '#'
// are ignored; whitespace around keys and values is trimmed.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_key_values(const std::string& text, const std::string& source);
KeyValues read_key_values(const std::string& path);
void write_key_values(const std::string& path, const KeyValues& kv);

// Last value for `key`, or nullptr.
const std::string* find_value(const KeyValues& kv, const std::string& key);

int parse_int(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<int> parse_int_list(const std::string& key,
                                const std::string& value);

}  // namespace clci

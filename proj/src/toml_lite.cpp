#include "obpc/toml_lite.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "obpc/errors.hpp"

namespace obpc::toml {

namespace {

class Parser {
public:
    explicit Parser(const std::string& text) : s_(text) {}

    Document run() {
        Document doc;
        std::string table;
        while (true) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                ++pos_;
                skip_spaces();
                table = key();
                skip_spaces();
                expect(']');
                end_of_line();
                continue;
            }
            const int key_line = line_;
            std::string k = key();
            if (!table.empty()) k = table + "." + k;
            skip_spaces();
            expect('=');
            skip_spaces();
            Value v = value();
            v.line = key_line;
            end_of_line();
            if (doc.values.count(k) != 0) fail("duplicate key", k);
            doc.order.push_back(k);
            doc.values.emplace(k, std::move(v));
        }
        return doc;
    }

private:
    [[noreturn]] void fail(const std::string& what, const std::string& key = "") const {
        throw ConfigError("line " + std::to_string(line_) + ": " + what + (key.empty() ? "" : " (" + key + ")"),
                          key, line_);
    }

    bool eof() const { return pos_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[pos_]; }

    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    void skip_spaces() {
        while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++pos_;
    }

    void skip_comment() {
        if (peek() == '#') {
            while (!eof() && peek() != '\n') ++pos_;
        }
    }

    // Whitespace, comments and newlines, as allowed inside arrays and between statements.
    void skip_blank_lines() {
        while (true) {
            skip_spaces();
            skip_comment();
            if (peek() == '\n') {
                ++pos_;
                ++line_;
                continue;
            }
            return;
        }
    }

    void end_of_line() {
        skip_spaces();
        skip_comment();
        if (eof()) return;
        if (peek() != '\n') fail("unexpected trailing characters");
        ++pos_;
        ++line_;
    }

    std::string bare_key() {
        const std::size_t start = pos_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++pos_;
        if (pos_ == start) fail("expected a key");
        return s_.substr(start, pos_ - start);
    }

    std::string key() {
        std::string k = bare_key();
        skip_spaces();
        while (peek() == '.') {
            ++pos_;
            skip_spaces();
            k += "." + bare_key();
            skip_spaces();
        }
        return k;
    }

    Value value() {
        Value v;
        v.line = line_;
        const char c = peek();
        if (c == '"') {
            v.data = string();
        } else if (c == '[') {
            v.data = array();
        } else if (s_.compare(pos_, 4, "true") == 0) {
            pos_ += 4;
            v.data = true;
        } else if (s_.compare(pos_, 5, "false") == 0) {
            pos_ += 5;
            v.data = false;
        } else {
            v.data = number();
        }
        return v;
    }

    std::string string() {
        expect('"');
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            const char c = s_[pos_++];
            if (c == '"') break;
            if (c == '\\') {
                if (eof()) fail("unterminated string");
                const char e = s_[pos_++];
                switch (e) {
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    default: fail("unsupported escape");
                }
                continue;
            }
            out += c;
        }
        return out;
    }

    Array array() {
        expect('[');
        Array out;
        while (true) {
            skip_blank_lines();
            if (peek() == ']') {
                ++pos_;
                return out;
            }
            out.push_back(value());
            skip_blank_lines();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            skip_blank_lines();
            expect(']');
            return out;
        }
    }

    double number() {
        const std::size_t start = pos_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                          peek() == '.' || peek() == '_')) {
            ++pos_;
        }
        std::string tok;
        for (std::size_t i = start; i < pos_; ++i) {
            if (s_[i] != '_') tok += s_[i];
        }
        if (tok.empty()) fail("expected a value");
        if (tok == "inf" || tok == "+inf") return HUGE_VAL;
        if (tok == "-inf") return -HUGE_VAL;
        const char* first = tok.data();
        if (*first == '+') ++first;
        double out = 0.0;
        const auto [end, ec] = std::from_chars(first, tok.data() + tok.size(), out);
        if (ec != std::errc() || end != tok.data() + tok.size()) fail("malformed number '" + tok + "'");
        return out;
    }

    const std::string& s_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

}  // namespace

Document parse(const std::string& text) { return Parser(text).run(); }

}  // namespace obpc::toml

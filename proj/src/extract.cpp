#include "tagaudit/extract.hpp"

#include "tagaudit/sp.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <sstream>

namespace tagaudit::extract {

using facts::CallSiteFact;
using facts::FunctionFact;
using facts::FunctionId;
using facts::LibraryFacts;
using facts::ParamClass;
using facts::RetClass;
using facts::RetKind;
using facts::TypeFact;
using facts::TypeId;

namespace {

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

struct Token {
    enum class Kind { Ident, Number, Punct, DocComment, Str, Lifetime, End };

    Kind kind = Kind::End;
    std::string text;
    int line = 1;
    int col = 1;

    bool is(std::string_view t) const { return text == t; }
    bool is_ident() const { return kind == Kind::Ident; }
};

bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

class Lexer {
  public:
    explicit Lexer(std::string_view text) : text_(text) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_trivia(out);
            if (pos_ >= text_.size()) break;
            out.push_back(next_token());
        }
        out.push_back(make(Token::Kind::End, ""));
        return out;
    }

  private:
    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;

    char cur() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
    char ahead(std::size_t n = 1) const {
        return pos_ + n < text_.size() ? text_[pos_ + n] : '\0';
    }

    void advance() {
        if (cur() == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    Token make(Token::Kind k, std::string text) const {
        Token t;
        t.kind = k;
        t.text = std::move(text);
        t.line = line_;
        t.col = col_;
        return t;
    }

    void skip_trivia(std::vector<Token>& out) {
        while (pos_ < text_.size()) {
            char c = cur();
            if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else if (c == '/' && ahead() == '/') {
                bool doc = ahead(2) == '/' && ahead(3) != '/';
                Token t = make(Token::Kind::DocComment, "");
                std::string line;
                while (pos_ < text_.size() && cur() != '\n') {
                    line += cur();
                    advance();
                }
                if (doc) {
                    t.text = line.substr(3);  // strip "///"
                    out.push_back(std::move(t));
                }
            } else if (c == '/' && ahead() == '*') {
                int depth = 0;
                while (pos_ < text_.size()) {
                    if (cur() == '/' && ahead() == '*') {
                        ++depth;
                        advance();
                        advance();
                    } else if (cur() == '*' && ahead() == '/') {
                        --depth;
                        advance();
                        advance();
                        if (depth == 0) break;
                    } else {
                        advance();
                    }
                }
            } else {
                break;
            }
        }
    }

    Token next_token() {
        char c = cur();
        if (ident_start(c)) {
            Token t = make(Token::Kind::Ident, "");
            while (pos_ < text_.size() && ident_char(cur())) {
                t.text += cur();
                advance();
            }
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            Token t = make(Token::Kind::Number, "");
            while (pos_ < text_.size() &&
                   (ident_char(cur()) || (cur() == '.' && std::isdigit(static_cast<unsigned char>(ahead()))))) {
                t.text += cur();
                advance();
            }
            return t;
        }
        if (c == '"') {
            Token t = make(Token::Kind::Str, "");
            advance();
            while (pos_ < text_.size() && cur() != '"') {
                if (cur() == '\\') advance();
                t.text += cur();
                advance();
            }
            advance();  // closing quote
            return t;
        }
        if (c == '\'') {
            // Lifetime ('a) or char literal ('x', '\n').
            if (ident_start(ahead())) {
                std::size_t look = pos_ + 1;
                while (look < text_.size() && ident_char(text_[look])) ++look;
                if (look < text_.size() && text_[look] == '\'') {
                    // char literal like 'a'
                } else {
                    Token t = make(Token::Kind::Lifetime, "'");
                    advance();
                    while (pos_ < text_.size() && ident_char(cur())) {
                        t.text += cur();
                        advance();
                    }
                    return t;
                }
            }
            Token t = make(Token::Kind::Str, "");
            advance();
            while (pos_ < text_.size() && cur() != '\'') {
                if (cur() == '\\') advance();
                advance();
            }
            advance();
            return t;
        }
        static const char* kMulti[] = {"::", "->", "=>", "..=", "..", "&&", "||",
                                       "<<=", ">>=", "==", "!=", "<=", ">=", "+=",
                                       "-=", "*=", "/=", "%=", "&=", "|=", "^="};
        for (const char* m : kMulti) {
            std::string_view mv(m);
            if (text_.substr(pos_, mv.size()) == mv) {
                Token t = make(Token::Kind::Punct, std::string(mv));
                for (std::size_t i = 0; i < mv.size(); ++i) advance();
                return t;
            }
        }
        Token t = make(Token::Kind::Punct, std::string(1, c));
        advance();
        return t;
    }
};

// ---------------------------------------------------------------------------
// Token utilities
// ---------------------------------------------------------------------------

const std::set<std::string> kIntPrimitives = {"i8",  "i16", "i32", "i64", "i128", "isize",
                                              "u8",  "u16", "u32", "u64", "u128", "usize"};

// Canonical type/signature text: tokens joined by single spaces, with the
// spaces dropped around punctuation so `* mut u8` prints as `*mut u8`.
std::string join_tokens(const std::vector<Token>& toks, std::size_t begin, std::size_t end) {
    static const std::set<std::string> no_space_after = {"(", "<", "::", "*", "&", "[", "->"};
    static const std::set<std::string> no_space_before = {"(", ")", ">", "]", ",", "<",
                                                          "::", ";", "->"};
    std::string out;
    std::string prev;
    for (std::size_t i = begin; i < end; ++i) {
        const Token& t = toks[i];
        if (t.kind == Token::Kind::Lifetime) continue;  // lifetimes do not affect matching
        if (!out.empty() && no_space_after.count(prev) == 0 && no_space_before.count(t.text) == 0)
            out += ' ';
        out += t.text;
        prev = t.text;
    }
    return out;
}

std::string strip_prefix_word(std::string_view text, std::string_view word) {
    if (text.substr(0, word.size()) == word) {
        std::string_view rest = text.substr(word.size());
        while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
        return std::string(rest);
    }
    return std::string(text);
}

std::string base_type_name(std::string_view text) {
    // Leading path segment chain up to generics: `ptr::NonNull<T>` -> NonNull.
    std::string flat(text);
    auto lt = flat.find('<');
    if (lt != std::string::npos) flat = flat.substr(0, lt);
    auto sep = flat.rfind("::");
    if (sep != std::string::npos) flat = flat.substr(sep + 2);
    while (!flat.empty() && flat.back() == ' ') flat.pop_back();
    return flat;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter / return classification
// ---------------------------------------------------------------------------

ParamClass classify_param(std::string_view type_text) {
    return classify_param(type_text, {});
}

ParamClass classify_param(std::string_view type_text,
                          const std::map<std::string, std::string>& generic_bounds) {
    std::string t(type_text);
    while (!t.empty() && (t.front() == ' ')) t.erase(t.begin());
    if (t.rfind("*const", 0) == 0 || t.rfind("*mut", 0) == 0 || t.rfind("* const", 0) == 0 ||
        t.rfind("* mut", 0) == 0)
        return ParamClass::RawPointer;
    if (base_type_name(t.substr(0, t.find('<'))) == "NonNull" ||
        t.rfind("NonNull", 0) == 0)
        return ParamClass::NonNullPointer;
    if (t.rfind("&mut", 0) == 0) return ParamClass::MutableReference;
    if (!t.empty() && t.front() == '&') return ParamClass::Reference;
    if (t.rfind("fn(", 0) == 0 || t.rfind("fn (", 0) == 0) return ParamClass::Other;
    if (t == "Allocator") return ParamClass::Allocator;
    auto bound = generic_bounds.find(t);
    if (bound != generic_bounds.end())
        return bound->second == "Allocator" ? ParamClass::Allocator : ParamClass::Other;
    if (kIntPrimitives.count(t) != 0) return ParamClass::Integer;
    if (t == "bool" || t == "char" || t == "f32" || t == "f64" || t == "()") return ParamClass::Other;
    std::string base = base_type_name(t);
    if (!base.empty() && std::isupper(static_cast<unsigned char>(base.front())))
        return ParamClass::OwnedObject;
    return ParamClass::Other;
}

namespace {

RetClass classify_return(const std::string& text, const std::set<std::string>& generic_params,
                         const std::map<std::string, TypeId>& local_types,
                         const std::optional<TypeId>& owner) {
    RetClass r;
    if (text.empty() || text == "()") {
        r.kind = RetKind::Unit;
        return r;
    }
    if (text.rfind("*", 0) == 0) {
        r.kind = RetKind::Other;
        return r;
    }
    if (!text.empty() && text.front() == '&') {
        r.kind = RetKind::Reference;
        std::string inner = strip_prefix_word(strip_prefix_word(text, "&"), "mut");
        auto it = local_types.find(base_type_name(inner));
        if (it != local_types.end()) r.of_type = it->second;
        return r;
    }
    std::string base = base_type_name(text);
    if (base == "Option") {
        r.kind = RetKind::OptionWrapped;
        return r;
    }
    if (base == "Self" && owner) {
        r.kind = RetKind::OwnedObject;
        r.of_type = owner;
        return r;
    }
    if (generic_params.count(base) != 0 || kIntPrimitives.count(base) != 0 || base == "bool" ||
        base == "char" || base == "f32" || base == "f64" || base == "!") {
        r.kind = RetKind::Other;
        return r;
    }
    auto it = local_types.find(base);
    if (it != local_types.end()) {
        r.kind = RetKind::OwnedObject;
        r.of_type = it->second;
        return r;
    }
    if (!base.empty() && std::isupper(static_cast<unsigned char>(base.front()))) {
        r.kind = RetKind::OwnedObject;
        return r;
    }
    r.kind = RetKind::Other;
    return r;
}

// ---------------------------------------------------------------------------
// Item parsing (pass 1)
// ---------------------------------------------------------------------------

struct RawParam {
    std::string name;
    std::string type_text;
};

struct RawFn {
    std::string name;
    std::vector<std::string> modules;
    std::optional<std::string> impl_target;     // surface text of the impl'd type
    std::optional<std::string> trait_of_impl;   // set inside `impl Trait for Type`
    bool is_pub = false;
    bool is_unsafe = false;
    bool has_self = false;
    bool mut_self = false;
    std::vector<RawParam> params;
    std::map<std::string, std::string> generic_bounds;  // type param -> first bound
    std::set<std::string> generic_params;
    std::string ret_text;
    std::vector<Token> body;  // tokens between the braces, exclusive
    std::vector<std::string> safety_lines;
    std::vector<std::string> verifies_lines;
    std::vector<std::string> kills_lines;
    int line = 0;
    int col = 0;
};

struct RawField {
    std::string name;
    bool is_pub = false;
    std::string type_text;
};

struct RawType {
    std::string name;
    std::vector<std::string> modules;
    facts::AdtKind adt_kind = facts::AdtKind::Struct;
    std::vector<RawField> fields;
    int line = 0;
};

struct ParsedUnit {
    std::vector<RawFn> fns;
    std::vector<RawType> types;
    std::map<std::string, std::set<std::string>> trait_methods;  // trait -> method names
};

std::string qualify(const std::vector<std::string>& modules, const std::string& name) {
    std::string out;
    for (const auto& m : modules) out += m + "::";
    return out + name;
}

class UnitParser {
  public:
    UnitParser(const SourceUnit& unit, std::vector<ExtractionDiagnostic>& diags)
        : unit_(unit), diags_(diags) {
        toks_ = Lexer(unit.content).run();
    }

    ParsedUnit run() {
        std::string stem = file_stem(unit_.path);
        if (!stem.empty() && stem != "lib" && stem != "main" && stem != "mod")
            modules_.push_back(stem);
        parse_items(/*brace_scoped=*/false);
        return std::move(out_);
    }

  private:
    const SourceUnit& unit_;
    std::vector<ExtractionDiagnostic>& diags_;
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::vector<std::string> modules_;
    ParsedUnit out_;

    struct PendingDocs {
        std::vector<std::string> safety;
        std::vector<std::string> verifies;
        std::vector<std::string> kills;
        void clear() {
            safety.clear();
            verifies.clear();
            kills.clear();
        }
    };
    PendingDocs docs_;

    static std::string file_stem(const std::string& path) {
        auto slash = path.find_last_of("/\\");
        std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
        auto dot = base.rfind('.');
        return dot == std::string::npos ? base : base.substr(0, dot);
    }

    const Token& cur() const { return toks_[pos_]; }
    const Token& ahead(std::size_t n = 1) const {
        return toks_[std::min(pos_ + n, toks_.size() - 1)];
    }
    bool at_end() const { return cur().kind == Token::Kind::End; }
    void advance() {
        if (!at_end()) ++pos_;
    }
    bool eat(std::string_view text) {
        if (cur().text == text && cur().kind != Token::Kind::Str) {
            advance();
            return true;
        }
        return false;
    }

    void error_here(const std::string& msg) {
        diags_.push_back({ExtractionDiagnostic::Severity::Error, cur().line, cur().col,
                          unit_.path + ": " + msg});
    }

    void warn_here(const std::string& msg) {
        diags_.push_back({ExtractionDiagnostic::Severity::Warning, cur().line, cur().col,
                          unit_.path + ": " + msg});
    }

    // Skips a balanced (), [], {} or <> group, cursor on the opener.
    void skip_group() {
        static const std::map<std::string, std::string> close{
            {"(", ")"}, {"[", "]"}, {"{", "}"}, {"<", ">"}};
        auto it = close.find(cur().text);
        if (it == close.end()) {
            advance();
            return;
        }
        std::string open = it->first;
        std::string shut = it->second;
        int depth = 0;
        while (!at_end()) {
            if (cur().text == open) ++depth;
            if (cur().text == shut) {
                --depth;
                if (depth == 0) {
                    advance();
                    return;
                }
            }
            advance();
        }
    }

    void skip_to_semi_or_group_end() {
        while (!at_end()) {
            if (cur().is(";")) {
                advance();
                return;
            }
            if (cur().is("{")) {
                skip_group();
                return;
            }
            advance();
        }
    }

    void collect_doc(const Token& t) {
        std::string text = t.text;
        auto strip = [](std::string s) {
            std::size_t b = s.find_first_not_of(" \t");
            if (b == std::string::npos) return std::string{};
            return s.substr(b);
        };
        text = strip(text);
        auto take = [&](std::string_view marker) -> std::optional<std::string> {
            if (text.rfind(marker, 0) == 0) return strip(text.substr(marker.size()));
            return std::nullopt;
        };
        if (auto v = take("SAFETY:")) docs_.safety.push_back(*v);
        else if (auto v = take("VERIFIES:")) docs_.verifies.push_back(*v);
        else if (auto v = take("KILLS:")) docs_.kills.push_back(*v);
    }

    void parse_items(bool brace_scoped) {
        while (!at_end()) {
            if (cur().kind == Token::Kind::DocComment) {
                collect_doc(cur());
                advance();
                continue;
            }
            if (brace_scoped && cur().is("}")) return;
            if (cur().is("#")) {  // attribute
                advance();
                eat("!");
                skip_group();
                continue;
            }
            bool is_pub = false;
            if (cur().is("pub")) {
                is_pub = true;
                advance();
                if (cur().is("(")) skip_group();  // pub(crate) and friends stay private
            }
            if (cur().is("struct") || cur().is("enum") || cur().is("union")) {
                parse_type(is_pub);
            } else if (cur().is("impl")) {
                parse_impl();
            } else if (cur().is("trait")) {
                parse_trait();
            } else if (cur().is("mod")) {
                advance();
                std::string name = cur().text;
                advance();
                if (eat(";")) {
                    warn_here("out-of-line module '" + name + "' is not followed");
                    continue;
                }
                if (!eat("{")) {
                    error_here("expected '{' after mod " + name);
                    return;
                }
                modules_.push_back(name);
                parse_items(/*brace_scoped=*/true);
                modules_.pop_back();
                if (!eat("}")) {
                    error_here("unterminated module '" + name + "'");
                    return;
                }
            } else if (cur().is("fn") || cur().is("unsafe") ||
                       (cur().is("const") && (ahead().is("fn") || ahead().is("unsafe")))) {
                parse_fn(is_pub, std::nullopt, std::nullopt);
            } else if (cur().is("use") || cur().is("static") || cur().is("type") ||
                       cur().is("extern") || cur().is("const")) {
                skip_to_semi_or_group_end();
                docs_.clear();
            } else if (cur().is(";")) {
                advance();
            } else {
                error_here("unsupported item starting at '" + cur().text + "'");
                advance();
                return;
            }
        }
    }

    void parse_type(bool /*is_pub*/) {
        RawType t;
        t.adt_kind = cur().is("enum")   ? facts::AdtKind::Enum
                     : cur().is("union") ? facts::AdtKind::Union
                                          : facts::AdtKind::Struct;
        bool is_enum = t.adt_kind == facts::AdtKind::Enum;
        t.line = cur().line;
        advance();
        t.name = cur().text;
        t.modules = modules_;
        advance();
        if (cur().is("<")) skip_group();
        docs_.clear();

        if (eat(";")) {  // unit struct
            out_.types.push_back(std::move(t));
            return;
        }
        if (cur().is("(")) {  // tuple struct: positional fields
            advance();
            int index = 0;
            while (!at_end() && !cur().is(")")) {
                RawField f;
                f.name = std::to_string(index++);
                if (cur().is("pub")) {
                    f.is_pub = true;
                    advance();
                    if (cur().is("(")) skip_group();
                }
                std::size_t begin = pos_;
                skip_type_tokens(",)");
                f.type_text = join_tokens(toks_, begin, pos_);
                t.fields.push_back(std::move(f));
                eat(",");
            }
            eat(")");
            eat(";");
            out_.types.push_back(std::move(t));
            return;
        }
        if (!eat("{")) {
            error_here("expected '{', '(' or ';' in type definition");
            return;
        }
        while (!at_end() && !cur().is("}")) {
            if (cur().kind == Token::Kind::DocComment || cur().is("#")) {
                if (cur().is("#")) {
                    advance();
                    skip_group();
                } else {
                    advance();
                }
                continue;
            }
            RawField f;
            if (is_enum) {
                f.name = cur().text;
                f.is_pub = true;  // enum variants are as visible as the enum
                advance();
                if (cur().is("(") || cur().is("{")) skip_group();
                if (eat("=")) {
                    while (!at_end() && !cur().is(",") && !cur().is("}")) advance();
                }
            } else {
                if (cur().is("pub")) {
                    f.is_pub = true;
                    advance();
                    if (cur().is("(")) skip_group();
                }
                f.name = cur().text;
                advance();
                if (!eat(":")) {
                    error_here("expected ':' after field name '" + f.name + "'");
                    return;
                }
                std::size_t begin = pos_;
                skip_type_tokens(",}");
                f.type_text = join_tokens(toks_, begin, pos_);
            }
            t.fields.push_back(std::move(f));
            eat(",");
        }
        eat("}");
        out_.types.push_back(std::move(t));
    }

    // Advances over type tokens until a stopper punct at depth zero.
    void skip_type_tokens(std::string_view stoppers) {
        int depth = 0;
        while (!at_end()) {
            const std::string& s = cur().text;
            if (depth == 0 && s.size() == 1 && stoppers.find(s[0]) != std::string_view::npos)
                return;
            if (s == "(" || s == "[" || s == "<" || s == "{") ++depth;
            if (s == ")" || s == "]" || s == ">" || s == "}") --depth;
            advance();
        }
    }

    void parse_impl() {
        advance();  // impl
        docs_.clear();
        if (cur().is("<")) skip_group();
        std::string first = cur().text;
        advance();
        if (cur().is("<")) skip_group();
        std::optional<std::string> trait_name;
        std::string target = first;
        if (eat("for")) {
            trait_name = first;
            target = cur().text;
            advance();
            if (cur().is("<")) skip_group();
        }
        if (!eat("{")) {
            error_here("expected '{' in impl block");
            return;
        }
        while (!at_end() && !cur().is("}")) {
            if (cur().kind == Token::Kind::DocComment) {
                collect_doc(cur());
                advance();
                continue;
            }
            if (cur().is("#")) {
                advance();
                skip_group();
                continue;
            }
            bool is_pub = false;
            if (cur().is("pub")) {
                is_pub = true;
                advance();
                if (cur().is("(")) skip_group();
            }
            if (cur().is("fn") || cur().is("unsafe") ||
                (cur().is("const") && (ahead().is("fn") || ahead().is("unsafe")))) {
                parse_fn(is_pub, target, trait_name);
            } else if (cur().is("type") || cur().is("const")) {
                skip_to_semi_or_group_end();
            } else {
                error_here("unsupported impl item starting at '" + cur().text + "'");
                return;
            }
        }
        eat("}");
    }

    void parse_trait() {
        advance();  // trait
        docs_.clear();
        std::string name = cur().text;
        advance();
        if (cur().is("<")) skip_group();
        if (!eat("{")) {
            error_here("expected '{' in trait definition");
            return;
        }
        while (!at_end() && !cur().is("}")) {
            if (cur().kind == Token::Kind::DocComment || cur().is("#")) {
                if (cur().is("#")) {
                    advance();
                    skip_group();
                } else {
                    advance();
                }
                continue;
            }
            // Only method names matter; signatures and default bodies are skipped.
            if (cur().is("unsafe") || cur().is("fn") || cur().is("const")) {
                eat("const");
                eat("unsafe");
                if (!eat("fn")) {
                    skip_to_semi_or_group_end();
                    continue;
                }
                out_.trait_methods[name].insert(cur().text);
                advance();
                skip_to_semi_or_group_end();
            } else {
                skip_to_semi_or_group_end();
            }
        }
        eat("}");
    }

    void parse_fn(bool is_pub, std::optional<std::string> impl_target,
                  std::optional<std::string> trait_name) {
        RawFn f;
        f.is_pub = is_pub;
        f.line = cur().line;
        f.col = cur().col;
        eat("const");
        if (eat("unsafe")) f.is_unsafe = true;
        eat("const");
        if (!eat("fn")) {
            error_here("expected 'fn'");
            return;
        }
        f.name = cur().text;
        f.modules = modules_;
        f.impl_target = std::move(impl_target);
        f.trait_of_impl = std::move(trait_name);
        advance();

        if (cur().is("<")) parse_generics(f);
        if (!eat("(")) {
            error_here("expected parameter list for fn " + f.name);
            return;
        }
        parse_params(f);
        if (eat("->")) {
            std::size_t begin = pos_;
            skip_type_tokens("{;");
            // `where` clauses end the return type.
            std::size_t end = pos_;
            for (std::size_t i = begin; i < end; ++i)
                if (toks_[i].is("where")) {
                    end = i;
                    break;
                }
            f.ret_text = join_tokens(toks_, begin, end);
        } else if (cur().is("where")) {
            skip_type_tokens("{;");
        }
        if (cur().is("where")) skip_type_tokens("{;");

        f.safety_lines = docs_.safety;
        f.verifies_lines = docs_.verifies;
        f.kills_lines = docs_.kills;
        docs_.clear();

        if (eat(";")) {
            // Declaration without body (trait method through parse_fn is not
            // expected here, but stay lenient).
            out_.fns.push_back(std::move(f));
            return;
        }
        if (!cur().is("{")) {
            error_here("expected function body for fn " + f.name);
            return;
        }
        std::size_t begin = pos_ + 1;
        skip_group();
        std::size_t end = pos_ - 1;  // exclusive of the closing brace
        f.body.assign(toks_.begin() + static_cast<long>(begin),
                      toks_.begin() + static_cast<long>(end));
        out_.fns.push_back(std::move(f));
    }

    void parse_generics(RawFn& f) {
        // cursor on '<'
        advance();
        int depth = 1;
        while (!at_end() && depth > 0) {
            if (cur().is("<")) ++depth;
            if (cur().is(">")) {
                --depth;
                advance();
                continue;
            }
            if (depth == 1 && cur().is_ident() && !cur().is("const")) {
                std::string param = cur().text;
                f.generic_params.insert(param);
                advance();
                if (eat(":")) {
                    if (cur().is_ident()) {
                        std::string bound = cur().text;
                        advance();
                        while (cur().is("::")) {
                            advance();
                            bound = cur().text;
                            advance();
                        }
                        f.generic_bounds[param] = bound;
                        if (cur().is("<")) skip_group();
                    }
                    // Additional bounds (`+ Send`) are skipped below.
                }
                continue;
            }
            advance();
        }
    }

    void parse_params(RawFn& f) {
        while (!at_end() && !cur().is(")")) {
            if (cur().is("&")) {
                // Receiver: &self / &'a self / &mut self
                std::size_t look = pos_ + 1;
                if (toks_[look].kind == Token::Kind::Lifetime) ++look;
                bool mut_recv = toks_[look].is("mut");
                if (mut_recv) ++look;
                if (toks_[look].is("self")) {
                    f.has_self = true;
                    f.mut_self = mut_recv;
                    pos_ = look + 1;
                    eat(",");
                    continue;
                }
            }
            if (cur().is("self") || (cur().is("mut") && ahead().is("self"))) {
                eat("mut");
                advance();  // self (by value, consuming)
                f.has_self = true;
                eat(",");
                continue;
            }
            RawParam p;
            eat("mut");
            p.name = cur().text;
            advance();
            if (!eat(":")) {
                error_here("expected ':' after parameter '" + p.name + "' of fn " + f.name);
                return;
            }
            std::size_t begin = pos_;
            skip_type_tokens(",)");
            p.type_text = join_tokens(toks_, begin, pos_);
            f.params.push_back(std::move(p));
            eat(",");
        }
        eat(")");
    }
};

// ---------------------------------------------------------------------------
// Resolution and body scanning (pass 2)
// ---------------------------------------------------------------------------

struct Workspace {
    std::vector<RawFn> fns;
    std::vector<RawType> types;
    std::map<std::string, std::set<std::string>> trait_methods;

    std::map<std::string, TypeId> type_by_name;              // qualified and bare
    std::map<std::string, std::map<std::string, std::string>> field_types;  // type -> field -> text
    std::set<TypeId> private_field_types;                    // not literal-constructible
    std::map<std::string, FunctionId> fn_by_qualified;       // qualified name -> id
    std::map<FunctionId, std::size_t> fn_index;              // id -> index into fns
};

class BodyScanner {
  public:
    BodyScanner(const RawFn& fn, const FunctionId& fn_id, const std::optional<TypeId>& owner,
                const Workspace& ws, std::vector<ExtractionDiagnostic>& diags)
        : fn_(fn), fn_id_(fn_id), owner_(owner), ws_(ws), diags_(diags) {
        for (const auto& p : fn_.params) param_types_[p.name] = p.type_text;
    }

    struct Result {
        std::vector<CallSiteFact> callsites;
        // Local callees invoked outside any unsafe region (checked afterwards
        // against the callee's safety for the missing-unsafe warning).
        std::vector<std::pair<FunctionId, int>> safe_context_calls;
    };

    Result run() {
        const auto& toks = fn_.body;
        std::vector<bool> unsafe_at_depth(64, false);
        int depth = 0;
        bool fn_unsafe = fn_.is_unsafe;

        auto in_unsafe = [&]() {
            if (fn_unsafe) return true;
            for (int d = 0; d <= depth; ++d)
                if (unsafe_at_depth[static_cast<std::size_t>(d)]) return true;
            return false;
        };

        std::string prev_text;

        for (std::size_t i = 0; i < toks.size(); ++i) {
            const Token& t = toks[i];
            auto next = [&](std::size_t n = 1) -> const Token& {
                static Token end_token;
                return i + n < toks.size() ? toks[i + n] : end_token;
            };

            if (t.is("{")) {
                ++depth;
                if (static_cast<std::size_t>(depth) >= unsafe_at_depth.size())
                    unsafe_at_depth.resize(unsafe_at_depth.size() * 2, false);
                continue;
            }
            if (t.is("}")) {
                unsafe_at_depth[static_cast<std::size_t>(depth)] = false;
                --depth;
                prev_text = "}";
                continue;
            }
            if (t.is("unsafe") && next().is("{")) {
                // Mark the block about to open.
                ++i;
                ++depth;
                if (static_cast<std::size_t>(depth) >= unsafe_at_depth.size())
                    unsafe_at_depth.resize(unsafe_at_depth.size() * 2, false);
                unsafe_at_depth[static_cast<std::size_t>(depth)] = true;
                prev_text = "{";
                continue;
            }
            if (t.is(";")) {
                pending_let_.reset();
                prev_text = ";";
                continue;
            }
            if (t.is("let")) {
                std::size_t j = i + 1;
                if (toks[j].is("mut")) ++j;
                if (j < toks.size() && toks[j].is_ident()) {
                    std::string name = toks[j].text;
                    if (j + 1 < toks.size() && toks[j + 1].is(":")) {
                        std::size_t k = j + 2;
                        std::size_t begin = k;
                        int d2 = 0;
                        while (k < toks.size()) {
                            const std::string& s = toks[k].text;
                            if (d2 == 0 && (s == "=" || s == ";")) break;
                            if (s == "(" || s == "<" || s == "[") ++d2;
                            if (s == ")" || s == ">" || s == "]") --d2;
                            ++k;
                        }
                        bindings_[name] = join_tokens(toks, begin, k);
                    } else {
                        pending_let_ = name;
                    }
                }
                prev_text = "let";
                continue;
            }

            if (t.is_ident() && next().is("!")) {
                // Macro invocation: skip the delimited group.
                i += 2;
                if (i < toks.size()) i = skip_group_at(toks, i);
                prev_text = ")";
                continue;
            }

            if (t.is("*") && is_unary_context(prev_text) && !next().is("const") &&
                !next().is("mut")) {
                if (in_unsafe()) {
                    result_.callsites.push_back(
                        CallSiteFact::direct(std::string(facts::kDerefBuiltin)));
                } else if (!fn_unsafe) {
                    diags_.push_back({ExtractionDiagnostic::Severity::Warning, t.line, t.col,
                                      fn_id_ + ": raw pointer dereference outside an unsafe "
                                      "block"});
                }
                prev_text = "*";
                continue;
            }

            if (t.is_ident() && !is_keyword(t.text)) {
                std::size_t end = i;
                std::string path = t.text;
                while (end + 2 < toks.size() && toks[end + 1].is("::") &&
                       toks[end + 2].is_ident()) {
                    path += "::" + toks[end + 2].text;
                    end += 2;
                }
                bool is_call = end + 1 < toks.size() && toks[end + 1].is("(");
                bool is_method_recv = prev_text == ".";
                if (is_call && !is_method_recv) {
                    handle_path_call(path, t, in_unsafe());
                    try_bind_pending(path);
                    i = end;
                    prev_text = toks[end].text;
                    continue;
                }
                if (end + 1 < toks.size() && toks[end + 1].is("{")) {
                    // `St2 { .. }` struct literal: reveals a pending binding's
                    // type and, for private-field types, records the
                    // module-internal construction note.
                    if (auto ty = resolve_type(path)) {
                        if (pending_let_) {
                            bindings_[*pending_let_] = *ty;
                            pending_let_.reset();
                        }
                        if (ws_.private_field_types.count(*ty) != 0)
                            diags_.push_back(
                                {ExtractionDiagnostic::Severity::Warning, t.line, t.col,
                                 fn_id_ + ": module-internal literal construction of '" + *ty +
                                     "' (type is not literal-constructible from outside)"});
                    }
                }
                i = end;
                prev_text = toks[end].text;
                continue;
            }

            if (t.is(".") && next().is_ident() && next(2).is("(")) {
                std::string method = next().text;
                handle_method_call(toks, i, method, t, in_unsafe());
                ++i;  // consume the method ident; '(' proceeds normally
                prev_text = next().text;
                continue;
            }

            prev_text = t.text;
        }
        return std::move(result_);
    }

  private:
    const RawFn& fn_;
    const FunctionId& fn_id_;
    const std::optional<TypeId>& owner_;
    const Workspace& ws_;
    std::vector<ExtractionDiagnostic>& diags_;
    std::map<std::string, std::string> param_types_;
    std::map<std::string, std::string> bindings_;  // let-bound variable -> type text
    Result result_;

    static bool is_keyword(const std::string& s) {
        static const std::set<std::string> kw = {
            "if",   "else",  "match", "while", "loop",  "for",  "in",     "return", "break",
            "continue", "as", "mut",  "ref",   "move",  "self", "Self",   "true",   "false",
            "unsafe", "let", "fn",    "struct", "enum", "impl", "trait",  "where",  "pub",
            "use",  "mod",   "const", "static"};
        return kw.count(s) != 0;
    }

    static bool is_unary_context(const std::string& prev) {
        static const std::set<std::string> ctx = {
            "",  "(", "[", "{", ",", ";", "=", "==", "!=", "<", ">", "<=", ">=", "+",
            "-", "*", "/", "%", "&&", "||", "!", "return", "&", "=>", ".."};
        return ctx.count(prev) != 0;
    }

    static std::size_t skip_group_at(const std::vector<Token>& toks, std::size_t i) {
        static const std::map<std::string, std::string> close{
            {"(", ")"}, {"[", "]"}, {"{", "}"}};
        auto it = close.find(toks[i].text);
        if (it == close.end()) return i;
        int depth = 0;
        for (std::size_t j = i; j < toks.size(); ++j) {
            if (toks[j].text == it->first) ++depth;
            if (toks[j].text == it->second) {
                --depth;
                if (depth == 0) return j;
            }
        }
        return toks.size() - 1;
    }

    std::optional<TypeId> resolve_type(const std::string& name) const {
        for (const auto& candidate : qualified_candidates(name)) {
            auto it = ws_.type_by_name.find(candidate);
            if (it != ws_.type_by_name.end()) return it->second;
        }
        return std::nullopt;
    }

    std::vector<std::string> qualified_candidates(const std::string& name) const {
        std::vector<std::string> out;
        if (!fn_.modules.empty()) out.push_back(qualify(fn_.modules, name));
        out.push_back(name);
        return out;
    }

    std::optional<FunctionId> resolve_local_fn(const std::string& path) const {
        for (const auto& candidate : qualified_candidates(path)) {
            auto it = ws_.fn_by_qualified.find(candidate);
            if (it != ws_.fn_by_qualified.end()) return it->second;
        }
        // Path with a leading type segment: resolve the type, then the method.
        auto sep = path.find("::");
        if (sep != std::string::npos) {
            auto ty = resolve_type(path.substr(0, sep));
            if (ty) {
                auto it = ws_.fn_by_qualified.find(*ty + "::" + path.substr(sep + 2));
                if (it != ws_.fn_by_qualified.end()) return it->second;
            }
        }
        return std::nullopt;
    }

    void record(CallSiteFact site, bool in_unsafe, const Token& at,
                const std::optional<FunctionId>& local) {
        if (in_unsafe) {
            result_.callsites.push_back(std::move(site));
        } else if (local) {
            result_.safe_context_calls.push_back({*local, at.line});
        }
    }

    void handle_path_call(const std::string& path, const Token& at, bool in_unsafe) {
        if (auto local = resolve_local_fn(path)) {
            record(CallSiteFact::direct(*local), in_unsafe, at, local);
            return;
        }
        // Calling a function-typed parameter delegates to every local
        // function with the matching signature.
        auto p = param_types_.find(path);
        if (p != param_types_.end() && p->second.rfind("fn", 0) == 0) {
            record(CallSiteFact::fn_param(p->second), in_unsafe, at, std::nullopt);
            return;
        }
        if (resolve_type(path)) return;  // tuple-struct literal, not a call site
        if (path.find("::") != std::string::npos && resolve_type(path.substr(0, path.find("::"))))
            return;  // unknown method of a local type; facts validation handles it
        record(CallSiteFact::direct(path), in_unsafe, at, std::nullopt);
    }

    void handle_method_call(const std::vector<Token>& toks, std::size_t dot_index,
                            const std::string& method, const Token& at, bool in_unsafe) {
        std::string recv_type = receiver_type(toks, dot_index);
        if (recv_type.empty()) {
            if (in_unsafe)
                diags_.push_back({ExtractionDiagnostic::Severity::Warning, at.line, at.col,
                                  fn_id_ + ": cannot type the receiver of ." + method +
                                      "(); call site skipped"});
            return;
        }
        std::string stripped = strip_prefix_word(strip_prefix_word(recv_type, "&mut"), "&");
        if (stripped.rfind("*const", 0) == 0 || stripped.rfind("*mut", 0) == 0) {
            record(CallSiteFact::direct("ptr::" + method), in_unsafe, at, std::nullopt);
            return;
        }
        std::string base = base_type_name(stripped);
        if (fn_.generic_params.count(base) != 0) {
            auto bound = fn_.generic_bounds.find(base);
            if (bound != fn_.generic_bounds.end()) {
                record(CallSiteFact::generic(bound->second, method), in_unsafe, at, std::nullopt);
            } else if (in_unsafe) {
                diags_.push_back({ExtractionDiagnostic::Severity::Warning, at.line, at.col,
                                  fn_id_ + ": generic receiver '" + base +
                                      "' has no trait bound; call site skipped"});
            }
            return;
        }
        if (auto ty = resolve_type(base)) {
            auto local = resolve_local_fn(*ty + "::" + method);
            if (local) {
                record(CallSiteFact::direct(*local), in_unsafe, at, local);
            } else {
                record(CallSiteFact::direct(*ty + "::" + method), in_unsafe, at, std::nullopt);
            }
            return;
        }
        record(CallSiteFact::direct(base + "::" + method), in_unsafe, at, std::nullopt);
    }

    // Types the expression immediately before `.method(`: self, self.field,
    // a parameter, or a let-bound variable.
    std::string receiver_type(const std::vector<Token>& toks, std::size_t dot_index) {
        if (dot_index == 0) return {};
        const Token& prev = toks[dot_index - 1];
        if (!prev.is_ident()) return {};

        if (prev.is("self")) return owner_ ? *owner_ : std::string{};

        // self.field chain?
        if (dot_index >= 3 && toks[dot_index - 2].is(".") && toks[dot_index - 3].is("self")) {
            if (!owner_) return {};
            auto ty = ws_.field_types.find(*owner_);
            if (ty == ws_.field_types.end()) return {};
            auto field = ty->second.find(prev.text);
            return field == ty->second.end() ? std::string{} : field->second;
        }
        if (dot_index >= 3 && toks[dot_index - 2].is(".")) return {};  // deeper chains: give up

        auto p = param_types_.find(prev.text);
        if (p != param_types_.end()) return p->second;
        auto b = bindings_.find(prev.text);
        if (b != bindings_.end()) return b->second;
        return {};
    }

    void try_bind_pending(const std::string& path) {
        // `let s2 = ... St2::from(...) ...` binds s2 to St2.
        if (!pending_let_) return;
        auto sep = path.find("::");
        if (sep == std::string::npos) return;
        if (auto ty = resolve_type(path.substr(0, sep))) {
            bindings_[*pending_let_] = *ty;
            pending_let_.reset();
        }
    }

    std::optional<std::string> pending_let_;
};

}  // namespace

// ---------------------------------------------------------------------------
// extract()
// ---------------------------------------------------------------------------

bool ExtractionResult::ok() const {
    return std::none_of(diagnostics.begin(), diagnostics.end(),
                        [](const ExtractionDiagnostic& d) {
                            return d.severity == ExtractionDiagnostic::Severity::Error;
                        });
}

namespace {
struct DeferredCall {
    FunctionId caller;
    FunctionId callee;
    int line;
};
}  // namespace

ExtractionResult extract(const std::vector<SourceUnit>& units, std::string library_name) {
    ExtractionResult result;
    result.facts.name = std::move(library_name);
    std::vector<DeferredCall> deferred_safe_calls;

    // Deterministic merge: units ordered by path.
    std::vector<const SourceUnit*> ordered;
    for (const auto& u : units) ordered.push_back(&u);
    std::sort(ordered.begin(), ordered.end(),
              [](const SourceUnit* a, const SourceUnit* b) { return a->path < b->path; });

    Workspace ws;
    for (const SourceUnit* unit : ordered) {
        ParsedUnit parsed = UnitParser(*unit, result.diagnostics).run();
        std::move(parsed.fns.begin(), parsed.fns.end(), std::back_inserter(ws.fns));
        std::move(parsed.types.begin(), parsed.types.end(), std::back_inserter(ws.types));
        for (auto& [trait, methods] : parsed.trait_methods)
            ws.trait_methods[trait].insert(methods.begin(), methods.end());
    }
    if (!result.ok()) {
        result.facts = LibraryFacts{};
        return result;
    }

    LibraryFacts& f = result.facts;

    // Types first: ids and field maps drive the rest of the resolution.
    for (const auto& rt : ws.types) {
        TypeFact t;
        t.id = qualify(rt.modules, rt.name);
        t.name = rt.name;
        t.adt_kind = rt.adt_kind;
        for (const auto& field : rt.fields) {
            t.fields.push_back({field.name, field.is_pub ? facts::Visibility::Public
                                                         : facts::Visibility::Private});
            ws.field_types[t.id][field.name] = field.type_text;
        }
        if (ws.type_by_name.count(t.id) != 0) {
            result.diagnostics.push_back({ExtractionDiagnostic::Severity::Error, rt.line, 1,
                                          "duplicate type definition '" + t.id + "'"});
            continue;
        }
        ws.type_by_name[t.id] = t.id;
        ws.type_by_name.emplace(rt.name, t.id);  // bare name, first definition wins
        if (!facts::literal_constructible(t)) ws.private_field_types.insert(t.id);
        f.types.push_back(std::move(t));
    }

    // Function identities.
    std::map<std::string, TypeId> local_types = ws.type_by_name;
    std::vector<FunctionId> ids(ws.fns.size());
    for (std::size_t i = 0; i < ws.fns.size(); ++i) {
        const RawFn& rf = ws.fns[i];
        std::string id;
        if (rf.impl_target) {
            auto ty = ws.type_by_name.find(qualify(rf.modules, *rf.impl_target));
            if (ty == ws.type_by_name.end()) ty = ws.type_by_name.find(*rf.impl_target);
            if (ty == ws.type_by_name.end()) {
                result.diagnostics.push_back(
                    {ExtractionDiagnostic::Severity::Error, rf.line, rf.col,
                     "impl block targets unknown type '" + *rf.impl_target + "'"});
                continue;
            }
            id = ty->second + "::" + rf.name;
        } else {
            id = qualify(rf.modules, rf.name);
        }
        if (ws.fn_by_qualified.count(id) != 0) {
            result.diagnostics.push_back({ExtractionDiagnostic::Severity::Error, rf.line, rf.col,
                                          "duplicate function definition '" + id + "'"});
            continue;
        }
        ws.fn_by_qualified[id] = id;
        ws.fn_index[id] = i;
        ids[i] = id;
    }
    if (!result.ok()) {
        result.facts = LibraryFacts{};
        return result;
    }

    // Build the facts, then scan bodies with full knowledge of the workspace.
    for (std::size_t i = 0; i < ws.fns.size(); ++i) {
        const RawFn& rf = ws.fns[i];
        FunctionFact fn;
        fn.id = ids[i];
        fn.name = rf.name;
        fn.safety = rf.is_unsafe ? facts::Safety::Unsafe : facts::Safety::Safe;
        fn.visibility = rf.is_pub ? facts::Visibility::Public : facts::Visibility::Private;

        std::optional<TypeId> owner;
        if (rf.impl_target) {
            auto ty = ws.type_by_name.find(qualify(rf.modules, *rf.impl_target));
            if (ty == ws.type_by_name.end()) ty = ws.type_by_name.find(*rf.impl_target);
            owner = ty->second;
            fn.owner_type = owner;
            fn.path = *owner;
            fn.kind = rf.has_self ? facts::FnKind::DynMethod : facts::FnKind::StaticMethod;
            fn.takes_mut_self = rf.mut_self;
        } else {
            std::string mods;
            for (std::size_t m = 0; m < rf.modules.size(); ++m) {
                if (m) mods += "::";
                mods += rf.modules[m];
            }
            fn.path = mods;
            fn.kind = facts::FnKind::Function;
        }

        for (const auto& p : rf.params)
            fn.params.push_back({p.name, classify_param(p.type_text, rf.generic_bounds)});
        fn.ret = classify_return(rf.ret_text, rf.generic_params, local_types, owner);
        fn.module_class = facts::module_class_for(
            fn.path, owner ? base_type_name(*owner) : std::string{});

        {
            std::string sig = "fn(";
            for (std::size_t p = 0; p < rf.params.size(); ++p) {
                if (p) sig += ", ";
                sig += rf.params[p].type_text;
            }
            sig += ")";
            if (!rf.ret_text.empty() && rf.ret_text != "()") sig += " -> " + rf.ret_text;
            fn.signature = sig;
        }

        // Annotations: canonicalize each SAFETY line into one string per SP.
        auto add_lines = [&](const std::vector<std::string>& lines,
                             std::map<FunctionId, std::vector<std::string>>& into) {
            for (const auto& line : lines) {
                try {
                    for (const auto& e : sp::parse_sp_list(line))
                        into[fn.id].push_back(sp::print(e));
                } catch (const SyntaxError& err) {
                    result.diagnostics.push_back(
                        {ExtractionDiagnostic::Severity::Warning, rf.line, rf.col,
                         fn.id + ": unparsable annotation kept verbatim (" + err.what() + ")"});
                    into[fn.id].push_back(line);
                }
            }
        };
        add_lines(rf.safety_lines, f.tag_annotations);
        add_lines(rf.verifies_lines, f.verifies);
        for (const auto& line : rf.kills_lines) {
            std::istringstream ss(line);
            std::string tag;
            while (std::getline(ss, tag, ',')) {
                auto b = tag.find_first_not_of(" \t");
                auto e = tag.find_last_not_of(" \t");
                if (b != std::string::npos) f.kills[fn.id].push_back(tag.substr(b, e - b + 1));
            }
        }

        BodyScanner scanner(rf, fn.id, owner, ws, result.diagnostics);
        BodyScanner::Result scan = scanner.run();
        fn.unsafe_callsites = std::move(scan.callsites);

        // Missing-unsafe warnings need every function classified first.
        for (const auto& [callee, line] : scan.safe_context_calls)
            deferred_safe_calls.push_back({fn.id, callee, line});

        f.functions.push_back(std::move(fn));
    }

    // Trait impl index.
    for (const auto& [trait, methods] : ws.trait_methods) {
        for (const auto& method : methods) {
            std::vector<FunctionId> impls;
            for (std::size_t i = 0; i < ws.fns.size(); ++i) {
                const RawFn& rf = ws.fns[i];
                if (rf.trait_of_impl == trait && rf.name == method) impls.push_back(ids[i]);
            }
            std::sort(impls.begin(), impls.end());
            if (!impls.empty()) f.trait_impls[trait + "::" + method] = impls;
        }
    }

    // Missing-unsafe warnings now that safety of every local callee is known.
    {
        std::map<FunctionId, facts::Safety> safety;
        for (const auto& fn : f.functions) safety[fn.id] = fn.safety;
        for (const auto& rec : deferred_safe_calls) {
            auto it = safety.find(rec.callee);
            if (it != safety.end() && it->second == facts::Safety::Unsafe)
                result.diagnostics.push_back(
                    {ExtractionDiagnostic::Severity::Warning, rec.line, 1,
                     rec.caller + ": calls unsafe function '" + rec.callee +
                         "' outside an unsafe block"});
        }
    }

    try {
        facts::finalize(f);
    } catch (const Error& e) {
        result.diagnostics.push_back({ExtractionDiagnostic::Severity::Error, 0, 0, e.what()});
        result.facts = LibraryFacts{};
        return result;
    }
    return result;
}

}  // namespace tagaudit::extract

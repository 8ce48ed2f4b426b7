#include "tagaudit/sp.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <sstream>

namespace tagaudit::sp {

bool AriExpr::operator==(const AriExpr& other) const {
    return op == other.op && operands == other.operands;
}

SpExpr SpExpr::make_term(SpTerm t) {
    SpExpr e;
    e.kind = Kind::Term;
    e.term = std::move(t);
    return e;
}

SpExpr SpExpr::make_and(std::vector<SpExpr> children) {
    SpExpr e;
    e.kind = Kind::And;
    e.children = std::move(children);
    return e;
}

SpExpr SpExpr::make_or(std::vector<SpExpr> children) {
    SpExpr e;
    e.kind = Kind::Or;
    e.children = std::move(children);
    return e;
}

std::string_view usage_name(Usage u) {
    switch (u) {
        case Usage::Precondition: return "precond";
        case Usage::Hazard: return "hazard";
        case Usage::Option: return "option";
    }
    return "precond";
}

std::string_view category_name(TagCategory c) {
    switch (c) {
        case TagCategory::Layout: return "layout";
        case TagCategory::Pointer: return "pointer";
        case TagCategory::Content: return "content";
        case TagCategory::Alias: return "alias";
        case TagCategory::Misc: return "misc";
        case TagCategory::Compound: return "compound";
    }
    return "misc";
}

// ---------------------------------------------------------------------------
// TagKey / TagSet
// ---------------------------------------------------------------------------

std::string TagKey::str() const {
    return negated ? "!" + name : name;
}

TagKey tag_key(std::string_view text) {
    TagKey k;
    if (!text.empty() && text.front() == '!') {
        k.negated = true;
        text.remove_prefix(1);
    }
    k.name.assign(text);
    return k;
}

TagSet::TagSet(std::initializer_list<TagKey> keys) {
    for (const auto& k : keys) insert(k);
}

bool TagSet::insert(const TagKey& k) {
    TagKey complement{!k.negated, k.name};
    if (items_.count(complement) != 0) return false;
    items_.insert(k);
    return true;
}

bool TagSet::contains(const TagKey& k) const {
    return items_.count(k) != 0;
}

bool TagSet::contains_name(std::string_view name) const {
    return items_.count(TagKey{false, std::string(name)}) != 0 ||
           items_.count(TagKey{true, std::string(name)}) != 0;
}

void TagSet::unite(const TagSet& other) {
    for (const auto& k : other.items_) insert(k);
}

void TagSet::subtract(const TagSet& other) {
    for (const auto& k : other.items_) items_.erase(k);
}

TagSet TagSet::intersect(const TagSet& other) const {
    TagSet out;
    for (const auto& k : items_)
        if (other.contains(k)) out.insert(k);
    return out;
}

bool TagSet::is_subset_of(const TagSet& other) const {
    return std::all_of(items_.begin(), items_.end(),
                       [&](const TagKey& k) { return other.contains(k); });
}

std::string TagSet::str() const {
    std::string out = "{";
    bool first = true;
    for (const auto& k : items_) {
        if (!first) out += ", ";
        out += k.str();
        first = false;
    }
    out += "}";
    return out;
}

std::vector<std::string> TagSet::names() const {
    std::vector<std::string> out;
    out.reserve(items_.size());
    for (const auto& k : items_) out.push_back(k.str());
    return out;
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

namespace {

struct ArgPrinter {
    std::string operator()(const FnParId& a) const { return a.path; }
    std::string operator()(const RetVal&) const { return "0"; }
    std::string operator()(const TypePar& a) const { return a.name; }
    std::string operator()(const Num& a) const { return a.digits; }
    std::string operator()(const SizeOf& a) const { return "sizeof(" + a.type_par + ")"; }
    std::string operator()(const AriExpr& a) const {
        std::string out = a.op + "(";
        for (std::size_t i = 0; i < a.operands.size(); ++i) {
            if (i) out += ", ";
            out += print(a.operands[i]);
        }
        return out + ")";
    }
    std::string operator()(const ValRange& a) const {
        std::string out;
        out += a.lo_closed ? '[' : '(';
        out += a.lo + ", " + a.hi;
        out += a.hi_closed ? ']' : ')';
        return out;
    }
    std::string operator()(const AddrRange& a) const {
        std::string out = "(";
        for (std::size_t i = 0; i < a.elems.size(); ++i) {
            if (i) out += ", ";
            out += a.elems[i];
        }
        return out + ")";
    }
    std::string operator()(const SpecArg& a) const { return a.text; }
};

}  // namespace

std::string print(const SpArg& a) {
    return std::visit(ArgPrinter{}, a.node);
}

std::string print(const SpTerm& t) {
    std::string out;
    if (t.negated) out += '!';
    out += t.tag;
    out += '(';
    for (std::size_t i = 0; i < t.args.size(); ++i) {
        if (i) out += ", ";
        out += print(t.args[i]);
    }
    out += ')';
    if (t.usage_override) {
        out += '@';
        out += usage_name(*t.usage_override);
    }
    return out;
}

std::string print(const SpExpr& e) {
    switch (e.kind) {
        case SpExpr::Kind::Term:
            return print(e.term);
        case SpExpr::Kind::And: {
            std::string out;
            for (std::size_t i = 0; i < e.children.size(); ++i) {
                if (i) out += " && ";
                const SpExpr& c = e.children[i];
                if (c.kind == SpExpr::Kind::Term)
                    out += print(c);
                else
                    out += "(" + print(c) + ")";
            }
            return out;
        }
        case SpExpr::Kind::Or: {
            std::string out;
            for (std::size_t i = 0; i < e.children.size(); ++i) {
                if (i) out += " || ";
                const SpExpr& c = e.children[i];
                if (c.kind == SpExpr::Kind::Or)
                    out += "(" + print(c) + ")";
                else
                    out += print(c);
            }
            return out;
        }
    }
    return {};
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool is_spec_keyword(std::string_view s) {
    return s == "any" || s == "unknown" || s == "heap" || s == "vec" || s == "Allocator";
}

class Parser {
  public:
    explicit Parser(std::string_view text) : text_(text) {}

    SpExpr parse_expression() {
        SpExpr e = parse_or();
        skip_ws();
        if (pos_ != text_.size())
            fail("trailing input after expression", "end of input");
        return e;
    }

  private:
    std::string_view text_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what, std::string expected) {
        std::ostringstream msg;
        msg << "syntax error at offset " << pos_ << ": " << what;
        throw SyntaxError(msg.str(), pos_, std::move(expected));
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    bool eat(char c) {
        if (peek() == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    bool eat(std::string_view s) {
        skip_ws();
        if (text_.substr(pos_, s.size()) == s) {
            pos_ += s.size();
            return true;
        }
        return false;
    }

    void expect(char c, const char* ctx) {
        if (!eat(c)) fail(std::string("expected '") + c + "' " + ctx, std::string(1, c));
    }

    SpExpr parse_or() {
        std::vector<SpExpr> children;
        children.push_back(parse_and());
        while (eat("||")) children.push_back(parse_and());
        if (children.size() == 1) return std::move(children.front());
        return SpExpr::make_or(std::move(children));
    }

    SpExpr parse_and() {
        std::vector<SpExpr> children;
        children.push_back(parse_primary());
        while (true) {
            skip_ws();
            if (text_.substr(pos_, 2) == "&&") {
                pos_ += 2;
                children.push_back(parse_primary());
            } else {
                break;
            }
        }
        if (children.size() == 1) return std::move(children.front());
        return SpExpr::make_and(std::move(children));
    }

    SpExpr parse_primary() {
        if (peek() == '(') {
            ++pos_;
            SpExpr inner = parse_or();
            expect(')', "to close group");
            return inner;
        }
        return SpExpr::make_term(parse_term());
    }

    SpTerm parse_term() {
        SpTerm t;
        if (eat('!')) t.negated = true;
        t.tag = parse_ident_plain();
        if (t.tag.empty()) fail("expected tag name", "tag");
        expect('(', "after tag name");
        if (peek() != ')') {
            t.args.push_back(parse_arg());
            while (eat(',')) t.args.push_back(parse_arg());
        }
        expect(')', "to close argument list");
        if (eat('@')) {
            std::string u = parse_ident_plain();
            if (u == "precond" || u == "precondition")
                t.usage_override = Usage::Precondition;
            else if (u == "hazard")
                t.usage_override = Usage::Hazard;
            else if (u == "option")
                t.usage_override = Usage::Option;
            else
                fail("unknown usage class '" + u + "'", "precond|hazard|option");
        }
        return t;
    }

    // Identifier without path separators. Tags allow digits past the first
    // character (Ptr2Ref appears in the wild despite the letters-only rule).
    std::string parse_ident_plain() {
        skip_ws();
        if (pos_ >= text_.size() || !is_ident_start(text_[pos_])) return {};
        std::size_t start = pos_;
        while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
        return std::string(text_.substr(start, pos_ - start));
    }

    // Identifier with optional `::` and `.` segments: self.ptr, isize::MAX.
    std::string parse_ident_path() {
        std::string out = parse_ident_plain();
        if (out.empty()) return out;
        while (pos_ < text_.size()) {
            if (text_.substr(pos_, 2) == "::") {
                pos_ += 2;
                out += "::" + parse_ident_plain();
            } else if (text_[pos_] == '.' && pos_ + 1 < text_.size() &&
                       is_ident_start(text_[pos_ + 1])) {
                ++pos_;
                out += "." + parse_ident_plain();
            } else {
                break;
            }
        }
        return out;
    }

    std::string parse_number() {
        skip_ws();
        std::size_t start = pos_;
        if (pos_ < text_.size() && text_[pos_] == '-') ++pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        return std::string(text_.substr(start, pos_ - start));
    }

    // Balanced-token capture with all whitespace stripped; used for opaque
    // range elements and spec arguments.
    std::string capture_balanced_until(std::string_view stoppers) {
        skip_ws();
        std::string out;
        int depth = 0;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (depth == 0 && stoppers.find(c) != std::string_view::npos) break;
            if (c == '(' || c == '[') ++depth;
            if (c == ')' || c == ']') {
                if (depth == 0) break;
                --depth;
            }
            if (!std::isspace(static_cast<unsigned char>(c))) out += c;
            ++pos_;
        }
        return out;
    }

    SpArg parse_arg() {
        char c = peek();
        if (c == '(' || c == '[') return parse_range_or_tuple();
        if (c == '!') {
            ++pos_;
            std::string rest = capture_balanced_until(",)]");
            return SpArg{SpecArg{"!" + rest}};
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-') {
            std::string n = parse_number();
            if (n == "0") return SpArg{RetVal{}};
            return SpArg{Num{n}};
        }
        if (is_ident_start(c)) return parse_ident_arg();
        fail("expected argument", "identifier, number, range or tuple");
    }

    SpArg parse_ident_arg() {
        std::string id = parse_ident_path();
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == '(') {
            if (id == "sizeof") {
                ++pos_;
                std::string inner = capture_balanced_until(")");
                expect(')', "to close sizeof");
                return SpArg{SizeOf{inner}};
            }
            if (id == "add" || id == "sub" || id == "mul" || id == "div" || id == "rem") {
                ++pos_;
                AriExpr e{id, {}};
                e.operands.push_back(parse_arg());
                expect(',', "between arithmetic operands");
                e.operands.push_back(parse_arg());
                expect(')', "to close arithmetic expression");
                return SpArg{std::move(e)};
            }
            if (id == "neg") {
                ++pos_;
                AriExpr e{id, {}};
                e.operands.push_back(parse_arg());
                expect(')', "to close arithmetic expression");
                return SpArg{std::move(e)};
            }
            // Unknown call-like form: preserve opaquely (Some(T), Ok(T), ...).
            ++pos_;
            std::string inner = capture_balanced_until(")");
            expect(')', "to close spec argument");
            return SpArg{SpecArg{id + "(" + inner + ")"}};
        }
        if (id.find("::") != std::string::npos) return SpArg{SpecArg{id}};
        if (is_spec_keyword(id)) return SpArg{SpecArg{id}};
        if (std::isupper(static_cast<unsigned char>(id.front())) &&
            id.find('.') == std::string::npos)
            return SpArg{TypePar{id}};
        return SpArg{FnParId{id}};
    }

    SpArg parse_range_or_tuple() {
        skip_ws();
        char open = text_[pos_++];
        std::vector<std::string> elems;
        skip_ws();
        if (peek() != ')' && peek() != ']') {
            elems.push_back(capture_balanced_until(",)]"));
            while (eat(',')) elems.push_back(capture_balanced_until(",)]"));
        }
        skip_ws();
        if (pos_ >= text_.size() || (text_[pos_] != ')' && text_[pos_] != ']'))
            fail("unterminated range or tuple", ") or ]");
        char close = text_[pos_++];

        bool bracketed = open == '[' || close == ']';
        if (elems.size() == 2 && (bracketed || (open == '(' && close == ')'))) {
            ValRange r;
            r.lo = elems[0];
            r.hi = elems[1];
            r.lo_closed = open == '[';
            r.hi_closed = close == ']';
            return SpArg{std::move(r)};
        }
        if (bracketed) fail("brackets require exactly two range bounds", "lo, hi");
        return SpArg{AddrRange{std::move(elems)}};
    }
};

}  // namespace

SpExpr parse_sp(std::string_view text) {
    return Parser(text).parse_expression();
}

std::vector<SpExpr> parse_sp_list(std::string_view text) {
    // Split at top-level commas, then parse each piece as one expression.
    std::vector<std::string> pieces;
    std::string current;
    int depth = 0;
    for (char c : text) {
        if (c == '(' || c == '[') ++depth;
        if (c == ')' || c == ']') --depth;
        if (c == ',' && depth == 0) {
            pieces.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    pieces.push_back(current);

    std::vector<SpExpr> out;
    for (const auto& p : pieces) {
        bool blank = std::all_of(p.begin(), p.end(),
                                 [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
        if (blank) continue;
        out.push_back(parse_sp(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

void TagRegistry::add(TagDef def) {
    if (def.is_compound() && !def.expansion)
        throw UnknownCompound("compound tag '" + def.name + "' has no expansion");
    defs_[def.name] = std::move(def);
}

void TagRegistry::add_implication(const std::string& premise_sp, const std::string& conclusion_sp) {
    SpExpr p = parse_sp(premise_sp);
    SpExpr c = parse_sp(conclusion_sp);
    if (p.kind != SpExpr::Kind::Term || c.kind != SpExpr::Kind::Term)
        throw SchemaError("implication rules must relate single terms");
    implications_.push_back(ImplicationRule{p.term, c.term});
}

const TagDef* TagRegistry::find(std::string_view name) const {
    auto it = defs_.find(name);
    return it == defs_.end() ? nullptr : &it->second;
}

std::vector<std::string> TagRegistry::tag_names() const {
    std::vector<std::string> out;
    out.reserve(defs_.size());
    for (const auto& [k, v] : defs_) out.push_back(k);
    return out;
}

namespace {

TagDef primitive(std::string name, TagCategory cat, std::vector<Usage> usage, int min_arity,
                 int max_arity) {
    TagDef d;
    d.name = std::move(name);
    d.category = cat;
    d.usage = std::move(usage);
    d.min_arity = min_arity;
    d.max_arity = max_arity;
    return d;
}

TagDef compound(std::string name, std::vector<std::string> params, const std::string& expansion) {
    TagDef d;
    d.name = std::move(name);
    d.category = TagCategory::Compound;
    d.usage = {Usage::Precondition};
    d.min_arity = static_cast<int>(params.size());
    d.max_arity = static_cast<int>(params.size());
    d.expansion_params = std::move(params);
    d.expansion = parse_sp(expansion);
    return d;
}

TagRegistry make_builtin() {
    using C = TagCategory;
    using U = Usage;
    TagRegistry reg;

    // Layout
    reg.add(primitive("Align", C::Layout, {U::Precondition}, 2, 2));
    reg.add(primitive("Size", C::Layout, {U::Precondition, U::Option}, 2, 2));
    reg.add(primitive("Sized", C::Layout, {U::Precondition, U::Option}, 2, 2));
    reg.add(primitive("ZST", C::Layout, {U::Precondition}, 0, 1));
    reg.add(primitive("Padding", C::Layout, {U::Precondition}, 1, 1));

    // Pointer
    reg.add(primitive("Null", C::Pointer, {U::Precondition}, 1, 1));
    reg.add(primitive("Allocated", C::Pointer, {U::Precondition}, 3, 4));
    reg.add(primitive("InBound", C::Pointer, {U::Precondition}, 3, 4));
    reg.add(primitive("Overlap", C::Pointer, {U::Precondition}, 4, 4));
    reg.add(primitive("Allocator", C::Pointer, {U::Precondition}, 0, 2));

    // Content
    reg.add(primitive("ValidNum", C::Content, {U::Precondition}, 2, 2));
    reg.add(primitive("ValidString", C::Content, {U::Precondition, U::Hazard}, 1, 3));
    reg.add(primitive("ValidCStr", C::Content, {U::Precondition}, 1, 2));
    reg.add(primitive("Init", C::Content, {U::Precondition, U::Hazard}, 3, 3));
    reg.add(primitive("Unwrap", C::Content, {U::Precondition}, 2, 2));
    reg.add(primitive("Typed", C::Content, {U::Precondition}, 2, 2));

    // Alias
    reg.add(primitive("Owning", C::Alias, {U::Precondition}, 1, 1));
    reg.add(primitive("Alias", C::Alias, {U::Hazard}, 2, 2));
    reg.add(primitive("Alive", C::Alias, {U::Precondition}, 2, 2));

    // Misc
    reg.add(primitive("Pinned", C::Misc, {U::Hazard}, 1, 2));
    reg.add(primitive("Volatile", C::Misc, {U::Precondition}, 1, 3));
    reg.add(primitive("Opened", C::Misc, {U::Precondition}, 1, 1));
    reg.add(primitive("Trait", C::Misc, {U::Option}, 2, 2));
    reg.add(primitive("Reachable", C::Misc, {U::Precondition}, 0, 0));

    // Compounds
    reg.add(compound("Deref", {"p", "T", "len"},
                     "Allocated(p, T, len, any) && InBound(p, T, len)"));
    reg.add(compound("ValidPtr", {"p", "T", "len"},
                     "Size(T, 0) || (Size(T, !0) && Deref(p, T, len))"));
    reg.add(compound("Ptr2Ref", {"p", "T"},
                     "Align(p, T) && Deref(p, T, 1) && Alias(p, 0)"));
    reg.add(compound("Layout", {"p", "layout"},
                     "ValidNum(rem(p, layout.align), 0) && Allocated(p, u8, layout.size, heap)"));

    reg.add_implication("Allocated(p, T, len, A)", "!Null(p)");
    reg.add_implication("Init(p, T, len)", "Allocated(p, T, len, any)");
    return reg;
}

std::optional<Usage> usage_from_name(std::string_view s) {
    if (s == "precond" || s == "precondition") return Usage::Precondition;
    if (s == "hazard") return Usage::Hazard;
    if (s == "option") return Usage::Option;
    return std::nullopt;
}

TagCategory category_from_name(std::string_view s) {
    if (s == "layout") return TagCategory::Layout;
    if (s == "pointer") return TagCategory::Pointer;
    if (s == "content") return TagCategory::Content;
    if (s == "alias") return TagCategory::Alias;
    if (s == "misc") return TagCategory::Misc;
    if (s == "compound") return TagCategory::Compound;
    throw SchemaError("unknown tag category '" + std::string(s) + "'");
}

}  // namespace

const TagRegistry& TagRegistry::builtin() {
    static const TagRegistry reg = make_builtin();
    return reg;
}

TagRegistry TagRegistry::from_json(const std::string& text, bool extend_builtin) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("registry file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw SchemaError("registry document must be a JSON object");

    TagRegistry reg = extend_builtin ? builtin() : TagRegistry{};
    for (const auto& t : doc.value("tags", nlohmann::json::array())) {
        TagDef d;
        d.name = t.at("name").get<std::string>();
        d.category = category_from_name(t.value("category", "misc"));
        for (const auto& u : t.value("usage", nlohmann::json::array())) {
            auto parsed = usage_from_name(u.get<std::string>());
            if (!parsed) throw SchemaError("unknown usage class in registry: " + u.dump());
            d.usage.push_back(*parsed);
        }
        if (d.usage.empty()) d.usage.push_back(Usage::Precondition);
        if (t.contains("arity")) {
            d.min_arity = d.max_arity = t.at("arity").get<int>();
        } else {
            d.min_arity = t.value("min_arity", 0);
            d.max_arity = t.value("max_arity", -1);
        }
        if (t.contains("expansion")) {
            d.expansion = parse_sp(t.at("expansion").get<std::string>());
            for (const auto& p : t.value("params", nlohmann::json::array()))
                d.expansion_params.push_back(p.get<std::string>());
        }
        reg.add(std::move(d));
    }
    for (const auto& imp : doc.value("implications", nlohmann::json::array()))
        reg.add_implication(imp.at("if").get<std::string>(), imp.at("then").get<std::string>());
    return reg;
}

// ---------------------------------------------------------------------------
// Lint
// ---------------------------------------------------------------------------

namespace {

bool arg_is_lower_ident(const SpArg& a) {
    const auto* id = std::get_if<FnParId>(&a.node);
    return id && !id->path.empty() && std::islower(static_cast<unsigned char>(id->path.front()));
}

void lint_term(const SpTerm& t, const TagRegistry& reg, std::vector<SpDiagnostic>& out) {
    const TagDef* def = reg.find(t.tag);
    if (def == nullptr) {
        out.push_back({SpDiagnostic::Kind::UnknownTag, SpDiagnostic::Severity::Error,
                       "unknown tag '" + t.tag + "'"});
        return;
    }
    int n = static_cast<int>(t.args.size());
    if (n < def->min_arity || (def->max_arity >= 0 && n > def->max_arity)) {
        std::ostringstream msg;
        msg << "tag '" << t.tag << "' expects ";
        if (def->max_arity == def->min_arity)
            msg << def->min_arity;
        else if (def->max_arity < 0)
            msg << "at least " << def->min_arity;
        else
            msg << def->min_arity << ".." << def->max_arity;
        msg << " argument(s), got " << n;
        out.push_back({SpDiagnostic::Kind::ArityMismatch, SpDiagnostic::Severity::Error, msg.str()});
    }
    if (t.usage_override &&
        std::find(def->usage.begin(), def->usage.end(), *t.usage_override) == def->usage.end()) {
        std::ostringstream msg;
        msg << "tag '" << t.tag << "' declared as " << usage_name(*t.usage_override)
            << " but the registry lists it as";
        for (Usage u : def->usage) msg << " " << usage_name(u);
        out.push_back(
            {SpDiagnostic::Kind::UsageClassWarning, SpDiagnostic::Severity::Warning, msg.str()});
    }
    // Legacy argument order Allocated(p, len, T, A); canonical is (p, T, len, A).
    if (t.tag == "Allocated" && t.args.size() == 4 && arg_is_lower_ident(t.args[1]) &&
        std::holds_alternative<TypePar>(t.args[2].node)) {
        out.push_back({SpDiagnostic::Kind::ArgOrderWarning, SpDiagnostic::Severity::Warning,
                       "Allocated uses legacy argument order (p, len, T, A); canonical order is "
                       "(p, T, len, A)"});
    }
}

void lint_walk(const SpExpr& e, const TagRegistry& reg, std::vector<SpDiagnostic>& out) {
    if (e.kind == SpExpr::Kind::Term) {
        lint_term(e.term, reg, out);
        return;
    }
    for (const auto& c : e.children) lint_walk(c, reg, out);
}

}  // namespace

std::vector<SpDiagnostic> lint_sp(const SpExpr& e, const TagRegistry& reg) {
    std::vector<SpDiagnostic> out;
    lint_walk(e, reg, out);
    return out;
}

// ---------------------------------------------------------------------------
// Compound expansion
// ---------------------------------------------------------------------------

namespace {

using Substitution = std::map<std::string, SpArg>;

std::string subst_text(const std::string& text, const Substitution& sub) {
    auto it = sub.find(text);
    if (it != sub.end()) return print(it->second);
    auto dot = text.find('.');
    if (dot != std::string::npos) {
        auto base = sub.find(text.substr(0, dot));
        if (base != sub.end()) return print(base->second) + text.substr(dot);
    }
    return text;
}

SpArg subst_arg(const SpArg& a, const Substitution& sub);

struct ArgSubst {
    const Substitution& sub;

    SpArg operator()(const FnParId& v) const {
        auto it = sub.find(v.path);
        if (it != sub.end()) return it->second;
        std::string replaced = subst_text(v.path, sub);
        if (replaced != v.path) return SpArg{FnParId{replaced}};
        return SpArg{v};
    }
    SpArg operator()(const RetVal& v) const { return SpArg{v}; }
    SpArg operator()(const TypePar& v) const {
        auto it = sub.find(v.name);
        if (it != sub.end()) return it->second;
        return SpArg{v};
    }
    SpArg operator()(const Num& v) const { return SpArg{v}; }
    SpArg operator()(const SizeOf& v) const { return SpArg{SizeOf{subst_text(v.type_par, sub)}}; }
    SpArg operator()(const AriExpr& v) const {
        AriExpr out{v.op, {}};
        for (const auto& o : v.operands) out.operands.push_back(subst_arg(o, sub));
        return SpArg{std::move(out)};
    }
    SpArg operator()(const ValRange& v) const {
        ValRange out = v;
        out.lo = subst_text(v.lo, sub);
        out.hi = subst_text(v.hi, sub);
        return SpArg{std::move(out)};
    }
    SpArg operator()(const AddrRange& v) const {
        AddrRange out;
        for (const auto& e : v.elems) out.elems.push_back(subst_text(e, sub));
        return SpArg{std::move(out)};
    }
    SpArg operator()(const SpecArg& v) const { return SpArg{SpecArg{subst_text(v.text, sub)}}; }
};

SpArg subst_arg(const SpArg& a, const Substitution& sub) {
    return std::visit(ArgSubst{sub}, a.node);
}

SpExpr subst_expr(const SpExpr& e, const Substitution& sub) {
    if (e.kind == SpExpr::Kind::Term) {
        SpTerm t = e.term;
        for (auto& a : t.args) a = subst_arg(a, sub);
        return SpExpr::make_term(std::move(t));
    }
    SpExpr out;
    out.kind = e.kind;
    for (const auto& c : e.children) out.children.push_back(subst_expr(c, sub));
    return out;
}

SpExpr negate_expr(const SpExpr& e) {
    if (e.kind == SpExpr::Kind::Term) {
        SpTerm t = e.term;
        t.negated = !t.negated;
        return SpExpr::make_term(std::move(t));
    }
    SpExpr out;
    out.kind = e.kind == SpExpr::Kind::And ? SpExpr::Kind::Or : SpExpr::Kind::And;
    for (const auto& c : e.children) out.children.push_back(negate_expr(c));
    return out;
}

SpExpr expand_walk(const SpExpr& e, const TagRegistry& reg, int depth) {
    if (depth > 16) throw UnknownCompound("compound expansion exceeds depth limit (cycle?)");
    if (e.kind != SpExpr::Kind::Term) {
        SpExpr out;
        out.kind = e.kind;
        for (const auto& c : e.children) out.children.push_back(expand_walk(c, reg, depth));
        return out;
    }

    const SpTerm& t = e.term;
    const TagDef* def = reg.find(t.tag);
    if (def == nullptr || !def->expansion) return e;
    if (def->expansion_params.size() != t.args.size()) {
        throw UnknownCompound("compound '" + t.tag + "' applied to " +
                              std::to_string(t.args.size()) + " argument(s), template takes " +
                              std::to_string(def->expansion_params.size()));
    }
    Substitution sub;
    for (std::size_t i = 0; i < t.args.size(); ++i) sub[def->expansion_params[i]] = t.args[i];
    SpExpr body = subst_expr(*def->expansion, sub);
    if (t.negated) body = negate_expr(body);
    return expand_walk(body, reg, depth + 1);
}

}  // namespace

SpExpr expand_compound(const SpExpr& e, const TagRegistry& reg) {
    return expand_walk(e, reg, 0);
}

// ---------------------------------------------------------------------------
// Implication / normalize
// ---------------------------------------------------------------------------

namespace {

struct TermShape {
    bool negated;
    std::string tag;
    std::vector<std::string> args;

    auto operator<=>(const TermShape&) const = default;
};

TermShape shape_of(const SpTerm& t) {
    TermShape s;
    s.negated = t.negated;
    s.tag = t.tag;
    for (const auto& a : t.args) s.args.push_back(print(a));
    return s;
}

std::string variable_name(const SpArg& a) {
    if (const auto* id = std::get_if<FnParId>(&a.node)) return id->path;
    if (const auto* tp = std::get_if<TypePar>(&a.node)) return tp->name;
    if (const auto* sp = std::get_if<SpecArg>(&a.node)) return sp->text;
    return print(a);
}

// Applies one rule to a concrete term shape; returns the derived shape.
std::optional<TermShape> apply_rule(const ImplicationRule& rule, const TermShape& s) {
    if (rule.premise.negated != s.negated || rule.premise.tag != s.tag ||
        rule.premise.args.size() != s.args.size())
        return std::nullopt;
    std::map<std::string, std::string> bind;
    for (std::size_t i = 0; i < s.args.size(); ++i)
        bind[variable_name(rule.premise.args[i])] = s.args[i];

    TermShape out;
    out.negated = rule.conclusion.negated;
    out.tag = rule.conclusion.tag;
    for (const auto& a : rule.conclusion.args) {
        std::string v = variable_name(a);
        auto it = bind.find(v);
        out.args.push_back(it != bind.end() ? it->second : print(a));
    }
    return out;
}

}  // namespace

bool implies(const SpTerm& a, const SpTerm& b, const TagRegistry& reg) {
    TermShape target = shape_of(b);
    TermShape start = shape_of(a);
    if (start == target) return true;

    // Reachability over the implication rules (handles chained implications).
    std::vector<TermShape> frontier{start};
    std::set<TermShape> seen{start};
    while (!frontier.empty()) {
        std::vector<TermShape> next;
        for (const auto& s : frontier) {
            for (const auto& rule : reg.implications()) {
                auto derived = apply_rule(rule, s);
                if (!derived) continue;
                if (*derived == target) return true;
                if (seen.insert(*derived).second) next.push_back(*derived);
            }
        }
        frontier = std::move(next);
    }
    return false;
}

std::vector<SpTerm> normalize(std::vector<SpTerm> terms, const TagRegistry& reg) {
    auto key = [](const SpTerm& t) { return print(t); };

    // Drop exact duplicates first.
    std::sort(terms.begin(), terms.end(),
              [&](const SpTerm& a, const SpTerm& b) { return key(a) < key(b); });
    terms.erase(std::unique(terms.begin(), terms.end(),
                            [&](const SpTerm& a, const SpTerm& b) { return key(a) == key(b); }),
                terms.end());

    std::vector<SpTerm> kept;
    for (const auto& t : terms) {
        bool dropped = false;
        for (const auto& other : terms) {
            if (key(other) == key(t)) continue;
            if (!implies(other, t, reg)) continue;
            // Mutual implication keeps the lexicographically smaller term.
            if (implies(t, other, reg) && key(t) < key(other)) continue;
            dropped = true;
            break;
        }
        if (!dropped) kept.push_back(t);
    }

    std::sort(kept.begin(), kept.end(), [&](const SpTerm& a, const SpTerm& b) {
        if (a.tag != b.tag) return a.tag < b.tag;
        return key(a) < key(b);
    });
    return kept;
}

// ---------------------------------------------------------------------------
// Coarse projection
// ---------------------------------------------------------------------------

namespace {

void collect_tags(const SpExpr& e, TagSet& out) {
    if (e.kind == SpExpr::Kind::Term) {
        out.insert(TagKey{e.term.negated, e.term.tag});
        return;
    }
    for (const auto& c : e.children) collect_tags(c, out);
}

}  // namespace

TagSet coarse(const SpExpr& e, const TagRegistry& reg) {
    TagSet out;
    collect_tags(expand_compound(e, reg), out);
    return out;
}

TagSet coarse_annotations(const std::vector<std::string>& annotations, const TagRegistry& reg,
                          std::vector<std::string>* errors) {
    TagSet out;
    for (const auto& text : annotations) {
        try {
            for (const auto& e : parse_sp_list(text)) out.unite(coarse(e, reg));
        } catch (const SyntaxError& err) {
            if (errors == nullptr) throw;
            errors->push_back("'" + text + "': " + err.what());
        }
    }
    return out;
}

}  // namespace tagaudit::sp

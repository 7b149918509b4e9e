#pragma once

// Data model, parser, serializer and well-formedness checker for the
// multi-part module specification language (functionality + modularity +
// concurrency clauses).
//
// Concrete grammar (line oriented, '#' starts a full-line comment):
//
//   [VERSION] <id>                          (optional, document level)
//   [MODULE] <name> level=<1|2|3> loc_budget=<n>
//   [RELY]
//   type <name>: <definition text>
//   func <name>(<p>: <type>, ...) -> <type>
//   lockproto <name>
//   [GUARANTEE]
//   func ... / type ...
//   [TYPES]
//   type ...
//   [INVARIANTS]
//   <predicate text> [| tag=<kind>]
//   [SPEC] <signature>
//   Pre-condition: <predicate>
//   Post-condition:
//   Case <n>: <condition text>
//     - <outcome>
//     Return: <contract>
//   Invariant: <predicate>
//   Algorithm:
//     1. <step>
//   Intent: <text>
//   [CONCURRENCY] <function name>
//   Mechanisms: exclusive, shared_read_section, atomic_counter
//   Lock-pre: <state> [subject], ...
//   Lock-post: <condition> => <state> [subject], ...
//
// The subject alias `target` refers to a function's return value in lock
// assertions.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sysspec/detail/text.hpp"
#include "sysspec/errors.hpp"

namespace sysspec {

// ---------------------------------------------------------------------------
// Domain types

struct TypeDecl {
    std::string name;
    std::string definition;
    bool operator==(const TypeDecl&) const = default;
};

struct Param {
    std::string name;
    std::string type;
    bool operator==(const Param&) const = default;
};

struct Signature {
    std::string name;
    std::vector<Param> params;
    std::string return_type;
    bool operator==(const Signature&) const = default;
};

enum class PredTag { none, nullness, range, membership, lock_state };

struct Predicate {
    std::string text;
    PredTag tag = PredTag::none;
    bool operator==(const Predicate&) const = default;
};

struct PostCase {
    std::string label;       // "Case 1", "Case 2", ...
    std::string condition;   // e.g. "Successful traversal and insertion"
    std::vector<std::string> outcomes;
    std::string return_contract;  // empty when unspecified
    bool operator==(const PostCase&) const = default;
};

enum class LockState { held, not_held, only_this_held, none_held };

struct LockAssertion {
    std::string subject;  // symbol path; empty for none_held
    LockState state = LockState::held;
    bool operator==(const LockAssertion&) const = default;
};

struct LockPostRule {
    std::string condition;
    std::vector<LockAssertion> asserts;
    bool operator==(const LockPostRule&) const = default;
};

enum class LockMechanism { exclusive, shared_read_section, atomic_counter };

struct ConcurrencySpec {
    std::vector<LockAssertion> lock_pre;
    std::vector<LockPostRule> lock_post;
    std::vector<LockMechanism> mechanisms;  // kept sorted, unique
    bool operator==(const ConcurrencySpec&) const = default;
};

struct FunctionSpec {
    Signature signature;
    std::vector<Predicate> pre;
    std::vector<PostCase> post;
    std::vector<Predicate> invariants;
    std::vector<std::string> algorithm;  // ordered steps; empty when absent
    std::string intent;                  // empty when absent
    std::optional<ConcurrencySpec> concurrency;
    bool operator==(const FunctionSpec&) const = default;
};

struct RelyClause {
    std::vector<TypeDecl> imported_types;
    std::vector<Signature> imported_functions;
    std::vector<std::string> imported_lock_protocols;
    bool operator==(const RelyClause&) const = default;

    bool empty() const {
        return imported_types.empty() && imported_functions.empty() &&
               imported_lock_protocols.empty();
    }
};

struct GuaranteeClause {
    std::vector<Signature> exported_functions;
    std::vector<TypeDecl> exported_types;
    bool operator==(const GuaranteeClause&) const = default;

    bool empty() const { return exported_functions.empty() && exported_types.empty(); }
};

struct ModuleSpec {
    std::string name;
    int level = 1;
    int loc_budget = 500;
    RelyClause rely;
    GuaranteeClause guarantee;
    std::vector<TypeDecl> local_types;
    std::vector<Predicate> module_invariants;
    std::vector<FunctionSpec> functions;
    bool operator==(const ModuleSpec&) const = default;

    const FunctionSpec* find_function(const std::string& fname) const {
        for (const auto& f : functions)
            if (f.signature.name == fname) return &f;
        return nullptr;
    }
};

struct SpecDocument {
    std::string version_id;
    std::vector<ModuleSpec> modules;
    bool operator==(const SpecDocument&) const = default;

    const ModuleSpec* find_module(const std::string& mname) const {
        for (const auto& m : modules)
            if (m.name == mname) return &m;
        return nullptr;
    }
    ModuleSpec* find_module(const std::string& mname) {
        for (auto& m : modules)
            if (m.name == mname) return &m;
        return nullptr;
    }
};

struct Diagnostic {
    std::string module;
    std::string rule;
    std::string message;
    bool operator==(const Diagnostic&) const = default;
};

// Well-formedness rule ids.
namespace rules {
inline constexpr const char* DUPLICATE_MODULE = "DUPLICATE_MODULE";
inline constexpr const char* DUPLICATE_IMPORT = "DUPLICATE_IMPORT";
inline constexpr const char* GUARANTEE_UNDECLARED_FUNCTION = "GUARANTEE_UNDECLARED_FUNCTION";
inline constexpr const char* DUPLICATE_PARAM = "DUPLICATE_PARAM";
inline constexpr const char* NO_POSTCASE = "NO_POSTCASE";
inline constexpr const char* DUPLICATE_CASE_LABEL = "DUPLICATE_CASE_LABEL";
inline constexpr const char* EMPTY_PREDICATE = "EMPTY_PREDICATE";
inline constexpr const char* LEVEL2_NEEDS_INTENT = "LEVEL2_NEEDS_INTENT";
inline constexpr const char* LEVEL3_NEEDS_ALGORITHM = "LEVEL3_NEEDS_ALGORITHM";
inline constexpr const char* UNRESOLVED_SYMBOL = "UNRESOLVED_SYMBOL";
inline constexpr const char* UNRESOLVED_LOCK = "UNRESOLVED_LOCK";
inline constexpr const char* LOCK_STATE_CONFLICT = "LOCK_STATE_CONFLICT";
}  // namespace rules

// ---------------------------------------------------------------------------
// Signature identity

// Interface compatibility is name + parameter-type list + return type after
// whitespace normalization; parameter names do not participate.
inline std::string sig_key(const Signature& s) {
    std::string key = s.name + "(";
    for (size_t i = 0; i < s.params.size(); ++i) {
        if (i) key += ",";
        key += detail::normalize_ws(s.params[i].type);
    }
    key += ")->" + detail::normalize_ws(s.return_type);
    return key;
}

inline bool sig_equal(const Signature& a, const Signature& b) {
    return sig_key(a) == sig_key(b);
}

// One-line rendering, also the serialized form.
inline std::string sig_to_string(const Signature& s) {
    std::string out = s.name + "(";
    for (size_t i = 0; i < s.params.size(); ++i) {
        if (i) out += ", ";
        out += s.params[i].name + ": " + s.params[i].type;
    }
    out += ") -> " + s.return_type;
    return out;
}

// ---------------------------------------------------------------------------
// Enum names

inline const char* to_string(PredTag t) {
    switch (t) {
        case PredTag::nullness: return "nullness";
        case PredTag::range: return "range";
        case PredTag::membership: return "membership";
        case PredTag::lock_state: return "lock-state";
        default: return "";
    }
}

inline std::optional<PredTag> pred_tag_from(std::string_view s) {
    if (s == "nullness") return PredTag::nullness;
    if (s == "range") return PredTag::range;
    if (s == "membership") return PredTag::membership;
    if (s == "lock-state") return PredTag::lock_state;
    return std::nullopt;
}

inline const char* to_string(LockState s) {
    switch (s) {
        case LockState::held: return "held";
        case LockState::not_held: return "not_held";
        case LockState::only_this_held: return "only_this_held";
        case LockState::none_held: return "none_held";
    }
    return "";
}

inline std::optional<LockState> lock_state_from(std::string_view s) {
    if (s == "held") return LockState::held;
    if (s == "not_held") return LockState::not_held;
    if (s == "only_this_held") return LockState::only_this_held;
    if (s == "none_held") return LockState::none_held;
    return std::nullopt;
}

inline const char* to_string(LockMechanism m) {
    switch (m) {
        case LockMechanism::exclusive: return "exclusive";
        case LockMechanism::shared_read_section: return "shared_read_section";
        case LockMechanism::atomic_counter: return "atomic_counter";
    }
    return "";
}

inline std::optional<LockMechanism> lock_mechanism_from(std::string_view s) {
    if (s == "exclusive") return LockMechanism::exclusive;
    if (s == "shared_read_section") return LockMechanism::shared_read_section;
    if (s == "atomic_counter") return LockMechanism::atomic_counter;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Parsing

inline Signature parse_signature(const std::string& text, int line = 0) {
    Signature sig;
    auto lparen = text.find('(');
    auto rparen = text.rfind(')');
    if (lparen == std::string::npos || rparen == std::string::npos || rparen < lparen)
        throw SyntaxError(line, "signature 'name(params) -> type'");
    sig.name = detail::trim(text.substr(0, lparen));
    if (!detail::is_identifier(sig.name))
        throw SyntaxError(line, "identifier before '(' in signature");
    std::string params = detail::trim(text.substr(lparen + 1, rparen - lparen - 1));
    if (!params.empty()) {
        for (const auto& part : detail::split(params, ',')) {
            auto colon = part.find(':');
            if (colon == std::string::npos)
                throw SyntaxError(line, "'name: type' parameter");
            Param p{detail::trim(part.substr(0, colon)),
                    detail::normalize_ws(part.substr(colon + 1))};
            if (!detail::is_identifier(p.name) || p.type.empty())
                throw SyntaxError(line, "'name: type' parameter");
            sig.params.push_back(std::move(p));
        }
    }
    std::string tail = detail::trim(text.substr(rparen + 1));
    if (!detail::starts_with(tail, "->"))
        throw SyntaxError(line, "'->' return type in signature");
    sig.return_type = detail::normalize_ws(tail.substr(2));
    if (sig.return_type.empty())
        throw SyntaxError(line, "return type after '->'");
    return sig;
}

inline Predicate parse_predicate(const std::string& text) {
    Predicate p;
    auto bar = text.rfind(" | tag=");
    if (bar != std::string::npos) {
        auto tag = pred_tag_from(detail::trim(text.substr(bar + 7)));
        if (tag) {
            p.text = detail::trim(text.substr(0, bar));
            p.tag = *tag;
            return p;
        }
    }
    p.text = detail::trim(text);
    return p;
}

namespace detail {

class SpecParser {
  public:
    explicit SpecParser(const std::string& source) : lines_(split_lines(source)) {}

    SpecDocument parse() {
        SpecDocument doc;
        skip_blank();
        if (!eof() && starts_with(cur(), "[VERSION]")) {
            doc.version_id = trim(cur().substr(9));
            advance();
        }
        skip_blank();
        while (!eof()) {
            if (!starts_with(cur(), "[MODULE]"))
                throw SyntaxError(lineno(), "[MODULE] header");
            ModuleSpec mod = parse_module();
            for (const auto& m : doc.modules)
                if (m.name == mod.name) throw DuplicateModuleError(mod.name);
            doc.modules.push_back(std::move(mod));
            skip_blank();
        }
        return doc;
    }

  private:
    std::vector<std::string> lines_;
    size_t pos_ = 0;

    bool eof() const { return pos_ >= lines_.size(); }
    int lineno() const { return static_cast<int>(pos_) + 1; }
    const std::string& raw() const { return lines_[pos_]; }
    std::string cur() const { return trim(lines_[pos_]); }
    void advance() { ++pos_; }

    void skip_blank() {
        while (!eof()) {
            std::string t = cur();
            if (t.empty() || t[0] == '#') advance();
            else break;
        }
    }

    // Keyword line "Key: value"; returns value if the current line matches.
    std::optional<std::string> keyword(const char* key) {
        std::string t = cur();
        std::string prefix = std::string(key) + ":";
        if (!starts_with(t, prefix)) return std::nullopt;
        return trim(t.substr(prefix.size()));
    }

    ModuleSpec parse_module() {
        ModuleSpec mod;
        {
            std::string head = trim(cur().substr(8));
            auto parts = split(head, ' ');
            std::vector<std::string> tokens;
            for (auto& p : parts)
                if (!trim(p).empty()) tokens.push_back(trim(p));
            if (tokens.empty() || !is_identifier(tokens[0]))
                throw SyntaxError(lineno(), "module name");
            mod.name = tokens[0];
            for (size_t i = 1; i < tokens.size(); ++i) {
                if (starts_with(tokens[i], "level=")) {
                    mod.level = std::atoi(tokens[i].c_str() + 6);
                    if (mod.level < 1 || mod.level > 3)
                        throw SyntaxError(lineno(), "level in {1,2,3}");
                } else if (starts_with(tokens[i], "loc_budget=")) {
                    mod.loc_budget = std::atoi(tokens[i].c_str() + 11);
                    if (mod.loc_budget <= 0)
                        throw SyntaxError(lineno(), "positive loc_budget");
                } else {
                    throw SyntaxError(lineno(), "level= or loc_budget=");
                }
            }
            advance();
        }
        skip_blank();
        if (at_section("[RELY]")) parse_rely(mod.rely);
        if (at_section("[GUARANTEE]")) parse_guarantee(mod.guarantee);
        if (at_section("[TYPES]")) parse_types(mod.local_types);
        if (at_section("[INVARIANTS]")) parse_invariants(mod.module_invariants);
        while (at_section_keep("[SPEC]")) mod.functions.push_back(parse_spec_block());
        while (at_section_keep("[CONCURRENCY]")) parse_concurrency(mod);
        return mod;
    }

    bool at_section(const char* header) {
        skip_blank();
        if (eof() || !starts_with(cur(), header)) return false;
        advance();
        return true;
    }

    bool at_section_keep(const char* header) {
        skip_blank();
        return !eof() && starts_with(cur(), header);
    }

    bool at_any_header() {
        if (eof()) return false;
        std::string t = cur();
        return !t.empty() && t[0] == '[';
    }

    void parse_rely(RelyClause& rely) {
        skip_blank();
        while (!eof() && !at_any_header()) {
            std::string t = cur();
            if (starts_with(t, "type ")) {
                rely.imported_types.push_back(parse_type_decl(t));
            } else if (starts_with(t, "func ")) {
                rely.imported_functions.push_back(parse_signature(t.substr(5), lineno()));
            } else if (starts_with(t, "lockproto ")) {
                std::string name = trim(t.substr(10));
                if (!is_identifier(name)) throw SyntaxError(lineno(), "lock protocol name");
                rely.imported_lock_protocols.push_back(name);
            } else {
                throw SyntaxError(lineno(), "type/func/lockproto entry in [RELY]");
            }
            advance();
            skip_blank();
        }
    }

    void parse_guarantee(GuaranteeClause& g) {
        skip_blank();
        while (!eof() && !at_any_header()) {
            std::string t = cur();
            if (starts_with(t, "func ")) {
                g.exported_functions.push_back(parse_signature(t.substr(5), lineno()));
            } else if (starts_with(t, "type ")) {
                g.exported_types.push_back(parse_type_decl(t));
            } else {
                throw SyntaxError(lineno(), "func/type entry in [GUARANTEE]");
            }
            advance();
            skip_blank();
        }
    }

    void parse_types(std::vector<TypeDecl>& out) {
        skip_blank();
        while (!eof() && !at_any_header()) {
            std::string t = cur();
            if (!starts_with(t, "type ")) throw SyntaxError(lineno(), "type entry in [TYPES]");
            out.push_back(parse_type_decl(t));
            advance();
            skip_blank();
        }
    }

    void parse_invariants(std::vector<Predicate>& out) {
        skip_blank();
        while (!eof() && !at_any_header()) {
            out.push_back(parse_predicate(cur()));
            advance();
            skip_blank();
        }
    }

    TypeDecl parse_type_decl(const std::string& t) {
        auto colon = t.find(':');
        if (colon == std::string::npos) throw SyntaxError(lineno(), "'type name: definition'");
        TypeDecl d{trim(t.substr(5, colon - 5)), trim(t.substr(colon + 1))};
        if (!is_identifier(d.name)) throw SyntaxError(lineno(), "type name identifier");
        return d;
    }

    FunctionSpec parse_spec_block() {
        FunctionSpec fn;
        fn.signature = parse_signature(trim(cur().substr(6)), lineno());
        advance();
        skip_blank();
        while (!eof() && !at_any_header()) {
            if (auto v = keyword("Pre-condition")) {
                fn.pre.push_back(parse_predicate(*v));
                advance();
            } else if (auto pc = keyword("Post-condition")) {
                advance();
                parse_post_cases(fn.post);
            } else if (auto inv = keyword("Invariant")) {
                fn.invariants.push_back(parse_predicate(*inv));
                advance();
            } else if (auto alg = keyword("Algorithm")) {
                advance();
                parse_algorithm(fn.algorithm);
            } else if (auto in = keyword("Intent")) {
                fn.intent = *in;
                advance();
            } else {
                throw SyntaxError(lineno(), "Pre-condition/Post-condition/Invariant/Algorithm/Intent");
            }
            skip_blank();
        }
        return fn;
    }

    void parse_post_cases(std::vector<PostCase>& out) {
        skip_blank();
        while (!eof() && !at_any_header()) {
            std::string t = cur();
            if (!starts_with(t, "Case ")) break;
            auto colon = t.find(':');
            if (colon == std::string::npos) throw SyntaxError(lineno(), "'Case N: condition'");
            PostCase pc;
            pc.label = trim(t.substr(0, colon));
            pc.condition = trim(t.substr(colon + 1));
            advance();
            skip_blank();
            while (!eof() && !at_any_header()) {
                std::string u = cur();
                if (starts_with(u, "- ")) {
                    pc.outcomes.push_back(trim(u.substr(2)));
                    advance();
                } else if (starts_with(u, "Return:")) {
                    pc.return_contract = trim(u.substr(7));
                    advance();
                    break;
                } else {
                    break;
                }
                skip_blank();
            }
            out.push_back(std::move(pc));
            skip_blank();
        }
    }

    void parse_algorithm(std::vector<std::string>& out) {
        skip_blank();
        while (!eof() && !at_any_header()) {
            std::string t = cur();
            size_t i = 0;
            while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
            if (i == 0 || i >= t.size() || t[i] != '.') break;
            out.push_back(trim(t.substr(i + 1)));
            advance();
            skip_blank();
        }
    }

    void parse_concurrency(ModuleSpec& mod) {
        std::string fname = trim(cur().substr(13));
        if (!is_identifier(fname)) throw SyntaxError(lineno(), "function name after [CONCURRENCY]");
        FunctionSpec* fn = nullptr;
        for (auto& f : mod.functions)
            if (f.signature.name == fname) fn = &f;
        if (!fn) throw SyntaxError(lineno(), "[CONCURRENCY] for a declared [SPEC] function");
        advance();
        ConcurrencySpec cs;
        skip_blank();
        while (!eof() && !at_any_header()) {
            if (auto m = keyword("Mechanisms")) {
                std::set<LockMechanism> mechs;
                for (const auto& part : split(*m, ',')) {
                    auto mech = lock_mechanism_from(trim(part));
                    if (!mech) throw SyntaxError(lineno(), "known lock mechanism");
                    mechs.insert(*mech);
                }
                cs.mechanisms.assign(mechs.begin(), mechs.end());
                advance();
            } else if (auto pre = keyword("Lock-pre")) {
                cs.lock_pre = parse_assertions(*pre);
                advance();
            } else if (auto post = keyword("Lock-post")) {
                auto arrow = post->find("=>");
                if (arrow == std::string::npos)
                    throw SyntaxError(lineno(), "'condition => assertions'");
                LockPostRule rule;
                rule.condition = trim(post->substr(0, arrow));
                rule.asserts = parse_assertions(post->substr(arrow + 2));
                cs.lock_post.push_back(std::move(rule));
                advance();
            } else {
                throw SyntaxError(lineno(), "Mechanisms/Lock-pre/Lock-post");
            }
            skip_blank();
        }
        fn->concurrency = std::move(cs);
    }

    std::vector<LockAssertion> parse_assertions(const std::string& text) {
        std::vector<LockAssertion> out;
        for (const auto& part : split(text, ',')) {
            std::string t = trim(part);
            if (t.empty()) throw SyntaxError(lineno(), "lock assertion");
            auto space = t.find(' ');
            std::string word = space == std::string::npos ? t : t.substr(0, space);
            auto state = lock_state_from(word);
            if (!state) throw SyntaxError(lineno(), "lock state keyword");
            LockAssertion a;
            a.state = *state;
            if (space != std::string::npos) a.subject = trim(t.substr(space + 1));
            if (a.state != LockState::none_held && a.subject.empty())
                throw SyntaxError(lineno(), "lock subject");
            if (a.state == LockState::none_held && !a.subject.empty())
                throw SyntaxError(lineno(), "none_held takes no subject");
            out.push_back(std::move(a));
        }
        return out;
    }
};

}  // namespace detail

inline SpecDocument parse_spec(const std::string& source) {
    return detail::SpecParser(source).parse();
}

// ---------------------------------------------------------------------------
// Serialization (canonical; sections omitted when empty)

namespace detail {

inline void serialize_predicate(std::ostream& os, const Predicate& p) {
    os << p.text;
    if (p.tag != PredTag::none) os << " | tag=" << to_string(p.tag);
}

}  // namespace detail

inline std::string serialize_module(const ModuleSpec& mod) {
    std::ostringstream os;
    os << "[MODULE] " << mod.name << " level=" << mod.level
       << " loc_budget=" << mod.loc_budget << "\n";
    if (!mod.rely.empty()) {
        os << "\n[RELY]\n";
        for (const auto& t : mod.rely.imported_types)
            os << "type " << t.name << ": " << t.definition << "\n";
        for (const auto& f : mod.rely.imported_functions)
            os << "func " << sig_to_string(f) << "\n";
        for (const auto& l : mod.rely.imported_lock_protocols)
            os << "lockproto " << l << "\n";
    }
    if (!mod.guarantee.empty()) {
        os << "\n[GUARANTEE]\n";
        for (const auto& f : mod.guarantee.exported_functions)
            os << "func " << sig_to_string(f) << "\n";
        for (const auto& t : mod.guarantee.exported_types)
            os << "type " << t.name << ": " << t.definition << "\n";
    }
    if (!mod.local_types.empty()) {
        os << "\n[TYPES]\n";
        for (const auto& t : mod.local_types)
            os << "type " << t.name << ": " << t.definition << "\n";
    }
    if (!mod.module_invariants.empty()) {
        os << "\n[INVARIANTS]\n";
        for (const auto& p : mod.module_invariants) {
            detail::serialize_predicate(os, p);
            os << "\n";
        }
    }
    for (const auto& fn : mod.functions) {
        os << "\n[SPEC] " << sig_to_string(fn.signature) << "\n";
        for (const auto& p : fn.pre) {
            os << "Pre-condition: ";
            detail::serialize_predicate(os, p);
            os << "\n";
        }
        if (!fn.post.empty()) {
            os << "Post-condition:\n";
            for (const auto& pc : fn.post) {
                os << pc.label << ": " << pc.condition << "\n";
                for (const auto& o : pc.outcomes) os << "  - " << o << "\n";
                if (!pc.return_contract.empty()) os << "  Return: " << pc.return_contract << "\n";
            }
        }
        for (const auto& p : fn.invariants) {
            os << "Invariant: ";
            detail::serialize_predicate(os, p);
            os << "\n";
        }
        if (!fn.algorithm.empty()) {
            os << "Algorithm:\n";
            for (size_t i = 0; i < fn.algorithm.size(); ++i)
                os << "  " << (i + 1) << ". " << fn.algorithm[i] << "\n";
        }
        if (!fn.intent.empty()) os << "Intent: " << fn.intent << "\n";
    }
    for (const auto& fn : mod.functions) {
        if (!fn.concurrency) continue;
        const auto& cs = *fn.concurrency;
        os << "\n[CONCURRENCY] " << fn.signature.name << "\n";
        if (!cs.mechanisms.empty()) {
            os << "Mechanisms: ";
            for (size_t i = 0; i < cs.mechanisms.size(); ++i) {
                if (i) os << ", ";
                os << to_string(cs.mechanisms[i]);
            }
            os << "\n";
        }
        auto emit_asserts = [&](const std::vector<LockAssertion>& as) {
            for (size_t i = 0; i < as.size(); ++i) {
                if (i) os << ", ";
                os << to_string(as[i].state);
                if (!as[i].subject.empty()) os << " " << as[i].subject;
            }
        };
        if (!cs.lock_pre.empty()) {
            os << "Lock-pre: ";
            emit_asserts(cs.lock_pre);
            os << "\n";
        }
        for (const auto& rule : cs.lock_post) {
            os << "Lock-post: " << rule.condition << " => ";
            emit_asserts(rule.asserts);
            os << "\n";
        }
    }
    return os.str();
}

inline std::string serialize_spec(const SpecDocument& doc) {
    std::ostringstream os;
    if (!doc.version_id.empty()) os << "[VERSION] " << doc.version_id << "\n\n";
    for (size_t i = 0; i < doc.modules.size(); ++i) {
        if (i) os << "\n";
        os << serialize_module(doc.modules[i]);
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Well-formedness

namespace detail {

// Symbols referenced as calls: identifier immediately followed by '('.
inline std::vector<std::string> called_symbols(const std::string& text) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        if (std::isalpha(static_cast<unsigned char>(text[i])) || text[i] == '_') {
            size_t j = i;
            while (j < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
                ++j;
            if (j < text.size() && text[j] == '(') out.push_back(text.substr(i, j - i));
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

}  // namespace detail

inline std::vector<Diagnostic> check_wellformed(const SpecDocument& doc) {
    std::vector<Diagnostic> diags;
    auto diag = [&](const std::string& mod, const char* rule, std::string msg) {
        diags.push_back({mod, rule, std::move(msg)});
    };

    std::set<std::string> seen_modules;
    for (const auto& mod : doc.modules) {
        if (!seen_modules.insert(mod.name).second)
            diag(mod.name, rules::DUPLICATE_MODULE, "module name declared more than once");
    }

    for (const auto& mod : doc.modules) {
        // Rely: no duplicate imported names.
        std::set<std::string> imported;
        auto check_import = [&](const std::string& name) {
            if (!imported.insert(name).second)
                diag(mod.name, rules::DUPLICATE_IMPORT, "duplicate imported name '" + name + "'");
        };
        for (const auto& t : mod.rely.imported_types) check_import(t.name);
        for (const auto& f : mod.rely.imported_functions) check_import(f.name);
        // Lock protocols reference functions by name, so they get their own
        // namespace for the duplicate check.
        std::set<std::string> protos;
        for (const auto& l : mod.rely.imported_lock_protocols)
            if (!protos.insert(l).second)
                diag(mod.name, rules::DUPLICATE_IMPORT,
                     "duplicate imported lock protocol '" + l + "'");

        // Guarantee exports only declared functions.
        for (const auto& g : mod.guarantee.exported_functions) {
            const FunctionSpec* fn = mod.find_function(g.name);
            if (!fn || !sig_equal(fn->signature, g))
                diag(mod.name, rules::GUARANTEE_UNDECLARED_FUNCTION,
                     "exported function '" + g.name + "' has no matching [SPEC] declaration");
        }

        // Level escalation rules.
        bool any_intent = false, any_algorithm = false;
        for (const auto& fn : mod.functions) {
            if (!fn.intent.empty()) any_intent = true;
            if (!fn.algorithm.empty()) any_algorithm = true;
        }
        if (mod.level == 2 && !any_intent)
            diag(mod.name, rules::LEVEL2_NEEDS_INTENT,
                 "level-2 module has no function with an intent");
        if (mod.level == 3 && !any_algorithm)
            diag(mod.name, rules::LEVEL3_NEEDS_ALGORITHM,
                 "level-3 module has no function with an algorithm");

        // Resolvable names for call references.
        std::set<std::string> callable;
        for (const auto& f : mod.rely.imported_functions) callable.insert(f.name);
        for (const auto& f : mod.guarantee.exported_functions) callable.insert(f.name);
        for (const auto& f : mod.functions) callable.insert(f.signature.name);

        // Roots usable as lock-assertion subjects.
        std::set<std::string> lockable{"target", "ret", "result"};
        for (const auto& t : mod.rely.imported_types) lockable.insert(t.name);
        for (const auto& t : mod.guarantee.exported_types) lockable.insert(t.name);
        for (const auto& t : mod.local_types) lockable.insert(t.name);

        auto check_text = [&](const std::string& text) {
            for (const auto& sym : detail::called_symbols(text))
                if (!callable.count(sym))
                    diag(mod.name, rules::UNRESOLVED_SYMBOL,
                         "reference to undeclared function '" + sym + "'");
        };
        auto check_pred = [&](const Predicate& p) {
            if (p.text.empty())
                diag(mod.name, rules::EMPTY_PREDICATE, "predicate with empty text");
            check_text(p.text);
        };

        for (const auto& p : mod.module_invariants) check_pred(p);

        for (const auto& fn : mod.functions) {
            std::set<std::string> pnames;
            for (const auto& p : fn.signature.params)
                if (!pnames.insert(p.name).second)
                    diag(mod.name, rules::DUPLICATE_PARAM,
                         "duplicate parameter '" + p.name + "' in " + fn.signature.name);

            if (fn.post.empty())
                diag(mod.name, rules::NO_POSTCASE,
                     "function '" + fn.signature.name + "' has no post-condition case");
            std::set<std::string> labels;
            for (const auto& pc : fn.post)
                if (!labels.insert(pc.label).second)
                    diag(mod.name, rules::DUPLICATE_CASE_LABEL,
                         "duplicate '" + pc.label + "' in " + fn.signature.name);

            for (const auto& p : fn.pre) check_pred(p);
            for (const auto& p : fn.invariants) check_pred(p);
            for (const auto& pc : fn.post) {
                check_text(pc.condition);
                for (const auto& o : pc.outcomes) check_text(o);
                check_text(pc.return_contract);
            }
            for (const auto& step : fn.algorithm) check_text(step);

            if (fn.concurrency) {
                std::set<std::string> subjects = lockable;
                for (const auto& p : fn.signature.params) subjects.insert(p.name);
                auto check_asserts = [&](const std::vector<LockAssertion>& as) {
                    bool has_none = false, has_only = false;
                    for (const auto& a : as) {
                        if (a.state == LockState::none_held) has_none = true;
                        if (a.state == LockState::only_this_held) has_only = true;
                        if (!a.subject.empty()) {
                            std::string root = a.subject.substr(0, a.subject.find('.'));
                            if (!subjects.count(root))
                                diag(mod.name, rules::UNRESOLVED_LOCK,
                                     "lock subject '" + a.subject + "' does not resolve in " +
                                         fn.signature.name);
                        }
                    }
                    if (has_none && has_only)
                        diag(mod.name, rules::LOCK_STATE_CONFLICT,
                             "none_held and only_this_held in one assertion list of " +
                                 fn.signature.name);
                };
                check_asserts(fn.concurrency->lock_pre);
                for (const auto& rule : fn.concurrency->lock_post) check_asserts(rule.asserts);
            }
        }
    }
    return diags;
}

// ---------------------------------------------------------------------------
// Directory format: one .sysspec file per module, ordered by file name.

inline SpecDocument load_spec_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".sysspec")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string combined;
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) throw IoError("cannot read " + f.string());
        std::stringstream ss;
        ss << in.rdbuf();
        combined += ss.str();
        combined += "\n";
    }
    SpecDocument doc = parse_spec(combined);
    if (doc.version_id.empty()) doc.version_id = dir.filename().string();
    return doc;
}

inline void write_spec_dir(const SpecDocument& doc, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    int index = 0;
    for (const auto& mod : doc.modules) {
        char prefix[8];
        std::snprintf(prefix, sizeof prefix, "%03d_", index++);
        std::ofstream out(dir / (prefix + mod.name + ".sysspec"));
        if (!out) throw IoError("cannot write module file in " + dir.string());
        out << serialize_module(mod);
    }
}

}  // namespace sysspec

#pragma once

// Extracts LibraryFacts from a documented subset of Rust surface syntax, so
// desk-scale test crates can be written as real source instead of hand-built
// JSON. See docs/rust_subset.md for the supported grammar.

#include "tagaudit/facts.hpp"

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tagaudit::extract {

struct SourceUnit {
    std::string path;
    std::string content;
};

struct ExtractionDiagnostic {
    enum class Severity { Error, Warning };

    Severity severity = Severity::Warning;
    int line = 0;
    int col = 0;
    std::string message;
};

struct ExtractionResult {
    facts::LibraryFacts facts;
    std::vector<ExtractionDiagnostic> diagnostics;

    /// Error diagnostics imply the facts are empty.
    bool ok() const;
};

/// Parses the units and produces validated facts plus diagnostics. Call
/// expressions lexically inside `unsafe` blocks or `unsafe fn` bodies become
/// call sites; `/// SAFETY:` doc lines become tag annotations (`VERIFIES:` and
/// `KILLS:` lines feed the verified/kill sets).
ExtractionResult extract(const std::vector<SourceUnit>& units, std::string library_name = "");

/// Maps a type's surface syntax to a parameter class. The overload with
/// generic bounds resolves type parameters bounded by the allocator trait.
facts::ParamClass classify_param(std::string_view type_text);
facts::ParamClass classify_param(std::string_view type_text,
                                 const std::map<std::string, std::string>& generic_bounds);

}  // namespace tagaudit::extract

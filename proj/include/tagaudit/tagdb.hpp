#pragma once

// Machine-readable map from external API paths to their declared safety tags
// and signature classification. Stands in for the manual translation of
// library documentation into tags.

#include "tagaudit/facts.hpp"
#include "tagaudit/sp.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace tagaudit::tagdb {

struct TagDbEntry {
    std::string id;
    std::string name;  // last path segment
    std::vector<std::string> tag_strings;
    std::vector<facts::ParamClass> params;
    facts::RetClass ret;
    facts::ModuleClass module_class = facts::ModuleClass::Other;

    sp::TagSet tags;                  // coarse projection of tag_strings
    std::vector<sp::SpExpr> parsed;   // parsed expressions, for structural checks
};

class TagDatabase {
  public:
    /// Entries for the standard-library APIs the bundled fixtures rely on.
    static const TagDatabase& builtin();

    /// Parses a database document: JSON object keyed by API path, values
    /// {tags: [SP strings], params: [classes], ret: class, module_class}.
    /// Later entries win over existing ones.
    void merge_json(const std::string& text, const sp::TagRegistry& reg);

    void add(TagDbEntry entry, const sp::TagRegistry& reg);

    const TagDbEntry* find(const std::string& id) const;
    std::set<std::string> ids() const;
    std::size_t size() const { return entries_.size(); }

  private:
    std::map<std::string, TagDbEntry> entries_;
};

}  // namespace tagaudit::tagdb

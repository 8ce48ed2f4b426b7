#include "tagaudit/tagdb.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

namespace tagaudit::tagdb {

using facts::ModuleClass;
using facts::ParamClass;
using facts::RetClass;
using facts::RetKind;

void TagDatabase::add(TagDbEntry entry, const sp::TagRegistry& reg) {
    if (entry.name.empty()) {
        auto pos = entry.id.rfind("::");
        entry.name = pos == std::string::npos ? entry.id : entry.id.substr(pos + 2);
    }
    entry.tags = sp::TagSet{};
    entry.parsed.clear();
    for (const auto& text : entry.tag_strings) {
        for (const auto& e : sp::parse_sp_list(text)) {
            entry.tags.unite(sp::coarse(e, reg));
            entry.parsed.push_back(e);
        }
    }
    entries_[entry.id] = std::move(entry);
}

const TagDbEntry* TagDatabase::find(const std::string& id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

std::set<std::string> TagDatabase::ids() const {
    std::set<std::string> out;
    for (const auto& [id, _] : entries_) out.insert(id);
    return out;
}

namespace {

ParamClass param_class_from(const std::string& name) {
    if (name == "raw_pointer") return ParamClass::RawPointer;
    if (name == "non_null_pointer") return ParamClass::NonNullPointer;
    if (name == "reference") return ParamClass::Reference;
    if (name == "mutable_reference") return ParamClass::MutableReference;
    if (name == "owned_object") return ParamClass::OwnedObject;
    if (name == "allocator") return ParamClass::Allocator;
    if (name == "integer") return ParamClass::Integer;
    if (name == "other") return ParamClass::Other;
    throw SchemaError("unknown param class '" + name + "' in tag database");
}

RetKind ret_kind_from(const std::string& name) {
    if (name == "owned_object") return RetKind::OwnedObject;
    if (name == "reference") return RetKind::Reference;
    if (name == "option_wrapped") return RetKind::OptionWrapped;
    if (name == "unit") return RetKind::Unit;
    if (name == "other") return RetKind::Other;
    throw SchemaError("unknown return class '" + name + "' in tag database");
}

ModuleClass module_class_from(const std::string& name) {
    if (name == "integer") return ModuleClass::Integer;
    if (name == "str") return ModuleClass::Str;
    if (name == "slice") return ModuleClass::Slice;
    if (name == "other") return ModuleClass::Other;
    throw SchemaError("unknown module class '" + name + "' in tag database");
}

struct BuiltinRow {
    const char* id;
    std::vector<const char*> tags;
    std::vector<ParamClass> params;
    RetKind ret;
    ModuleClass module_class;
};

// Reference translations for the standard-library APIs exercised by the
// bundled fixtures: raw-pointer constructors, raw-parts slices, unchecked
// families, pointer read/write, and the well-known hazard examples.
const std::vector<BuiltinRow>& builtin_rows() {
    using PC = ParamClass;
    using RK = RetKind;
    using MC = ModuleClass;
    static const std::vector<BuiltinRow> rows = {
        {"slice::from_raw_parts",
         {"Align(data, T)", "Init(data, T, len)", "Alias(data, 0)",
          "ValidNum(add(data, mul(sizeof(T), len)), (0, isize::MAX])"},
         {PC::RawPointer, PC::Integer},
         RK::Reference,
         MC::Slice},
        {"slice::from_raw_parts_mut",
         {"Align(data, T)", "Init(data, T, len)", "Alias(data, 0)",
          "ValidNum(add(data, mul(sizeof(T), len)), (0, isize::MAX])"},
         {PC::RawPointer, PC::Integer},
         RK::Reference,
         MC::Slice},
        {"slice::get_unchecked",
         {"InBound(self, T, index)"},
         {PC::Reference, PC::Integer},
         RK::Reference,
         MC::Slice},
        {"slice::get_unchecked_mut",
         {"InBound(self, T, index)"},
         {PC::MutableReference, PC::Integer},
         RK::Reference,
         MC::Slice},
        {"ptr::offset",
         {"ValidNum(mul(count, sizeof(T)), [isize::MIN, isize::MAX])", "Deref(self, T, count)"},
         {PC::RawPointer, PC::Integer},
         RK::Other,
         MC::Other},
        {"ptr::add",
         {"ValidNum(mul(count, sizeof(T)), [0, isize::MAX])", "Deref(self, T, count)"},
         {PC::RawPointer, PC::Integer},
         RK::Other,
         MC::Other},
        {"builtin::deref",
         {"Align(p, T)", "Deref(p, T, 1)", "Init(p, T, 1)"},
         {PC::RawPointer},
         RK::Other,
         MC::Other},
        {"ptr::read",
         {"ValidPtr(src, T, 1)", "Align(src, T)", "Init(src, T, 1)"},
         {PC::RawPointer},
         RK::Other,
         MC::Other},
        {"ptr::read_unaligned",
         {"ValidPtr(src, T, 1)", "Init(src, T, 1)"},
         {PC::RawPointer},
         RK::Other,
         MC::Other},
        {"ptr::write",
         {"ValidPtr(dst, T, 1)", "Align(dst, T)"},
         {PC::RawPointer, PC::Other},
         RK::Unit,
         MC::Other},
        {"ptr::write_unaligned",
         {"ValidPtr(dst, T, 1)"},
         {PC::RawPointer, PC::Other},
         RK::Unit,
         MC::Other},
        {"ptr::copy",
         {"ValidPtr(src, T, count)", "ValidPtr(dst, T, count)", "Align(src, T)", "Align(dst, T)",
          "!Init(dst, T, count)@hazard"},
         {PC::RawPointer, PC::RawPointer, PC::Integer},
         RK::Unit,
         MC::Other},
        {"intrinsics::copy_nonoverlapping",
         {"ValidPtr(src, T, count)", "ValidPtr(dst, T, count)", "!Overlap(dst, src, count, T)",
          "Align(src, T)", "Align(dst, T)"},
         {PC::RawPointer, PC::RawPointer, PC::Integer},
         RK::Unit,
         MC::Other},
        {"intrinsics::read_via_copy",
         {"ValidPtr(src, T, 1)", "Init(src, T, 1)"},
         {PC::RawPointer},
         RK::Other,
         MC::Other},
        {"intrinsics::write_via_move",
         {"ValidPtr(dst, T, 1)"},
         {PC::RawPointer, PC::Other},
         RK::Unit,
         MC::Other},
        {"intrinsics::unreachable",
         {"!Reachable()"},
         {},
         RK::Other,
         MC::Other},
        {"Box::from_raw",
         {"Align(raw, T)", "Allocated(raw, T, 1, Global)", "InBound(raw, T, 1)", "Owning(raw)",
          "Alias(raw, 0)", "Allocator(raw, Global)"},
         {PC::RawPointer},
         RK::OwnedObject,
         MC::Other},
        {"Box::from_raw_in",
         {"Align(raw, T)", "Allocated(raw, T, 1, alloc)", "InBound(raw, T, 1)", "Owning(raw)",
          "Alias(raw, 0)", "Allocator(raw, alloc)"},
         {PC::RawPointer, PC::Allocator},
         RK::OwnedObject,
         MC::Other},
        {"Box::from_non_null",
         {"Align(ptr, T)", "Allocated(ptr, T, 1, Global)", "InBound(ptr, T, 1)", "Owning(ptr)",
          "Alias(ptr, 0)", "Allocator(ptr, Global)"},
         {PC::NonNullPointer},
         RK::OwnedObject,
         MC::Other},
        {"Box::from_non_null_in",
         {"Align(ptr, T)", "Allocated(ptr, T, 1, alloc)", "InBound(ptr, T, 1)", "Owning(ptr)",
          "Alias(ptr, 0)", "Allocator(ptr, alloc)"},
         {PC::NonNullPointer, PC::Allocator},
         RK::OwnedObject,
         MC::Other},
        {"Box::assume_init",
         {"Init(self, T, 1)"},
         {PC::OwnedObject},
         RK::OwnedObject,
         MC::Other},
        {"Rc::from_raw",
         {"Align(ptr, T)", "Allocated(ptr, T, 1, Global)", "InBound(ptr, T, 1)", "Owning(ptr)",
          "Alias(ptr, 0)", "Allocator(ptr, Global)", "Typed(ptr, T)"},
         {PC::RawPointer},
         RK::OwnedObject,
         MC::Other},
        {"Rc::increment_strong_count",
         {"Typed(ptr, T)", "Alive(ptr, l)", "Allocator(ptr, Global)", "Align(ptr, T)",
          "ValidNum(add(strong, 1), (0, isize::MAX])"},
         {PC::RawPointer},
         RK::Unit,
         MC::Other},
        {"Rc::decrement_strong_count",
         {"Typed(ptr, T)", "Alive(ptr, l)", "Allocator(ptr, Global)", "Align(ptr, T)",
          "ValidNum(sub(strong, 1), [0, isize::MAX])"},
         {PC::RawPointer},
         RK::Unit,
         MC::Other},
        {"Arc::from_raw",
         {"Align(ptr, T)", "Allocated(ptr, T, 1, Global)", "InBound(ptr, T, 1)", "Owning(ptr)",
          "Alias(ptr, 0)", "Allocator(ptr, Global)", "Typed(ptr, T)"},
         {PC::RawPointer},
         RK::OwnedObject,
         MC::Other},
        {"Arc::increment_strong_count",
         {"Typed(ptr, T)", "Alive(ptr, l)", "Allocator(ptr, Global)", "Align(ptr, T)",
          "ValidNum(add(strong, 1), (0, isize::MAX])"},
         {PC::RawPointer},
         RK::Unit,
         MC::Other},
        {"Arc::decrement_strong_count",
         {"Typed(ptr, T)", "Alive(ptr, l)", "Allocator(ptr, Global)", "Align(ptr, T)",
          "ValidNum(sub(strong, 1), [0, isize::MAX])"},
         {PC::RawPointer},
         RK::Unit,
         MC::Other},
        {"CString::from_raw",
         {"ValidCStr(ptr, any)", "Allocated(ptr, u8, any, Global)", "Owning(ptr)", "Alias(ptr, 0)"},
         {PC::RawPointer},
         RK::OwnedObject,
         MC::Other},
        {"CStr::from_ptr",
         {"ValidCStr(ptr, any)", "Allocated(ptr, u8, any, any)", "Alive(ptr, l)"},
         {PC::RawPointer},
         RK::Reference,
         MC::Other},
        {"str::from_utf8_unchecked",
         {"ValidString(v)"},
         {PC::Reference},
         RK::Reference,
         MC::Str},
        {"str::from_utf8_unchecked_mut",
         {"ValidString(v)"},
         {PC::MutableReference},
         RK::Reference,
         MC::Str},
        {"str::from_boxed_utf8_unchecked",
         {"ValidString(v)"},
         {PC::OwnedObject},
         RK::OwnedObject,
         MC::Str},
        {"String::from_utf8_unchecked",
         {"ValidString(bytes)"},
         {PC::OwnedObject},
         RK::OwnedObject,
         MC::Str},
        {"NonNull::new_unchecked",
         {"!Null(ptr)"},
         {PC::RawPointer},
         RK::OwnedObject,
         MC::Other},
        {"Unique::new_unchecked",
         {"!Null(ptr)"},
         {PC::RawPointer},
         RK::OwnedObject,
         MC::Other},
        {"MaybeUninit::assume_init",
         {"Init(self, T, 1)"},
         {PC::OwnedObject},
         RK::Other,
         MC::Other},
        {"Option::unwrap_unchecked",
         {"Unwrap(self, Some(T))"},
         {PC::OwnedObject},
         RK::Other,
         MC::Other},
        {"Result::unwrap_unchecked",
         {"Unwrap(self, Ok(T))"},
         {PC::OwnedObject},
         RK::Other,
         MC::Other},
        {"Vec::set_len",
         {"ValidNum(new_len, [0, capacity])", "Init(self.ptr, T, new_len)"},
         {PC::Integer},
         RK::Unit,
         MC::Other},
        {"Pin::new_unchecked",
         {"Pinned(pointer)", "Trait(P, Unpin)@option"},
         {PC::OwnedObject},
         RK::OwnedObject,
         MC::Other},
        {"UdpSocket::from_raw_socket",
         {"Opened(sock)"},
         {PC::Other},
         RK::OwnedObject,
         MC::Other},
        {"mem::transmute",
         {"Typed(src, U)", "Size(T, sizeof(U))"},
         {PC::Other},
         RK::Other,
         MC::Other},
    };
    return rows;
}

TagDatabase make_builtin() {
    TagDatabase db;
    const auto& reg = sp::TagRegistry::builtin();
    for (const auto& row : builtin_rows()) {
        TagDbEntry e;
        e.id = row.id;
        for (const char* t : row.tags) e.tag_strings.emplace_back(t);
        e.params = row.params;
        e.ret.kind = row.ret;
        e.module_class = row.module_class;
        db.add(std::move(e), reg);
    }
    return db;
}

}  // namespace

const TagDatabase& TagDatabase::builtin() {
    static const TagDatabase db = make_builtin();
    return db;
}

void TagDatabase::merge_json(const std::string& text, const sp::TagRegistry& reg) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("tag database is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw SchemaError("tag database document must be a JSON object");
    for (const auto& [id, value] : doc.items()) {
        TagDbEntry e;
        e.id = id;
        for (const auto& t : value.value("tags", nlohmann::json::array()))
            e.tag_strings.push_back(t.get<std::string>());
        for (const auto& p : value.value("params", nlohmann::json::array()))
            e.params.push_back(param_class_from(p.get<std::string>()));
        e.ret.kind = ret_kind_from(value.value("ret", "other"));
        e.module_class = module_class_from(value.value("module_class", "other"));
        add(std::move(e), reg);
    }
}

}  // namespace tagaudit::tagdb

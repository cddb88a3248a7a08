#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "clir/common.hpp"
#include "clir/text.hpp"

namespace clir {

enum class Lang { ha, so, sw, yo, en };

inline constexpr Lang kAllLangs[] = {Lang::ha, Lang::so, Lang::sw, Lang::yo, Lang::en};

inline const char* lang_code(Lang l) {
    switch (l) {
        case Lang::ha: return "ha";
        case Lang::so: return "so";
        case Lang::sw: return "sw";
        case Lang::yo: return "yo";
        case Lang::en: return "en";
    }
    return "en";
}

inline std::optional<Lang> parse_lang(std::string_view s) {
    for (Lang l : kAllLangs)
        if (s == lang_code(l)) return l;
    return std::nullopt;
}

struct Document {
    std::string docid;
    std::string text;
    Lang lang = Lang::en;
};

/// Ordered document store with docid -> ordinal lookup. Immutable once loaded,
/// so concurrent readers are safe.
class Collection {
  public:
    void add(Document doc) {
        if (doc.docid.empty()) throw DataError("empty docid");
        auto [it, fresh] = ordinals_.emplace(doc.docid, int32_t(docs_.size()));
        if (!fresh) throw DataError("duplicate docid \"" + doc.docid + "\"");
        docs_.push_back(std::move(doc));
    }

    size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }
    const Document& operator[](size_t ordinal) const { return docs_[ordinal]; }

    std::optional<int32_t> lookup(const std::string& docid) const {
        auto it = ordinals_.find(docid);
        if (it == ordinals_.end()) return std::nullopt;
        return it->second;
    }

    const Document& by_docid(const std::string& docid) const {
        auto ord = lookup(docid);
        if (!ord) throw DataError("unknown docid \"" + docid + "\"");
        return docs_[size_t(*ord)];
    }

    auto begin() const { return docs_.begin(); }
    auto end() const { return docs_.end(); }

  private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, int32_t> ordinals_;
};

// ---------------------------------------------------------------------------
// JSONL corpus format: one {"docid","text","lang"} record per line, UTF-8.
// ---------------------------------------------------------------------------

inline Collection load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path.string());
    Collection coll;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string where = path.filename().string() + " line " + std::to_string(lineno);
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": invalid JSON: " + e.what());
        }
        if (!rec.is_object()) throw DataError(where + ": record is not an object");
        for (const char* field : {"docid", "text", "lang"}) {
            if (!rec.contains(field) || !rec[field].is_string())
                throw DataError(where + ": missing string field \"" + field + "\"");
        }
        auto lang = parse_lang(rec["lang"].get<std::string>());
        if (!lang)
            throw DataError(where + ": unknown lang \"" + rec["lang"].get<std::string>() +
                            "\" (expected one of ha, so, sw, yo, en)");
        Document doc{rec["docid"].get<std::string>(), rec["text"].get<std::string>(), *lang};
        try {
            coll.add(std::move(doc));
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return coll;
}

inline void save_jsonl(const Collection& coll, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write corpus file: " + path.string());
    for (const Document& doc : coll) {
        nlohmann::json rec{{"docid", doc.docid}, {"lang", lang_code(doc.lang)}, {"text", doc.text}};
        out << rec.dump() << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace clir

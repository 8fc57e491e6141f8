#include "mlkg/corpus.hpp"

#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "mlkg/util.hpp"

namespace mlkg {

using nlohmann::json;

std::string normalize_text(std::string_view surface) {
    std::string out;
    out.reserve(surface.size());
    bool pending_space = false;
    for (unsigned char c : surface) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::string normalize_entity(std::string_view surface) {
    std::string out = normalize_text(surface);
    if (out.empty()) throw CorpusError("empty entity");
    return out;
}

std::vector<std::string> validate_bundle(const CorpusBundle& bundle) {
    std::vector<std::string> violations;

    std::unordered_map<std::string, std::size_t> doc_index;
    for (std::size_t i = 0; i < bundle.documents.size(); ++i) {
        const auto& d = bundle.documents[i];
        if (d.doc_id.empty()) violations.push_back("document #" + std::to_string(i) + ": empty doc_id");
        if (d.text.empty()) violations.push_back("document '" + d.doc_id + "': empty text");
        auto [it, inserted] = doc_index.emplace(d.doc_id, i);
        if (!inserted) {
            violations.push_back("duplicate doc_id '" + d.doc_id + "': documents #" +
                                 std::to_string(it->second) + " and #" + std::to_string(i));
        }
    }

    std::unordered_map<std::string, std::size_t> chunk_index;
    std::map<std::string, std::set<std::size_t>> positions;
    std::map<std::pair<std::string, std::size_t>, std::size_t> slot;
    for (std::size_t i = 0; i < bundle.chunks.size(); ++i) {
        const auto& c = bundle.chunks[i];
        if (c.chunk_id.empty()) violations.push_back("chunk #" + std::to_string(i) + ": empty chunk_id");
        auto [it, inserted] = chunk_index.emplace(c.chunk_id, i);
        if (!inserted) {
            violations.push_back("duplicate chunk_id '" + c.chunk_id + "': chunks #" +
                                 std::to_string(it->second) + " and #" + std::to_string(i));
        }
        if (!doc_index.contains(c.doc_id)) {
            violations.push_back("chunk '" + c.chunk_id + "' references missing document '" +
                                 c.doc_id + "'");
            continue;
        }
        auto [sit, fresh] = slot.emplace(std::make_pair(c.doc_id, c.position), i);
        if (!fresh) {
            violations.push_back("document '" + c.doc_id + "': chunks #" + std::to_string(sit->second) +
                                 " and #" + std::to_string(i) + " share position " +
                                 std::to_string(c.position));
        }
        positions[c.doc_id].insert(c.position);
    }
    for (const auto& d : bundle.documents) {
        auto it = positions.find(d.doc_id);
        if (it == positions.end()) {
            violations.push_back("document '" + d.doc_id + "' has no chunks");
            continue;
        }
        const auto& ps = it->second;
        if (*ps.rbegin() + 1 != ps.size()) {
            std::string listed;
            for (auto p : ps) listed += (listed.empty() ? "" : ",") + std::to_string(p);
            violations.push_back("document '" + d.doc_id +
                                 "': chunk positions are not contiguous from 0 (" + listed + ")");
        }
    }

    for (std::size_t i = 0; i < bundle.triples.size(); ++i) {
        const auto& t = bundle.triples[i];
        const std::string where = "triple #" + std::to_string(i);
        if (normalize_text(t.subject).empty()) violations.push_back(where + ": empty subject");
        if (normalize_text(t.object).empty()) violations.push_back(where + ": empty object");
        if (!doc_index.contains(t.doc_id)) {
            violations.push_back(where + " references missing document '" + t.doc_id + "'");
        }
        auto cit = chunk_index.find(t.chunk_id);
        if (cit == chunk_index.end()) {
            violations.push_back(where + " references missing chunk '" + t.chunk_id + "'");
        } else if (bundle.chunks[cit->second].doc_id != t.doc_id) {
            violations.push_back(where + ": chunk '" + t.chunk_id + "' belongs to document '" +
                                 bundle.chunks[cit->second].doc_id + "', not '" + t.doc_id + "'");
        }
    }
    return violations;
}

namespace {

std::string field(const json& obj, const char* name, std::size_t line) {
    auto it = obj.find(name);
    if (it == obj.end() || !it->is_string()) {
        throw CorpusError("line " + std::to_string(line) + ": missing string field '" + name + "'");
    }
    return it->get<std::string>();
}

}  // namespace

CorpusBundle parse_corpus_text(std::string_view text) {
    CorpusBundle bundle;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorpusError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
        }
        if (!obj.is_object()) throw CorpusError("line " + std::to_string(line_no) + ": not an object");
        const std::string kind = field(obj, "kind", line_no);
        if (kind == "document") {
            bundle.documents.push_back({field(obj, "doc_id", line_no), obj.value("title", std::string{}),
                                        field(obj, "text", line_no)});
        } else if (kind == "chunk") {
            auto pos = obj.find("position");
            if (pos == obj.end() || !pos->is_number_unsigned()) {
                throw CorpusError("line " + std::to_string(line_no) +
                                  ": chunk position must be a non-negative integer");
            }
            bundle.chunks.push_back({field(obj, "chunk_id", line_no), field(obj, "doc_id", line_no),
                                     pos->get<std::size_t>(), field(obj, "text", line_no)});
        } else if (kind == "triple") {
            bundle.triples.push_back({field(obj, "subject", line_no), field(obj, "predicate", line_no),
                                      field(obj, "object", line_no), field(obj, "chunk_id", line_no),
                                      field(obj, "doc_id", line_no)});
        } else if (kind == "entity" || kind == "edge") {
            // Graph dump records; ignored when reading a corpus.
            continue;
        } else {
            throw CorpusError("line " + std::to_string(line_no) + ": unknown kind '" + kind + "'");
        }
    }
    auto violations = validate_bundle(bundle);
    if (!violations.empty()) {
        std::string msg = "invalid corpus:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw CorpusError(msg);
    }
    return bundle;
}

CorpusBundle parse_corpus(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::runtime_error& e) {
        throw CorpusError(e.what());
    }
    return parse_corpus_text(text);
}

std::string serialize_corpus(const CorpusBundle& bundle) {
    std::string out;
    for (const auto& d : bundle.documents) {
        out += json{{"kind", "document"}, {"doc_id", d.doc_id}, {"title", d.title}, {"text", d.text}}.dump();
        out += '\n';
    }
    for (const auto& c : bundle.chunks) {
        out += json{{"kind", "chunk"},
                    {"chunk_id", c.chunk_id},
                    {"doc_id", c.doc_id},
                    {"position", c.position},
                    {"text", c.text}}
                   .dump();
        out += '\n';
    }
    for (const auto& t : bundle.triples) {
        out += json{{"kind", "triple"},       {"subject", t.subject},   {"predicate", t.predicate},
                    {"object", t.object},     {"chunk_id", t.chunk_id}, {"doc_id", t.doc_id}}
                   .dump();
        out += '\n';
    }
    return out;
}

}  // namespace mlkg

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "littab/errors.hpp"
#include "littab/text.hpp"

namespace littab {

using json = nlohmann::json;

// On-disk cells use "-" for a missing value; in memory a missing value is
// the empty string.
inline constexpr const char* kEmptyCellMarker = "-";

struct Paper {
    std::string id;
    std::string title;
    std::string abstract_text;
    std::string full_text;

    bool has_full_text() const { return !full_text.empty(); }

    // Text embedded for retrieval: title concatenated with abstract.
    std::string title_abstract() const { return title + " " + abstract_text; }
};

struct LiteratureTable {
    std::string table_id;
    std::vector<std::string> columns;
    // paper id -> column name -> cell value ("" = absent)
    std::map<std::string, std::map<std::string, std::string>> rows;
    std::string caption;
    std::string user_demand;

    std::size_t column_count() const { return columns.size(); }
    std::size_t row_count() const { return rows.size(); }

    std::vector<std::string> row_ids() const {
        std::vector<std::string> ids;
        ids.reserve(rows.size());
        for (const auto& [id, _] : rows) ids.push_back(id);
        return ids;
    }
};

struct BenchmarkInstance {
    LiteratureTable table;
    std::vector<std::string> relevant_ids;    // sorted; equal to the table's row keys
    std::vector<std::string> distractor_ids;  // sorted; disjoint from relevant_ids
    std::vector<std::string> candidate_ids;   // sorted union of the two sets

    std::size_t m() const { return relevant_ids.size(); }

    bool is_relevant(const std::string& id) const {
        return std::binary_search(relevant_ids.begin(), relevant_ids.end(), id);
    }
};

struct Corpus {
    std::vector<Paper> papers;
    std::vector<BenchmarkInstance> instances;
    std::vector<std::string> warnings;

    const Paper* find_paper(const std::string& id) const {
        auto it = index_.find(id);
        return it == index_.end() ? nullptr : &papers[it->second];
    }

    const Paper& paper(const std::string& id) const {
        const Paper* p = find_paper(id);
        if (!p) throw CorpusError("unknown paper id: " + id);
        return *p;
    }

    void rebuild_index() {
        index_.clear();
        for (std::size_t i = 0; i < papers.size(); ++i) index_[papers[i].id] = i;
    }

private:
    std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Loading and saving (JSONL, one record per line, UTF-8)

namespace detail {

inline std::string require_string(const json& j, const char* field, const std::string& where) {
    if (!j.contains(field) || !j[field].is_string())
        throw CorpusError(where + ": missing or non-string field '" + field + "'");
    return j[field].get<std::string>();
}

inline void validate_table(const LiteratureTable& t, const std::string& where) {
    if (t.columns.size() < 2) throw CorpusError(where + ": schema arity < 2");
    std::set<std::string> seen;
    for (const auto& c : t.columns) {
        const std::string norm = normalize_ws(c);
        if (norm.empty()) throw CorpusError(where + ": empty column name");
        if (!seen.insert(norm).second)
            throw CorpusError(where + ": duplicate column name '" + norm + "'");
    }
    for (const auto& [paper_id, cells] : t.rows) {
        for (const auto& [col, _] : cells) {
            if (std::find(t.columns.begin(), t.columns.end(), col) == t.columns.end())
                throw CorpusError(where + ": row '" + paper_id + "' references unknown column '" +
                                  col + "'");
        }
    }
}

}  // namespace detail

// Parses one papers.jsonl record.
inline Paper parse_paper_record(const json& j, const std::string& where) {
    Paper p;
    p.id = detail::require_string(j, "id", where);
    p.title = detail::require_string(j, "title", where);
    p.abstract_text = detail::require_string(j, "abstract", where);
    if (j.contains("full_text")) {
        if (!j["full_text"].is_string())
            throw CorpusError(where + ": non-string field 'full_text'");
        p.full_text = j["full_text"].get<std::string>();
    }
    if (p.id.empty()) throw CorpusError(where + ": empty paper id");
    if (p.title.empty()) throw CorpusError(where + ": empty title for paper '" + p.id + "'");
    if (p.abstract_text.empty())
        throw CorpusError(where + ": empty abstract for paper '" + p.id + "'");
    return p;
}

// Parses one tables.jsonl record into an instance (cross-references not yet
// resolved against the paper set).
inline BenchmarkInstance parse_table_record(const json& j, const std::string& where) {
    BenchmarkInstance inst;
    LiteratureTable& t = inst.table;
    t.table_id = detail::require_string(j, "table_id", where);
    if (t.table_id.empty()) throw CorpusError(where + ": empty table_id");

    if (!j.contains("columns") || !j["columns"].is_array())
        throw CorpusError(where + ": missing or non-array field 'columns'");
    for (const auto& c : j["columns"]) {
        if (!c.is_string()) throw CorpusError(where + ": non-string column name");
        t.columns.push_back(normalize_ws(c.get<std::string>()));
    }

    if (!j.contains("rows") || !j["rows"].is_object())
        throw CorpusError(where + ": missing or non-object field 'rows'");
    for (const auto& [paper_id, cells] : j["rows"].items()) {
        if (!cells.is_object())
            throw CorpusError(where + ": row '" + paper_id + "' is not an object");
        auto& row = t.rows[paper_id];
        for (const auto& [col, val] : cells.items()) {
            if (!val.is_string())
                throw CorpusError(where + ": non-string cell in row '" + paper_id + "'");
            const std::string norm_col = normalize_ws(col);
            std::string v = val.get<std::string>();
            row[norm_col] = (v == kEmptyCellMarker) ? "" : v;
        }
        // Every row carries an entry for every column.
        for (const auto& col : t.columns) {
            row.emplace(col, "");
        }
    }
    if (t.rows.empty()) throw CorpusError(where + ": table has no rows");

    if (j.contains("caption")) t.caption = detail::require_string(j, "caption", where);
    if (j.contains("user_demand"))
        t.user_demand = detail::require_string(j, "user_demand", where);

    if (!j.contains("distractor_ids") || !j["distractor_ids"].is_array())
        throw CorpusError(where + ": missing or non-array field 'distractor_ids'");
    for (const auto& d : j["distractor_ids"]) {
        if (!d.is_string()) throw CorpusError(where + ": non-string distractor id");
        inst.distractor_ids.push_back(d.get<std::string>());
    }

    detail::validate_table(t, where);

    inst.relevant_ids = t.row_ids();
    std::sort(inst.relevant_ids.begin(), inst.relevant_ids.end());
    std::sort(inst.distractor_ids.begin(), inst.distractor_ids.end());
    if (std::adjacent_find(inst.distractor_ids.begin(), inst.distractor_ids.end()) !=
        inst.distractor_ids.end())
        throw CorpusError(where + ": duplicate distractor id");
    for (const auto& d : inst.distractor_ids) {
        if (inst.is_relevant(d))
            throw CorpusError(where + ": paper '" + d + "' is both relevant and distractor");
    }
    // Verified distractor counts live in [min(m,10), 10]; tables can have
    // more than 10 rows while distractor pools are capped at 10.
    const std::size_t lo = std::min<std::size_t>(inst.m(), 10);
    if (inst.distractor_ids.size() < lo || inst.distractor_ids.size() > 10)
        throw CorpusError(where + ": distractor count " +
                          std::to_string(inst.distractor_ids.size()) + " outside [" +
                          std::to_string(lo) + ",10]");

    inst.candidate_ids = inst.relevant_ids;
    inst.candidate_ids.insert(inst.candidate_ids.end(), inst.distractor_ids.begin(),
                              inst.distractor_ids.end());
    std::sort(inst.candidate_ids.begin(), inst.candidate_ids.end());
    return inst;
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
    const auto papers_path = dir / "papers.jsonl";
    const auto tables_path = dir / "tables.jsonl";
    if (!std::filesystem::exists(papers_path))
        throw CorpusError("missing file: " + papers_path.string());
    if (!std::filesystem::exists(tables_path))
        throw CorpusError("missing file: " + tables_path.string());

    Corpus corpus;
    std::set<std::string> paper_ids;
    {
        std::ifstream in(papers_path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            const std::string where = "papers.jsonl:" + std::to_string(lineno);
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw CorpusError(where + ": malformed record: " + e.what());
            }
            Paper p = parse_paper_record(j, where);
            if (!paper_ids.insert(p.id).second)
                throw CorpusError(where + ": duplicate paper id '" + p.id + "'");
            if (!p.has_full_text())
                corpus.warnings.push_back("paper '" + p.id + "' has no full text");
            corpus.papers.push_back(std::move(p));
        }
    }
    corpus.rebuild_index();

    std::set<std::string> table_ids;
    {
        std::ifstream in(tables_path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            const std::string where = "tables.jsonl:" + std::to_string(lineno);
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw CorpusError(where + ": malformed record: " + e.what());
            }
            BenchmarkInstance inst = parse_table_record(j, where);
            if (!table_ids.insert(inst.table.table_id).second)
                throw CorpusError(where + ": duplicate table id '" + inst.table.table_id + "'");
            for (const auto& id : inst.candidate_ids) {
                if (!corpus.find_paper(id))
                    throw CorpusError(where + ": dangling paper reference '" + id + "'");
            }
            if (inst.table.user_demand.empty())
                corpus.warnings.push_back("table '" + inst.table.table_id +
                                          "' has no user demand");
            corpus.instances.push_back(std::move(inst));
        }
    }
    return corpus;
}

inline json table_record_to_json(const BenchmarkInstance& inst) {
    json rows = json::object();
    for (const auto& [paper_id, cells] : inst.table.rows) {
        json row = json::object();
        for (const auto& [col, val] : cells) {
            row[col] = val.empty() ? std::string(kEmptyCellMarker) : val;
        }
        rows[paper_id] = std::move(row);
    }
    return json{{"table_id", inst.table.table_id},
                {"columns", inst.table.columns},
                {"rows", rows},
                {"caption", inst.table.caption},
                {"user_demand", inst.table.user_demand},
                {"distractor_ids", inst.distractor_ids}};
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "papers.jsonl");
        for (const auto& p : corpus.papers) {
            out << json{{"id", p.id},
                        {"title", p.title},
                        {"abstract", p.abstract_text},
                        {"full_text", p.full_text}}
                       .dump()
                << '\n';
        }
    }
    {
        std::ofstream out(dir / "tables.jsonl");
        for (const auto& inst : corpus.instances) {
            out << table_record_to_json(inst).dump() << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Summary statistics

struct DimStats {
    std::size_t min = 0;
    std::size_t max = 0;
    double mean = 0.0;
    std::size_t total = 0;
};

struct CorpusStats {
    std::size_t table_count = 0;
    DimStats papers_per_table;
    DimStats columns_per_table;
    DimStats distractors_per_table;
};

namespace detail {
inline DimStats dim_stats(const std::vector<std::size_t>& counts) {
    DimStats s;
    s.min = *std::min_element(counts.begin(), counts.end());
    s.max = *std::max_element(counts.begin(), counts.end());
    for (auto c : counts) s.total += c;
    s.mean = static_cast<double>(s.total) / static_cast<double>(counts.size());
    return s;
}
}  // namespace detail

inline CorpusStats corpus_stats(const Corpus& corpus) {
    if (corpus.instances.empty()) throw CorpusError("empty corpus");
    std::vector<std::size_t> papers, columns, distractors;
    for (const auto& inst : corpus.instances) {
        papers.push_back(inst.table.row_count());
        columns.push_back(inst.table.column_count());
        distractors.push_back(inst.distractor_ids.size());
    }
    CorpusStats s;
    s.table_count = corpus.instances.size();
    s.papers_per_table = detail::dim_stats(papers);
    s.columns_per_table = detail::dim_stats(columns);
    s.distractors_per_table = detail::dim_stats(distractors);
    return s;
}

inline json to_json(const DimStats& s) {
    return json{{"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"total", s.total}};
}

inline json to_json(const CorpusStats& s) {
    return json{{"tables", s.table_count},
                {"papers_per_table", to_json(s.papers_per_table)},
                {"columns_per_table", to_json(s.columns_per_table)},
                {"distractors_per_table", to_json(s.distractors_per_table)}};
}

inline std::string format_text(const CorpusStats& s) {
    std::ostringstream os;
    os << std::left << std::setw(12) << "Statistic" << std::right << std::setw(14)
       << "Paper Count" << std::setw(14) << "Column Count" << std::setw(18)
       << "Distractor Count" << '\n';
    auto line = [&](const char* name, auto get) {
        os << std::left << std::setw(12) << name << std::right << std::setw(14)
           << get(s.papers_per_table) << std::setw(14) << get(s.columns_per_table)
           << std::setw(18) << get(s.distractors_per_table) << '\n';
    };
    line("Min", [](const DimStats& d) { return std::to_string(d.min); });
    line("Max", [](const DimStats& d) { return std::to_string(d.max); });
    line("Mean", [](const DimStats& d) {
        std::ostringstream v;
        v << std::fixed << std::setprecision(2) << d.mean;
        return v.str();
    });
    line("Total", [](const DimStats& d) { return std::to_string(d.total); });
    return os.str();
}

// ---------------------------------------------------------------------------
// Prompt/content token overlap

enum class PromptField { caption, user_demand };

inline const char* to_string(PromptField f) {
    return f == PromptField::caption ? "caption" : "user_demand";
}

struct OverlapSide {
    std::size_t overlapping_tables = 0;
    double fraction = 0.0;
    double mean_overlap_tokens = 0.0;  // among overlapping tables; 0 when none
};

struct OverlapReport {
    PromptField field = PromptField::caption;
    std::size_t table_count = 0;
    OverlapSide schema;
    OverlapSide values;
};

inline OverlapReport prompt_overlap_stats(const Corpus& corpus, PromptField field) {
    OverlapReport report;
    report.field = field;
    report.table_count = corpus.instances.size();

    std::size_t schema_hits = 0, value_hits = 0;
    std::size_t schema_token_sum = 0, value_token_sum = 0;
    for (const auto& inst : corpus.instances) {
        const std::string& prompt =
            field == PromptField::caption ? inst.table.caption : inst.table.user_demand;
        const std::set<std::string> prompt_tokens = content_tokens(prompt);

        std::set<std::string> schema_tokens;
        for (const auto& col : inst.table.columns) {
            auto t = content_tokens(col);
            schema_tokens.insert(t.begin(), t.end());
        }
        std::set<std::string> value_tokens;
        for (const auto& [_, cells] : inst.table.rows) {
            for (const auto& [__, val] : cells) {
                if (val.empty()) continue;
                auto t = content_tokens(val);
                value_tokens.insert(t.begin(), t.end());
            }
        }

        auto shared_count = [&](const std::set<std::string>& content) {
            std::size_t n = 0;
            for (const auto& tok : prompt_tokens) n += content.count(tok);
            return n;
        };
        if (const std::size_t n = shared_count(schema_tokens); n > 0) {
            ++schema_hits;
            schema_token_sum += n;
        }
        if (const std::size_t n = shared_count(value_tokens); n > 0) {
            ++value_hits;
            value_token_sum += n;
        }
    }

    auto side = [&](std::size_t hits, std::size_t token_sum) {
        OverlapSide s;
        s.overlapping_tables = hits;
        s.fraction = report.table_count == 0
                         ? 0.0
                         : static_cast<double>(hits) / static_cast<double>(report.table_count);
        s.mean_overlap_tokens =
            hits == 0 ? 0.0 : static_cast<double>(token_sum) / static_cast<double>(hits);
        return s;
    };
    report.schema = side(schema_hits, schema_token_sum);
    report.values = side(value_hits, value_token_sum);
    return report;
}

inline json to_json(const OverlapReport& r) {
    auto side = [](const OverlapSide& s) {
        return json{{"tables", s.overlapping_tables},
                    {"fraction", s.fraction},
                    {"mean_overlap_tokens", s.mean_overlap_tokens}};
    };
    return json{{"prompt_field", to_string(r.field)},
                {"table_count", r.table_count},
                {"schema", side(r.schema)},
                {"values", side(r.values)}};
}

inline std::string format_text(const OverlapReport& r) {
    std::ostringstream os;
    os << "Prompt field: " << to_string(r.field) << " (" << r.table_count << " tables)\n";
    auto line = [&](const char* name, const OverlapSide& s) {
        os << std::left << std::setw(8) << name << std::right << std::setw(8)
           << s.overlapping_tables << " (" << std::fixed << std::setprecision(1)
           << 100.0 * s.fraction << "%)" << std::setw(10) << std::setprecision(1)
           << s.mean_overlap_tokens << " tokens\n";
    };
    line("Schema", r.schema);
    line("Value", r.values);
    return os.str();
}

// ---------------------------------------------------------------------------
// Sampling

// Uniform sample of n instances without replacement; deterministic per seed.
// Instances keep their original relative order. Papers are kept in full so
// distractor ranking still sees the whole pool.
inline Corpus sample_instances(const Corpus& corpus, std::size_t n, std::uint64_t seed) {
    if (n < 1 || n > corpus.instances.size())
        throw CorpusError("sample size " + std::to_string(n) + " out of range [1," +
                          std::to_string(corpus.instances.size()) + "]");
    std::vector<std::size_t> indices(corpus.instances.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first n slots are a uniform sample.
    for (std::size_t i = 0; i < n; ++i)
        std::swap(indices[i], indices[uniform_in(rng, i, indices.size() - 1)]);
    indices.resize(n);
    std::sort(indices.begin(), indices.end());

    Corpus out;
    out.papers = corpus.papers;
    out.warnings = corpus.warnings;
    for (auto i : indices) out.instances.push_back(corpus.instances[i]);
    out.rebuild_index();
    return out;
}

}  // namespace littab

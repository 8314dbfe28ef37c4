#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "littab/corpus.hpp"
#include "littab/errors.hpp"
#include "littab/llm_gateway.hpp"
#include "littab/prompts.hpp"
#include "littab/text.hpp"

namespace littab {

enum class Method { one_shot, per_paper, two_stage, iterative };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::one_shot: return "one_shot";
        case Method::per_paper: return "per_paper";
        case Method::two_stage: return "two_stage";
        default: return "iterative";
    }
}

inline Method method_from_string(const std::string& s) {
    if (s == "one_shot") return Method::one_shot;
    if (s == "per_paper") return Method::per_paper;
    if (s == "two_stage") return Method::two_stage;
    if (s == "iterative") return Method::iterative;
    throw ConfigError("unknown method '" + s + "'");
}

inline std::vector<Method> all_methods() {
    return {Method::one_shot, Method::per_paper, Method::two_stage, Method::iterative};
}

struct DraftTable {
    std::vector<std::string> columns;
    std::map<std::string, std::map<std::string, std::string>> rows;
    std::set<std::string> selected_ids;
    std::string provenance;
    std::vector<std::string> notes;

    bool empty() const { return rows.empty(); }
};

// Row keys = selected ids; every row covers every column; columns distinct.
inline void validate_draft(const DraftTable& t) {
    std::set<std::string> cols(t.columns.begin(), t.columns.end());
    if (cols.size() != t.columns.size())
        throw GenerationError(FailKind::protocol, "draft table has duplicate columns");
    std::set<std::string> row_keys;
    for (const auto& [id, cells] : t.rows) {
        row_keys.insert(id);
        if (cells.size() != cols.size())
            throw GenerationError(FailKind::protocol,
                                  "row '" + id + "' does not cover the schema");
        for (const auto& [col, _] : cells)
            if (!cols.count(col))
                throw GenerationError(FailKind::protocol,
                                      "row '" + id + "' has unknown column '" + col + "'");
    }
    if (row_keys != t.selected_ids)
        throw GenerationError(FailKind::protocol, "row keys differ from selected ids");
}

inline nlohmann::json draft_to_json(const DraftTable& t) {
    nlohmann::json rows = nlohmann::json::object();
    for (const auto& [id, cells] : t.rows) {
        nlohmann::json row = nlohmann::json::object();
        for (const auto& [col, val] : cells)
            row[col] = val.empty() ? std::string(kEmptyCellMarker) : val;
        rows[id] = std::move(row);
    }
    return {{"selected", std::vector<std::string>(t.selected_ids.begin(), t.selected_ids.end())},
            {"columns", t.columns},
            {"rows", rows},
            {"provenance", t.provenance},
            {"notes", t.notes}};
}

inline DraftTable draft_from_json(const nlohmann::json& j) {
    DraftTable t;
    for (const auto& c : j.at("columns")) t.columns.push_back(c.get<std::string>());
    for (const auto& s : j.at("selected")) t.selected_ids.insert(s.get<std::string>());
    for (const auto& [id, cells] : j.at("rows").items()) {
        auto& row = t.rows[id];
        for (const auto& [col, val] : cells.items()) {
            const std::string v = val.get<std::string>();
            row[col] = (v == kEmptyCellMarker) ? "" : v;
        }
    }
    t.provenance = j.value("provenance", "");
    if (j.contains("notes"))
        for (const auto& n : j["notes"]) t.notes.push_back(n.get<std::string>());
    return t;
}

// Compact table serialization used inside prompts (and parsed back by the
// scripted offline providers).
inline std::string prompt_table_json(const std::vector<std::string>& columns,
                                     const std::map<std::string, std::map<std::string,
                                                                          std::string>>& rows) {
    nlohmann::json jrows = nlohmann::json::object();
    for (const auto& [id, cells] : rows) {
        nlohmann::json row = nlohmann::json::object();
        for (const auto& [col, val] : cells)
            row[col] = val.empty() ? std::string(kEmptyCellMarker) : val;
        jrows[id] = std::move(row);
    }
    return nlohmann::json{{"columns", columns}, {"rows", jrows}}.dump();
}

inline std::string prompt_table_json(const DraftTable& t) {
    return prompt_table_json(t.columns, t.rows);
}

inline std::string prompt_table_json(const LiteratureTable& t) {
    return prompt_table_json(t.columns, t.rows);
}

// ---------------------------------------------------------------------------
// Model-output parsing

// Pulls the JSON payload out of a model reply: prefers the first fenced code
// block, then falls back to the outermost brace span. The result still has
// to survive a strict JSON parse.
inline std::string extract_json_payload(const std::string& text) {
    std::string body = text;
    const std::size_t fence = body.find("```");
    if (fence != std::string::npos) {
        std::size_t start = body.find('\n', fence);
        if (start != std::string::npos) {
            const std::size_t close = body.find("```", start);
            if (close != std::string::npos) body = body.substr(start + 1, close - start - 1);
        }
    }
    const std::size_t open = body.find('{');
    const std::size_t close = body.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw GenerationError(FailKind::protocol, "no JSON object in model output");
    return body.substr(open, close - open + 1);
}

// Parses the full-table envelope {selected, columns, rows}. Selection is
// reconciled mechanically: every row key counts as selected, every selected
// paper gets a row, rows cover the schema with empty markers, cells naming
// unknown columns are dropped with a note.
inline DraftTable parse_table_output(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(extract_json_payload(text));
    } catch (const nlohmann::json::exception& e) {
        throw GenerationError(FailKind::protocol, std::string("table output: ") + e.what());
    }
    if (!j.is_object() || !j.contains("selected") || !j["selected"].is_array() ||
        !j.contains("columns") || !j["columns"].is_array() || !j.contains("rows") ||
        !j["rows"].is_object())
        throw GenerationError(FailKind::protocol, "table output: malformed envelope");

    DraftTable t;
    for (const auto& c : j["columns"]) {
        if (!c.is_string())
            throw GenerationError(FailKind::protocol, "table output: non-string column");
        const std::string col = normalize_ws(c.get<std::string>());
        if (col.empty()) continue;
        if (std::find(t.columns.begin(), t.columns.end(), col) == t.columns.end())
            t.columns.push_back(col);
        else
            t.notes.push_back("duplicate column '" + col + "' collapsed");
    }
    for (const auto& s : j["selected"]) {
        if (!s.is_string())
            throw GenerationError(FailKind::protocol, "table output: non-string selected id");
        t.selected_ids.insert(s.get<std::string>());
    }
    for (const auto& [id, cells] : j["rows"].items()) {
        if (!cells.is_object())
            throw GenerationError(FailKind::protocol, "table output: row '" + id +
                                                          "' is not an object");
        if (!t.selected_ids.count(id)) {
            t.selected_ids.insert(id);
            t.notes.push_back("row '" + id + "' added to selection");
        }
        auto& row = t.rows[id];
        for (const auto& [col, val] : cells.items()) {
            if (!val.is_string())
                throw GenerationError(FailKind::protocol,
                                      "table output: non-string cell in row '" + id + "'");
            const std::string norm_col = normalize_ws(col);
            if (std::find(t.columns.begin(), t.columns.end(), norm_col) == t.columns.end()) {
                t.notes.push_back("cell for unknown column '" + norm_col + "' dropped");
                continue;
            }
            const std::string v = trim(val.get<std::string>());
            row[norm_col] = (v == kEmptyCellMarker) ? "" : v;
        }
    }
    for (const auto& id : t.selected_ids) {
        auto& row = t.rows[id];
        for (const auto& col : t.columns) row.emplace(col, "");
    }
    return t;
}

// Parses the single-row envelope {row: {...}} against a fixed schema;
// unknown columns are dropped with a note, missing ones filled empty.
inline std::map<std::string, std::string> parse_row_output(const std::string& text,
                                                           const std::vector<std::string>& schema,
                                                           std::vector<std::string>* notes) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(extract_json_payload(text));
    } catch (const nlohmann::json::exception& e) {
        throw GenerationError(FailKind::protocol, std::string("row output: ") + e.what());
    }
    if (!j.is_object() || !j.contains("row") || !j["row"].is_object())
        throw GenerationError(FailKind::protocol, "row output: malformed envelope");
    std::map<std::string, std::string> row;
    for (const auto& col : schema) row[col] = "";
    for (const auto& [col, val] : j["row"].items()) {
        if (!val.is_string())
            throw GenerationError(FailKind::protocol, "row output: non-string cell");
        const std::string norm_col = normalize_ws(col);
        if (!row.count(norm_col)) {
            if (notes) notes->push_back("row cell for unknown column '" + norm_col + "' dropped");
            continue;
        }
        const std::string v = trim(val.get<std::string>());
        row[norm_col] = (v == kEmptyCellMarker) ? "" : v;
    }
    return row;
}

struct SelectionOutput {
    std::vector<std::string> selected;
    std::vector<std::string> columns;
    std::vector<std::string> notes;
};

inline SelectionOutput parse_select_output(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(extract_json_payload(text));
    } catch (const nlohmann::json::exception& e) {
        throw GenerationError(FailKind::protocol, std::string("selection output: ") + e.what());
    }
    if (!j.is_object() || !j.contains("selected") || !j["selected"].is_array() ||
        !j.contains("columns") || !j["columns"].is_array())
        throw GenerationError(FailKind::protocol, "selection output: malformed envelope");
    SelectionOutput out;
    for (const auto& s : j["selected"]) {
        if (!s.is_string())
            throw GenerationError(FailKind::protocol, "selection output: non-string id");
        out.selected.push_back(s.get<std::string>());
    }
    for (const auto& c : j["columns"]) {
        if (!c.is_string())
            throw GenerationError(FailKind::protocol, "selection output: non-string column");
        const std::string col = normalize_ws(c.get<std::string>());
        if (col.empty()) continue;
        if (std::find(out.columns.begin(), out.columns.end(), col) == out.columns.end())
            out.columns.push_back(col);
        else
            out.notes.push_back("duplicate column '" + col + "' collapsed");
    }
    return out;
}

struct RefineEdit {
    std::map<std::string, std::string> decisions;  // id -> "include" | "remove"
    std::vector<std::string> schema_add;
    std::vector<std::string> schema_remove;
    std::map<std::string, std::map<std::string, std::string>> rows;
    struct ValueEdit {
        std::string paper, column, value;
    };
    std::vector<ValueEdit> value_edits;
};

inline RefineEdit parse_refine_output(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(extract_json_payload(text));
    } catch (const nlohmann::json::exception& e) {
        throw GenerationError(FailKind::protocol, std::string("refine output: ") + e.what());
    }
    if (!j.is_object() || !j.contains("decisions") || !j["decisions"].is_object())
        throw GenerationError(FailKind::protocol, "refine output: malformed envelope");
    RefineEdit e;
    for (const auto& [id, d] : j["decisions"].items()) {
        if (!d.is_string())
            throw GenerationError(FailKind::protocol, "refine output: non-string decision");
        e.decisions[id] = d.get<std::string>();
    }
    auto read_string_array = [&](const char* field, std::vector<std::string>& out) {
        if (!j.contains(field)) return;
        if (!j[field].is_array())
            throw GenerationError(FailKind::protocol,
                                  std::string("refine output: ") + field + " not an array");
        for (const auto& s : j[field]) {
            if (!s.is_string())
                throw GenerationError(FailKind::protocol,
                                      std::string("refine output: non-string ") + field);
            out.push_back(normalize_ws(s.get<std::string>()));
        }
    };
    read_string_array("schema_add", e.schema_add);
    read_string_array("schema_remove", e.schema_remove);
    if (j.contains("rows")) {
        if (!j["rows"].is_object())
            throw GenerationError(FailKind::protocol, "refine output: rows not an object");
        for (const auto& [id, cells] : j["rows"].items()) {
            if (!cells.is_object())
                throw GenerationError(FailKind::protocol, "refine output: row not an object");
            for (const auto& [col, val] : cells.items()) {
                if (!val.is_string())
                    throw GenerationError(FailKind::protocol, "refine output: non-string cell");
                const std::string v = trim(val.get<std::string>());
                e.rows[id][normalize_ws(col)] = (v == kEmptyCellMarker) ? "" : v;
            }
        }
    }
    if (j.contains("value_edits")) {
        if (!j["value_edits"].is_array())
            throw GenerationError(FailKind::protocol, "refine output: value_edits not an array");
        for (const auto& ve : j["value_edits"]) {
            if (!ve.is_object() || !ve.contains("paper") || !ve.contains("column") ||
                !ve.contains("value") || !ve["paper"].is_string() || !ve["column"].is_string() ||
                !ve["value"].is_string())
                throw GenerationError(FailKind::protocol, "refine output: malformed value edit");
            const std::string v = trim(ve["value"].get<std::string>());
            e.value_edits.push_back({ve["paper"].get<std::string>(),
                                     normalize_ws(ve["column"].get<std::string>()),
                                     (v == kEmptyCellMarker) ? "" : v});
        }
    }
    return e;
}

// ---------------------------------------------------------------------------
// Iterative-method state

struct KeyInfoSummary {
    std::string paper_id;
    std::string summary;
    bool from_abstract_only = false;  // full text missing, abstract fallback
    bool capped = false;              // exceeded the word cap and was cut
};

struct BatchPlan {
    std::size_t iteration = 0;
    std::vector<std::vector<std::string>> batches;
};

// Uniform random permutation chunked into ceil(n / batch_size) batches; only
// the last batch may be short.
inline BatchPlan make_batches(std::vector<std::string> paper_ids, std::size_t batch_size,
                              std::mt19937_64& rng) {
    if (paper_ids.empty()) throw GenerationError(FailKind::config, "make_batches: no papers");
    if (batch_size < 1) throw GenerationError(FailKind::config, "make_batches: batch_size < 1");
    deterministic_shuffle(paper_ids, rng);
    BatchPlan plan;
    for (std::size_t i = 0; i < paper_ids.size(); i += batch_size) {
        const std::size_t end = std::min(i + batch_size, paper_ids.size());
        plan.batches.emplace_back(paper_ids.begin() + i, paper_ids.begin() + end);
    }
    return plan;
}

enum class IncludeDecision { undecided, included, removed };

struct RefinementState {
    DraftTable table;
    std::map<std::string, IncludeDecision> decisions;  // keys = candidate universe
    std::vector<std::string> edit_log;

    // Included papers have rows, removed/undecided ones do not.
    void check_invariants() const {
        for (const auto& [id, d] : decisions) {
            const bool has_row = table.rows.count(id) > 0;
            if ((d == IncludeDecision::included) != has_row)
                throw GenerationError(FailKind::protocol,
                                      "refinement state invariant broken for '" + id + "'");
        }
        for (const auto& [id, _] : table.rows)
            if (!decisions.count(id))
                throw GenerationError(FailKind::protocol,
                                      "row for paper outside candidate universe: '" + id + "'");
    }
};

// ---------------------------------------------------------------------------
// Strategies

struct GenerationOptions {
    std::string model = "mock";
    double temperature = 0.5;
    std::size_t k = 5;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    std::size_t one_shot_budget_chars = 240000;  // whole-prompt budget, ~60k tokens
    std::size_t full_text_cap_chars = 24000;     // per-paper cap outside one_shot
    std::size_t key_info_word_cap = 300;
};

class TableGenerator {
public:
    TableGenerator(LlmGateway& gateway, const PromptLibrary& prompts, GenerationOptions opts)
        : gw_(gateway), prompts_(prompts), opts_(std::move(opts)) {}

    DraftTable generate(Method method, const std::string& demand,
                        const std::vector<Paper>& papers) {
        switch (method) {
            case Method::one_shot: return generate_one_shot(demand, papers);
            case Method::per_paper: return generate_per_paper(demand, papers);
            case Method::two_stage: return generate_two_stage(demand, papers);
            default: return generate_iterative(demand, papers);
        }
    }

    // Baseline 1: a single prompt carrying every candidate's full text.
    DraftTable generate_one_shot(const std::string& demand, const std::vector<Paper>& papers) {
        require_papers(papers);
        const std::size_t per_paper_cap = std::max<std::size_t>(
            500, opts_.one_shot_budget_chars / papers.size());
        std::string blocks;
        for (const auto& p : papers) {
            if (!blocks.empty()) blocks += "\n\n";
            blocks += paper_block(p, true, per_paper_cap);
        }
        const std::string prompt =
            prompts_.render("one_shot", {{"DEMAND", demand}, {"PAPERS", blocks}});
        DraftTable t = chat_table(prompt, "one_shot");
        restrict_to_candidates(t, papers);
        t.provenance = "one_shot";
        validate_draft(t);
        return t;
    }

    // Baseline 2: per-paper inclusion + one-row tables merged by exact
    // column-name match (whitespace-trimmed, case-sensitive).
    DraftTable generate_per_paper(const std::string& demand, const std::vector<Paper>& papers) {
        require_papers(papers);
        std::vector<ChatRequest> inclusion_reqs;
        inclusion_reqs.reserve(papers.size());
        for (const auto& p : papers)
            inclusion_reqs.push_back(make_request(
                prompts_.render("inclusion",
                                {{"DEMAND", demand},
                                 {"PAPERS", paper_block(p, true, opts_.full_text_cap_chars)}}),
                "inclusion"));
        const auto verdicts = gw_.chat_batch(inclusion_reqs);

        DraftTable merged;
        merged.provenance = "per_paper";
        std::vector<const Paper*> included;
        for (std::size_t i = 0; i < papers.size(); ++i)
            if (starts_with_yes(verdicts[i].content)) included.push_back(&papers[i]);
        if (included.empty()) {
            merged.notes.push_back("all papers rejected at inclusion");
            return merged;
        }

        std::vector<ChatRequest> row_reqs;
        row_reqs.reserve(included.size());
        for (const Paper* p : included)
            row_reqs.push_back(make_request(
                prompts_.render("per_paper_table",
                                {{"DEMAND", demand},
                                 {"PAPERS", paper_block(*p, true, opts_.full_text_cap_chars)}}),
                "per_paper_table"));
        const auto replies = gw_.chat_batch(row_reqs);

        for (std::size_t i = 0; i < included.size(); ++i) {
            const Paper& p = *included[i];
            DraftTable one = parse_with_repair(replies[i].content, "per_paper_table");
            // The one-row table is keyed by the real paper id regardless of
            // what the model called it.
            std::map<std::string, std::string> cells;
            if (!one.rows.empty()) {
                if (one.rows.size() > 1 || !one.rows.count(p.id))
                    merged.notes.push_back("per-paper table for '" + p.id +
                                           "' had unexpected row keys");
                cells = one.rows.count(p.id) ? one.rows[p.id] : one.rows.begin()->second;
            }
            merged.selected_ids.insert(p.id);
            auto& row = merged.rows[p.id];
            for (const auto& col : one.columns) {
                if (std::find(merged.columns.begin(), merged.columns.end(), col) ==
                    merged.columns.end())
                    merged.columns.push_back(col);
                const auto it = cells.find(col);
                row[col] = it == cells.end() ? "" : it->second;
            }
        }
        // Union schema: papers that never mentioned a column get the empty
        // marker there (sparsity preserved).
        for (auto& [id, row] : merged.rows)
            for (const auto& col : merged.columns) row.emplace(col, "");
        validate_draft(merged);
        return merged;
    }

    // Two-stage: selection + schema from titles/abstracts, then per-paper
    // row filling from full text against the frozen schema.
    DraftTable generate_two_stage(const std::string& demand, const std::vector<Paper>& papers) {
        require_papers(papers);
        std::string blocks;
        for (const auto& p : papers) {
            if (!blocks.empty()) blocks += "\n\n";
            blocks += paper_block(p, false, 0);
        }
        const std::string select_prompt =
            prompts_.render("two_stage_select", {{"DEMAND", demand}, {"PAPERS", blocks}});
        SelectionOutput sel;
        {
            const ChatResponse resp = chat(select_prompt, "two_stage_select");
            try {
                sel = parse_select_output(resp.content);
            } catch (const GenerationError&) {
                const ChatResponse again = chat(
                    prompts_.render("repair", {{"REPLY", truncate_middle(resp.content, 4000)}}),
                    "repair");
                sel = parse_select_output(again.content);
            }
        }

        DraftTable t;
        t.provenance = "two_stage";
        t.columns = sel.columns;
        t.notes = sel.notes;

        std::vector<const Paper*> chosen;
        for (const auto& id : sel.selected) {
            const auto it = std::find_if(papers.begin(), papers.end(),
                                         [&](const Paper& p) { return p.id == id; });
            if (it == papers.end())
                t.notes.push_back("selected unknown paper '" + id + "' dropped");
            else
                chosen.push_back(&*it);
        }
        if (chosen.empty()) {
            t.notes.push_back("no candidate papers selected");
            return t;
        }
        std::sort(chosen.begin(), chosen.end(),
                  [](const Paper* a, const Paper* b) { return a->id < b->id; });

        std::string schema_list;
        for (const auto& c : t.columns) {
            if (!schema_list.empty()) schema_list += ", ";
            schema_list += c;
        }
        std::vector<ChatRequest> row_reqs;
        row_reqs.reserve(chosen.size());
        for (const Paper* p : chosen)
            row_reqs.push_back(make_request(
                prompts_.render("two_stage_row",
                                {{"DEMAND", demand},
                                 {"SCHEMA", schema_list},
                                 {"PAPERS", paper_block(*p, true, opts_.full_text_cap_chars)}}),
                "two_stage_row"));
        const auto replies = gw_.chat_batch(row_reqs);

        for (std::size_t i = 0; i < chosen.size(); ++i) {
            const Paper& p = *chosen[i];
            t.selected_ids.insert(p.id);
            try {
                t.rows[p.id] = parse_row_output(replies[i].content, t.columns, &t.notes);
            } catch (const GenerationError& e) {
                std::map<std::string, std::string> row;
                for (const auto& col : t.columns) row[col] = "";
                t.rows[p.id] = std::move(row);
                t.notes.push_back("row for '" + p.id + "' unparseable, left empty: " + e.what());
            }
        }
        validate_draft(t);
        return t;
    }

    KeyInfoSummary extract_key_info(const std::string& demand, const Paper& paper) {
        const ChatResponse resp = gw_.chat(key_info_request(demand, paper));
        return key_info_from_reply(paper, resp.content);
    }

    // One refinement pass over one batch. Edits referencing ids or columns
    // outside the state are rejected and logged; everything else applies.
    RefinementState refine_step(const std::string& demand, RefinementState state,
                                const std::vector<KeyInfoSummary>& batch_summaries) {
        std::string batch_text;
        for (const auto& s : batch_summaries) {
            if (!batch_text.empty()) batch_text += "\n\n";
            batch_text += "Paper ID: " + s.paper_id + "\nSummary: " + s.summary;
        }
        const std::string prompt = prompts_.render("refine", {{"DEMAND", demand},
                                                              {"TABLE", prompt_table_json(state.table)},
                                                              {"BATCH", batch_text}});
        const ChatResponse resp = chat(prompt, "refine");
        RefineEdit edit;
        try {
            edit = parse_refine_output(resp.content);
        } catch (const GenerationError&) {
            const ChatResponse again = chat(
                prompts_.render("repair", {{"REPLY", truncate_middle(resp.content, 4000)}}),
                "repair");
            edit = parse_refine_output(again.content);
        }
        apply_refine_edit(state, edit);
        state.check_invariants();
        return state;
    }

    // Iterative method: key info once per paper, k rounds of re-batched
    // refinement, then value verification with schema and selection frozen.
    DraftTable generate_iterative(const std::string& demand, const std::vector<Paper>& papers) {
        require_papers(papers);
        if (opts_.k < 1) throw GenerationError(FailKind::config, "iterative: k < 1");

        std::vector<ChatRequest> key_reqs;
        key_reqs.reserve(papers.size());
        for (const auto& p : papers) key_reqs.push_back(key_info_request(demand, p));
        const auto key_replies = gw_.chat_batch(key_reqs);
        std::vector<KeyInfoSummary> summaries;
        summaries.reserve(papers.size());
        for (std::size_t i = 0; i < papers.size(); ++i)
            summaries.push_back(key_info_from_reply(papers[i], key_replies[i].content));
        std::map<std::string, const KeyInfoSummary*> by_id;
        for (const auto& s : summaries) by_id[s.paper_id] = &s;

        RefinementState state;
        state.table.provenance = "iterative";
        std::vector<std::string> ids;
        for (const auto& p : papers) {
            ids.push_back(p.id);
            state.decisions[p.id] = IncludeDecision::undecided;
            if (by_id.at(p.id)->from_abstract_only)
                state.edit_log.push_back("key info for '" + p.id + "' from abstract only");
        }

        for (std::size_t iter = 0; iter < opts_.k; ++iter) {
            std::mt19937_64 rng(mix_seed(opts_.seed, iter));
            BatchPlan plan = make_batches(ids, opts_.batch_size, rng);
            plan.iteration = iter;
            for (const auto& batch : plan.batches) {
                std::vector<KeyInfoSummary> batch_summaries;
                batch_summaries.reserve(batch.size());
                for (const auto& id : batch) batch_summaries.push_back(*by_id.at(id));
                state = refine_step(demand, std::move(state), batch_summaries);
            }
        }

        std::size_t undecided = 0;
        for (auto& [id, d] : state.decisions)
            if (d == IncludeDecision::undecided) {
                d = IncludeDecision::removed;
                ++undecided;
            }
        if (undecided > 0)
            state.table.notes.push_back(std::to_string(undecided) +
                                        " undecided papers treated as removed");

        DraftTable t = std::move(state.table);
        for (const auto& line : state.edit_log) t.notes.push_back(line);
        t.provenance = "iterative k=" + std::to_string(opts_.k);
        validate_draft(t);
        if (t.rows.empty()) return t;

        std::map<std::string, const Paper*> paper_by_id;
        for (const auto& p : papers) paper_by_id[p.id] = &p;
        return verify_values(demand, t, paper_by_id);
    }

    // Re-reads each selected paper's full text and lets the model confirm or
    // correct its row. Schema and selection stay frozen; only cell values
    // may change.
    DraftTable verify_values(const std::string& demand, const DraftTable& table,
                             const std::map<std::string, const Paper*>& papers) {
        std::string schema_list;
        for (const auto& c : table.columns) {
            if (!schema_list.empty()) schema_list += ", ";
            schema_list += c;
        }
        std::vector<std::string> ids;
        for (const auto& [id, _] : table.rows) {
            if (!papers.count(id))
                throw GenerationError(FailKind::config,
                                      "verify_values: paper '" + id + "' not available");
            ids.push_back(id);
        }
        std::vector<ChatRequest> reqs;
        reqs.reserve(ids.size());
        for (const auto& id : ids) {
            nlohmann::json jrow = nlohmann::json::object();
            for (const auto& [col, val] : table.rows.at(id))
                jrow[col] = val.empty() ? std::string(kEmptyCellMarker) : val;
            reqs.push_back(make_request(
                prompts_.render("verify",
                                {{"DEMAND", demand},
                                 {"SCHEMA", schema_list},
                                 {"ROW", jrow.dump()},
                                 {"PAPERS",
                                  paper_block(*papers.at(id), true, opts_.full_text_cap_chars)}}),
                "verify"));
        }
        const auto replies = gw_.chat_batch(reqs);

        DraftTable out = table;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const std::string& id = ids[i];
            try {
                auto row = parse_row_output(replies[i].content, out.columns, &out.notes);
                for (const auto& [col, val] : row) {
                    if (out.rows[id][col] != val) {
                        out.notes.push_back("verified '" + id + "'/'" + col + "': '" +
                                            out.rows[id][col] + "' -> '" + val + "'");
                        out.rows[id][col] = val;
                    }
                }
            } catch (const GenerationError& e) {
                out.notes.push_back("row for '" + id + "' unverified: " + e.what());
            }
        }
        validate_draft(out);
        return out;
    }

private:
    static void require_papers(const std::vector<Paper>& papers) {
        if (papers.empty()) throw GenerationError(FailKind::config, "no candidate papers");
    }

    ChatRequest key_info_request(const std::string& demand, const Paper& paper) const {
        return make_request(
            prompts_.render("key_info",
                            {{"DEMAND", demand},
                             {"PAPERS", paper_block(paper, true, opts_.full_text_cap_chars)},
                             {"WORD_CAP", std::to_string(opts_.key_info_word_cap)}}),
            "key_info");
    }

    KeyInfoSummary key_info_from_reply(const Paper& paper, const std::string& reply) const {
        KeyInfoSummary s;
        s.paper_id = paper.id;
        s.from_abstract_only = !paper.has_full_text();
        s.summary = trim(reply);
        const std::string capped = cap_words(s.summary, opts_.key_info_word_cap);
        if (capped.size() != s.summary.size()) {
            s.summary = capped;
            s.capped = true;
        }
        if (s.summary.empty())
            throw GenerationError(FailKind::protocol,
                                  "empty key-info summary for '" + paper.id + "'");
        return s;
    }

    ChatRequest make_request(std::string prompt, std::string tag) const {
        ChatRequest req;
        req.model = opts_.model;
        req.temperature = opts_.temperature;
        req.tag = std::move(tag);
        req.messages = {{"user", std::move(prompt)}};
        return req;
    }

    ChatResponse chat(std::string prompt, std::string tag) {
        return gw_.chat(make_request(std::move(prompt), std::move(tag)));
    }

    DraftTable chat_table(const std::string& prompt, const std::string& tag) {
        const ChatResponse resp = chat(prompt, tag);
        return parse_with_repair(resp.content, tag);
    }

    // One repair round: ask again with the unparseable reply quoted, then
    // give up with a typed failure.
    DraftTable parse_with_repair(const std::string& reply, const std::string& tag) {
        try {
            return parse_table_output(reply);
        } catch (const GenerationError&) {
            const ChatResponse again =
                chat(prompts_.render("repair", {{"REPLY", truncate_middle(reply, 4000)}}),
                     "repair");
            try {
                return parse_table_output(again.content);
            } catch (const GenerationError& e) {
                throw GenerationError(FailKind::protocol,
                                      tag + ": unparseable after repair: " + e.what());
            }
        }
    }

    // Papers hallucinated into the selection are cut before validation.
    void restrict_to_candidates(DraftTable& t, const std::vector<Paper>& papers) const {
        std::set<std::string> known;
        for (const auto& p : papers) known.insert(p.id);
        std::vector<std::string> bogus;
        for (const auto& id : t.selected_ids)
            if (!known.count(id)) bogus.push_back(id);
        for (const auto& id : bogus) {
            t.selected_ids.erase(id);
            t.rows.erase(id);
            t.notes.push_back("selected id '" + id + "' is not a candidate, dropped");
        }
    }

    std::string paper_block(const Paper& p, bool with_full_text, std::size_t cap) const {
        std::string block =
            "Paper ID: " + p.id + "\nTitle: " + p.title + "\nAbstract: " + p.abstract_text;
        if (with_full_text && p.has_full_text())
            block += "\nFull text: " + truncate_middle(p.full_text, cap);
        return block;
    }

    void apply_refine_edit(RefinementState& state, const RefineEdit& edit) {
        DraftTable& t = state.table;
        auto log = [&](std::string line) { state.edit_log.push_back(std::move(line)); };

        // 1. Include/remove decisions.
        std::vector<std::string> newly_included;
        for (const auto& [id, action] : edit.decisions) {
            auto it = state.decisions.find(id);
            if (it == state.decisions.end()) {
                log("decision for unknown paper '" + id + "' rejected");
                continue;
            }
            if (action == "include") {
                if (it->second != IncludeDecision::included) newly_included.push_back(id);
                it->second = IncludeDecision::included;
            } else if (action == "remove") {
                if (it->second == IncludeDecision::included) {
                    t.rows.erase(id);
                    t.selected_ids.erase(id);
                    log("removed '" + id + "'");
                }
                it->second = IncludeDecision::removed;
            } else {
                log("decision '" + action + "' for '" + id + "' rejected");
            }
        }

        // 2. Schema removals (never below the 2-column floor).
        for (const auto& col : edit.schema_remove) {
            const auto it = std::find(t.columns.begin(), t.columns.end(), col);
            if (it == t.columns.end()) {
                log("schema remove of unknown column '" + col + "' rejected");
                continue;
            }
            if (t.columns.size() <= 2 && !t.rows.empty()) {
                log("schema remove of '" + col + "' rejected: schema arity floor");
                continue;
            }
            t.columns.erase(it);
            for (auto& [_, row] : t.rows) row.erase(col);
            log("schema removed '" + col + "'");
        }

        // 3. Schema additions.
        for (const auto& col : edit.schema_add) {
            if (col.empty() ||
                std::find(t.columns.begin(), t.columns.end(), col) != t.columns.end()) {
                log("schema add of '" + col + "' rejected");
                continue;
            }
            t.columns.push_back(col);
            for (auto& [_, row] : t.rows) row.emplace(col, "");
            log("schema added '" + col + "'");
        }

        // 4. Full rows for newly included papers.
        for (const auto& id : newly_included) {
            t.selected_ids.insert(id);
            auto& row = t.rows[id];
            const auto provided = edit.rows.find(id);
            for (const auto& col : t.columns) {
                std::string v;
                if (provided != edit.rows.end()) {
                    const auto cell = provided->second.find(col);
                    if (cell != provided->second.end()) v = cell->second;
                }
                row[col] = v;
            }
            if (provided == edit.rows.end()) log("included '" + id + "' without a row, blank");
        }
        for (const auto& [id, _] : edit.rows)
            if (std::find(newly_included.begin(), newly_included.end(), id) ==
                newly_included.end())
                log("row for '" + id + "' ignored (not newly included)");

        // 5. Single-cell edits on existing rows.
        for (const auto& ve : edit.value_edits) {
            auto row = t.rows.find(ve.paper);
            if (row == t.rows.end()) {
                log("value edit for unknown paper '" + ve.paper + "' rejected");
                continue;
            }
            if (std::find(t.columns.begin(), t.columns.end(), ve.column) == t.columns.end()) {
                log("value edit for unknown column '" + ve.column + "' rejected");
                continue;
            }
            row->second[ve.column] = ve.value;
        }
    }

    LlmGateway& gw_;
    const PromptLibrary& prompts_;
    GenerationOptions opts_;
};

}  // namespace littab

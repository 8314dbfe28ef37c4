#pragma once

#include <map>
#include <memory>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "littab/evaluation.hpp"
#include "littab/generation.hpp"
#include "littab/llm_gateway.hpp"
#include "littab/text.hpp"

// Deterministic scripted providers. They answer by mechanically parsing the
// prompts this library renders, which makes offline runs reproducible and
// gives tests a rule-based oracle instead of a live model.

namespace littab::mock {

namespace detail {

inline std::string joined_prompt(const ChatRequest& req) {
    std::string joined;
    for (const auto& m : req.messages) {
        joined += m.content;
        joined += '\n';
    }
    return joined;
}

inline std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

inline std::string line_after(const std::string& text, const std::string& marker) {
    const auto lines = lines_of(text);
    for (std::size_t i = 0; i + 1 < lines.size(); ++i)
        if (lines[i] == marker) return lines[i + 1];
    return "";
}

inline std::string line_prefixed(const std::string& text, const std::string& prefix) {
    for (const auto& line : lines_of(text))
        if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
    return "";
}

struct PaperBlock {
    std::string id;
    std::string title;
    std::string abstract_text;
};

inline std::vector<PaperBlock> paper_blocks(const std::string& text) {
    std::vector<PaperBlock> blocks;
    for (const auto& line : lines_of(text)) {
        if (line.rfind("Paper ID: ", 0) == 0) {
            blocks.push_back({line.substr(10), "", ""});
        } else if (!blocks.empty() && line.rfind("Title: ", 0) == 0 && blocks.back().title.empty()) {
            blocks.back().title = line.substr(7);
        } else if (!blocks.empty() && line.rfind("Abstract: ", 0) == 0 &&
                   blocks.back().abstract_text.empty()) {
            blocks.back().abstract_text = line.substr(10);
        }
    }
    return blocks;
}

// The include rule standing in for model judgment: a paper belongs to a
// demand when they share at least two content tokens.
inline bool topical_match(const std::string& demand, const PaperBlock& p) {
    const auto d = content_tokens(demand);
    const auto t = content_tokens(p.title + " " + p.abstract_text);
    std::size_t shared = 0;
    for (const auto& tok : d) shared += t.count(tok);
    return shared >= 2;
}

inline std::string slug_value(const std::string& paper_id, const std::string& column) {
    return to_lower(normalize_ws(column)) + " of " + paper_id;
}

inline const std::vector<std::string>& default_schema() {
    static const std::vector<std::string> cols{"Topic", "Contribution"};
    return cols;
}

inline std::string first_words(const std::string& text, std::size_t n) {
    return cap_words(normalize_ws(text), n);
}

inline nlohmann::json row_for(const PaperBlock& p, const std::vector<std::string>& columns) {
    nlohmann::json row = nlohmann::json::object();
    for (const auto& col : columns) {
        if (col == "Topic")
            row[col] = first_words(p.title, 6);
        else if (col == "Contribution")
            row[col] = first_words(p.abstract_text, 8);
        else
            row[col] = slug_value(p.id, col);
    }
    return row;
}

}  // namespace detail

// Answers a qa_answer prompt by looking the question up in the serialized
// table, the way the evaluation section assumes an ideal judge would.
inline std::string faithful_answer(const ChatRequest& req) {
    const std::string prompt = detail::joined_prompt(req);
    const std::string table_line =
        detail::line_after(prompt, "The generated table, as JSON:");
    const std::string question = detail::line_prefixed(prompt, "Question: ");
    if (table_line.empty() || question.empty()) return "no";

    nlohmann::json jt;
    try {
        jt = nlohmann::json::parse(table_line);
    } catch (const nlohmann::json::exception&) {
        return "no";
    }

    auto norm = [](const std::string& s) { return to_lower(normalize_ws(s)); };
    auto has_column = [&](const std::string& col) {
        for (const auto& c : jt.at("columns")) {
            if (norm(c.get<std::string>()) == norm(col)) return true;
        }
        return false;
    };
    auto has_cell = [&](const std::string& value, const std::string& col,
                        const std::string& paper) {
        if (!jt.at("rows").contains(paper)) return false;
        const auto& row = jt["rows"][paper];
        for (const auto& [c, v] : row.items()) {
            if (norm(c) != norm(col)) continue;
            const std::string cell = v.get<std::string>();
            if (cell == kEmptyCellMarker) return false;
            return norm(cell) == norm(value);
        }
        return false;
    };

    static const std::regex schema_re("^Is the column \"(.*?)\" included in the table schema\\?$");
    static const std::regex unary_re(
        "^Is \"(.*?)\" the value of column \"(.*?)\" for paper \"(.*?)\"\\?$");
    static const std::regex pairwise_re(
        "^Does the table contain both \"(.*?)\" in column \"(.*?)\" for paper \"(.*?)\" and "
        "\"(.*?)\" in column \"(.*?)\" for paper \"(.*?)\"\\?$");

    std::smatch m;
    try {
        if (std::regex_match(question, m, schema_re))
            return has_column(m[1]) ? "yes" : "no";
        if (std::regex_match(question, m, unary_re))
            return has_cell(m[1], m[2], m[3]) ? "yes" : "no";
        if (std::regex_match(question, m, pairwise_re))
            return has_cell(m[1], m[2], m[3]) && has_cell(m[4], m[5], m[6]) ? "yes" : "no";
    } catch (const nlohmann::json::exception&) {
        return "no";
    }
    return "no";
}

// Emits the canonical question named by a qa_synth_* prompt.
inline std::string synthesized_question(const ChatRequest& req) {
    const std::string prompt = detail::joined_prompt(req);
    std::smatch m;
    static const std::regex schema_re(
        "whether the column \"(.*?)\" is included in the table schema");
    static const std::regex unary_re(
        "whether \"(.*?)\" is the value of column \"(.*?)\" for paper \"(.*?)\"");
    static const std::regex pairwise_re(
        "whether the table contains both \"(.*?)\" in column \"(.*?)\" for paper \"(.*?)\" and "
        "\"(.*?)\" in column \"(.*?)\" for paper \"(.*?)\"");
    if (req.tag == "qa_synth_schema" && std::regex_search(prompt, m, schema_re))
        return canonical_schema_question(m[1]);
    if (req.tag == "qa_synth_unary" && std::regex_search(prompt, m, unary_re))
        return canonical_unary_question({m[3], m[2], m[1]});
    if (req.tag == "qa_synth_pairwise" && std::regex_search(prompt, m, pairwise_re))
        return canonical_pairwise_question({m[3], m[2], m[1]}, {m[6], m[5], m[4]});
    throw GatewayError(FailKind::protocol, "unrecognized synthesis prompt for tag " + req.tag);
}

inline void add_qa_rules(MockChatProvider& p) {
    p.add_rule({"qa_synth_schema", "", synthesized_question});
    p.add_rule({"qa_synth_unary", "", synthesized_question});
    p.add_rule({"qa_synth_pairwise", "", synthesized_question});
    p.add_rule({"qa_answer", "", faithful_answer});
}

// Generation-side rules: selection by token overlap with the demand, a fixed
// fallback schema, slug values derived from paper id + column. Everything is
// a pure function of the prompt.
inline void add_generation_rules(MockChatProvider& p) {
    p.add_rule({"one_shot", "", [](const ChatRequest& req) {
                    const std::string prompt = detail::joined_prompt(req);
                    const std::string demand = detail::line_prefixed(prompt, "User demand: ");
                    const auto blocks = detail::paper_blocks(prompt);
                    nlohmann::json selected = nlohmann::json::array();
                    nlohmann::json rows = nlohmann::json::object();
                    for (const auto& b : blocks) {
                        if (!detail::topical_match(demand, b)) continue;
                        selected.push_back(b.id);
                        rows[b.id] = detail::row_for(b, detail::default_schema());
                    }
                    return nlohmann::json{{"selected", selected},
                                          {"columns", detail::default_schema()},
                                          {"rows", rows}}
                        .dump();
                }});
    p.add_rule({"inclusion", "", [](const ChatRequest& req) {
                    const std::string prompt = detail::joined_prompt(req);
                    const std::string demand = detail::line_prefixed(prompt, "User demand: ");
                    const auto blocks = detail::paper_blocks(prompt);
                    return std::string(
                        !blocks.empty() && detail::topical_match(demand, blocks[0]) ? "yes"
                                                                                    : "no");
                }});
    p.add_rule({"per_paper_table", "", [](const ChatRequest& req) {
                    const std::string prompt = detail::joined_prompt(req);
                    const auto blocks = detail::paper_blocks(prompt);
                    if (blocks.empty())
                        throw GatewayError(FailKind::protocol, "no paper block in prompt");
                    const auto& b = blocks[0];
                    return nlohmann::json{
                        {"selected", {b.id}},
                        {"columns", detail::default_schema()},
                        {"rows", {{b.id, detail::row_for(b, detail::default_schema())}}}}
                        .dump();
                }});
    p.add_rule({"two_stage_select", "", [](const ChatRequest& req) {
                    const std::string prompt = detail::joined_prompt(req);
                    const std::string demand = detail::line_prefixed(prompt, "User demand: ");
                    nlohmann::json selected = nlohmann::json::array();
                    for (const auto& b : detail::paper_blocks(prompt))
                        if (detail::topical_match(demand, b)) selected.push_back(b.id);
                    return nlohmann::json{{"selected", selected},
                                          {"columns", detail::default_schema()}}
                        .dump();
                }});
    p.add_rule({"two_stage_row", "", [](const ChatRequest& req) {
                    const std::string prompt = detail::joined_prompt(req);
                    const std::string schema_line =
                        detail::line_prefixed(prompt, "Table columns: ");
                    std::vector<std::string> columns;
                    std::string col;
                    std::istringstream in(schema_line);
                    while (std::getline(in, col, ',')) columns.push_back(trim(col));
                    const auto blocks = detail::paper_blocks(prompt);
                    if (blocks.empty())
                        throw GatewayError(FailKind::protocol, "no paper block in prompt");
                    return nlohmann::json{{"row", detail::row_for(blocks[0], columns)}}.dump();
                }});
    p.add_rule({"key_info", "", [](const ChatRequest& req) {
                    const std::string prompt = detail::joined_prompt(req);
                    const auto blocks = detail::paper_blocks(prompt);
                    if (blocks.empty())
                        throw GatewayError(FailKind::protocol, "no paper block in prompt");
                    return "Paper " + blocks[0].id + " (" +
                           detail::first_words(blocks[0].title, 8) + "): " +
                           detail::first_words(blocks[0].abstract_text, 40);
                }});
    p.add_rule({"refine", "", [](const ChatRequest& req) {
                    const std::string prompt = detail::joined_prompt(req);
                    const std::string demand = detail::line_prefixed(prompt, "User demand: ");
                    const std::string table_line =
                        detail::line_after(prompt, "Current table, as JSON:");
                    nlohmann::json jt = nlohmann::json::parse(table_line);
                    const bool fresh = jt.at("columns").empty();

                    // Batch blocks: "Paper ID: x" followed by "Summary: ...".
                    std::vector<detail::PaperBlock> batch;
                    const auto lines = detail::lines_of(prompt);
                    for (std::size_t i = 0; i < lines.size(); ++i) {
                        if (lines[i].rfind("Paper ID: ", 0) == 0 && i + 1 < lines.size() &&
                            lines[i + 1].rfind("Summary: ", 0) == 0)
                            batch.push_back(
                                {lines[i].substr(10), "", lines[i + 1].substr(9)});
                    }

                    std::vector<std::string> columns = detail::default_schema();
                    if (!fresh) {
                        columns.clear();
                        for (const auto& c : jt["columns"])
                            columns.push_back(c.get<std::string>());
                    }
                    nlohmann::json decisions = nlohmann::json::object();
                    nlohmann::json rows = nlohmann::json::object();
                    for (const auto& b : batch) {
                        const bool in_table = jt.at("rows").contains(b.id);
                        const bool keep = detail::topical_match(demand, b);
                        decisions[b.id] = keep ? "include" : "remove";
                        if (keep && !in_table) rows[b.id] = detail::row_for(b, columns);
                    }
                    nlohmann::json out = {{"decisions", decisions}, {"rows", rows}};
                    if (fresh) out["schema_add"] = columns;
                    return out.dump();
                }});
    p.add_rule({"verify", "", [](const ChatRequest& req) {
                    const std::string prompt = detail::joined_prompt(req);
                    const std::string row_line = detail::line_after(
                        prompt, "The row currently recorded for this paper, as JSON:");
                    // Confirm every value as recorded.
                    return nlohmann::json{{"row", nlohmann::json::parse(row_line)}}.dump();
                }});
    p.add_rule({"demand_rewrite", "", [](const ChatRequest& req) {
                    const std::string prompt = detail::joined_prompt(req);
                    std::set<std::string> topics;
                    for (const auto& b : detail::paper_blocks(prompt)) {
                        for (const auto& tok : content_tokens(b.title)) {
                            topics.insert(tok);
                            if (topics.size() >= 4) break;
                        }
                        if (topics.size() >= 4) break;
                    }
                    std::string topic_text;
                    for (const auto& t : topics) {
                        if (!topic_text.empty()) topic_text += " ";
                        topic_text += t;
                    }
                    return "I need a compact comparison of the listed papers on " + topic_text +
                           ", organized so each study's setting and outcome can be read side "
                           "by side.";
                }});
}

// A provider that can stand in for a live model across the whole pipeline.
inline std::shared_ptr<MockChatProvider> make_pipeline_mock() {
    auto p = std::make_shared<MockChatProvider>("pipeline-mock");
    add_qa_rules(*p);
    add_generation_rules(*p);
    return p;
}

}  // namespace littab::mock

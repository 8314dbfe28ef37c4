#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>

#include "littab/errors.hpp"

namespace littab {

// Replaces {NAME} for every NAME present in vars. Placeholders are all-caps
// with underscores/digits, so JSON braces inside templates pass through.
inline std::string render_template(std::string_view tmpl,
                                   const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const std::size_t close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                const std::string name(tmpl.substr(i + 1, close - i - 1));
                auto it = vars.find(name);
                if (it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    return out;
}

namespace prompt_text {

inline constexpr const char* demand_rewrite =
    R"PROMPT(Given a literature review table, along with its caption, you are tasked with writing a user demand or intention for the creator of this table. The user demand should be written as though you are instructing an AI system to generate the table. Avoid directly mentioning column names in the table itself, but instead, focus on explaining why the table is needed and what information it should contain. You may include a description of the table's structure, whether it requires detailed or summarized columns. Additionally, infer the user's intentions from the titles of the papers the table will include. Limit each user demand to 1-2 sentences.
Examples of good user demands are:
I need a table that outlines how each study conceptualizes the problem, categorizes the task, describes the data analyzed, and summarizes the main findings. The table should have detailed columns for each of these aspects.
Generate a detailed table comparing the theoretical background, research methodology, and key results of these papers. You can use several columns to capture these aspects for each paper.
I want to create a table that summarizes the datasets used to evaluate different GNN models, focusing on the common features and characteristics found across the papers listed below. The table should have concise columns to highlight these dataset attributes.
Now, write a user demand for the table below. The caption of the table is "{CAPTION}". The table looks like this:
{TABLE}
The following papers are included in the table:
{PAPERS}
Write the user demand for this table. Do not include the column names in the user demand. Write a concise and clear user demand covering the function, topic, and structure of the table with one or two sentences. The user demand is:
)PROMPT";

inline constexpr const char* qa_synth_schema =
    R"PROMPT(You will evaluate the quality of a generated table by comparing it against a ground-truth table. The goal is to assess whether the generated table correctly retains the schema, individual values, and pairwise relationships. This is achieved by generating targeted QA pairs based on the ground-truth table and answering them using the generated table.
You are now performing QA pair generation based on the ground-truth table. Generate a binary (Yes/No) QA pair focusing on the schema aspect:
Schema QA Pairs: Check whether a specific column from the ground-truth table appears in the generated table schema.
Example: Is Dataset included in the table schema?
The ground-truth table, as JSON:
{TABLE}
Write exactly one schema QA question asking whether the column "{COLUMN}" is included in the table schema. The correct answer for the ground-truth table must be "yes". Reply with the question text only.
)PROMPT";

inline constexpr const char* qa_synth_unary =
    R"PROMPT(You will evaluate the quality of a generated table by comparing it against a ground-truth table. The goal is to assess whether the generated table correctly retains the schema, individual values, and pairwise relationships. This is achieved by generating targeted QA pairs based on the ground-truth table and answering them using the generated table.
You are now performing QA pair generation based on the ground-truth table. Generate a binary (Yes/No) QA pair focusing on the unary value aspect:
Unary Value QA Pairs: Check whether a specific cell value from the ground-truth table is present in the generated table.
Example: Is CL, TL the loss function for paper CN-LexNet?
The ground-truth table, as JSON:
{TABLE}
Write exactly one unary value QA question asking whether "{VALUE}" is the value of column "{COLUMN}" for paper "{PAPER_ID}". The correct answer for the ground-truth table must be "yes". Reply with the question text only.
)PROMPT";

inline constexpr const char* qa_synth_pairwise =
    R"PROMPT(You will evaluate the quality of a generated table by comparing it against a ground-truth table. The goal is to assess whether the generated table correctly retains the schema, individual values, and pairwise relationships. This is achieved by generating targeted QA pairs based on the ground-truth table and answering them using the generated table.
You are now performing QA pair generation based on the ground-truth table. Generate a binary (Yes/No) QA pair focusing on the pairwise value aspect:
Pairwise Value QA Pairs: Check whether a relationship between two values remains consistent in the generated table.
Example: Is ResNet-v2 using more evaluation metrics than GAN?
The ground-truth table, as JSON:
{TABLE}
Write exactly one pairwise value QA question asking whether the table contains both "{VALUE}" in column "{COLUMN}" for paper "{PAPER_ID}" and "{VALUE_2}" in column "{COLUMN_2}" for paper "{PAPER_ID_2}". The correct answer for the ground-truth table must be "yes". Reply with the question text only.
)PROMPT";

inline constexpr const char* qa_answer =
    R"PROMPT(You are answering QA pairs using a generated table. Provide only "yes" or "no" responses:
If the information is present in the generated table, respond with "yes."
If the information is missing or different, respond with "no."
The generated table, as JSON:
{TABLE}
Question: {QUESTION}
Answer with exactly "yes" or "no".
)PROMPT";

inline constexpr const char* one_shot =
    R"PROMPT(You are building a literature review table for a researcher.
User demand: {DEMAND}
Below are candidate papers, one block per paper. Some candidates do not belong in the table; include only the papers that serve the demand.
{PAPERS}
Design the table yourself: decide which papers to include and which columns (at least 2) best organize the information the demand asks for, then fill in every cell from the papers' content.
Reply with a single JSON object of the form
{"selected": ["<paper id>", ...], "columns": ["<column name>", ...], "rows": {"<paper id>": {"<column name>": "<value>", ...}, ...}}
Every selected paper must have a row covering every column; use "-" when a paper does not report a value. Do not add any text outside the JSON object.
)PROMPT";

inline constexpr const char* repair =
    R"PROMPT(Your previous reply could not be parsed as the required JSON object. The previous reply was:
{REPLY}
Reply again with only a single JSON object of the form
{"selected": ["<paper id>", ...], "columns": ["<column name>", ...], "rows": {"<paper id>": {"<column name>": "<value>", ...}, ...}}
Do not add any text outside the JSON object.
)PROMPT";

inline constexpr const char* inclusion =
    R"PROMPT(A researcher is building a literature review table.
User demand: {DEMAND}
Candidate paper:
{PAPERS}
Should this paper be included in the table? Answer with exactly "yes" or "no".
)PROMPT";

inline constexpr const char* per_paper_table =
    R"PROMPT(A researcher is building a literature review table.
User demand: {DEMAND}
Paper:
{PAPERS}
Create a one-row literature review table for this single paper: choose the columns (at least 2) that best serve the demand and fill the row from the paper's content.
Reply with a single JSON object of the form
{"selected": ["<paper id>"], "columns": ["<column name>", ...], "rows": {"<paper id>": {"<column name>": "<value>", ...}}}
Use "-" when the paper does not report a value. Do not add any text outside the JSON object.
)PROMPT";

inline constexpr const char* two_stage_select =
    R"PROMPT(A researcher is building a literature review table.
User demand: {DEMAND}
Below are the titles and abstracts of the candidate papers. Some candidates do not belong in the table.
{PAPERS}
Decide which papers to include and design the table schema: at least 2 column names that organize the information the demand asks for. Do not fill in values yet.
Reply with a single JSON object of the form
{"selected": ["<paper id>", ...], "columns": ["<column name>", ...]}
Do not add any text outside the JSON object.
)PROMPT";

inline constexpr const char* two_stage_row =
    R"PROMPT(A researcher is filling in a literature review table with a fixed schema.
User demand: {DEMAND}
Table columns: {SCHEMA}
Paper:
{PAPERS}
Fill in this paper's row from its full text.
Reply with a single JSON object of the form
{"row": {"<column name>": "<value>", ...}}
covering every column exactly; use "-" when the paper does not report a value. Do not add any text outside the JSON object.
)PROMPT";

inline constexpr const char* key_info =
    R"PROMPT(A researcher is building a literature review table and needs a condensed briefing on one paper.
User demand: {DEMAND}
Paper:
{PAPERS}
Extract the key information from this paper that is relevant to the demand: the problem it addresses, its approach, data, and main findings, keeping any concrete names and numbers a table cell might cite. Write one concise paragraph of at most {WORD_CAP} words. Reply with the paragraph only.
)PROMPT";

inline constexpr const char* refine =
    R"PROMPT(You are iteratively refining a literature review table.
User demand: {DEMAND}
Current table, as JSON:
{TABLE}
Current batch of candidate papers, summarized:
{BATCH}
For each paper in the batch, decide whether it should be included in or removed from the table. Refine the schema based on the current batch: you may add or remove columns (the table must keep at least 2) and reformat values for uniformity. For papers deemed suitable for inclusion that are not in the current table, insert a new row according to the refined schema.
Reply with a single JSON object of the form
{"decisions": {"<paper id>": "include" | "remove", ...}, "schema_add": ["<column name>", ...], "schema_remove": ["<column name>", ...], "rows": {"<paper id>": {"<column name>": "<value>", ...}, ...}, "value_edits": [{"paper": "<paper id>", "column": "<column name>", "value": "<new value>"}, ...]}
List a decision for every paper in the batch. "rows" carries full rows for newly included papers; "value_edits" adjusts single cells of existing rows. Use "-" for values a paper does not report. Do not add any text outside the JSON object.
)PROMPT";

inline constexpr const char* verify =
    R"PROMPT(You are verifying one row of a literature review table against its source paper.
User demand: {DEMAND}
Table columns: {SCHEMA}
The row currently recorded for this paper, as JSON:
{ROW}
Paper:
{PAPERS}
Revisit the full text and verify each cell: confirm values that the paper supports and correct values that it contradicts. Keep the schema exactly as given.
Reply with a single JSON object of the form
{"row": {"<column name>": "<value>", ...}}
covering every column exactly; use "-" when the paper does not report a value. Do not add any text outside the JSON object.
)PROMPT";

}  // namespace prompt_text

class PromptLibrary {
public:
    static PromptLibrary defaults() {
        PromptLibrary lib;
        lib.templates_ = {
            {"demand_rewrite", prompt_text::demand_rewrite},
            {"qa_synth_schema", prompt_text::qa_synth_schema},
            {"qa_synth_unary", prompt_text::qa_synth_unary},
            {"qa_synth_pairwise", prompt_text::qa_synth_pairwise},
            {"qa_answer", prompt_text::qa_answer},
            {"one_shot", prompt_text::one_shot},
            {"repair", prompt_text::repair},
            {"inclusion", prompt_text::inclusion},
            {"per_paper_table", prompt_text::per_paper_table},
            {"two_stage_select", prompt_text::two_stage_select},
            {"two_stage_row", prompt_text::two_stage_row},
            {"key_info", prompt_text::key_info},
            {"refine", prompt_text::refine},
            {"verify", prompt_text::verify},
        };
        return lib;
    }

    // Overlays any *.txt found in dir over the defaults (file stem = name).
    static PromptLibrary from_dir(const std::filesystem::path& dir) {
        PromptLibrary lib = defaults();
        if (!std::filesystem::is_directory(dir))
            throw ConfigError("prompt directory not found: " + dir.string());
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.path().extension() != ".txt") continue;
            std::ifstream in(entry.path(), std::ios::binary);
            lib.templates_[entry.path().stem().string()] =
                std::string((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        }
        return lib;
    }

    const std::string& get(const std::string& name) const {
        auto it = templates_.find(name);
        if (it == templates_.end()) throw ConfigError("unknown prompt template: " + name);
        return it->second;
    }

    std::string render(const std::string& name,
                       const std::map<std::string, std::string>& vars) const {
        return render_template(get(name), vars);
    }

    const std::map<std::string, std::string>& all() const { return templates_; }

private:
    std::map<std::string, std::string> templates_;
};

}  // namespace littab

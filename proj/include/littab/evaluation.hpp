#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "littab/corpus.hpp"
#include "littab/errors.hpp"
#include "littab/generation.hpp"
#include "littab/llm_gateway.hpp"
#include "littab/prompts.hpp"
#include "littab/text.hpp"

namespace littab {

enum class Aspect { schema, unary, pairwise };

inline const char* to_string(Aspect a) {
    switch (a) {
        case Aspect::schema: return "schema";
        case Aspect::unary: return "unary";
        default: return "pairwise";
    }
}

struct CellRef {
    std::string paper_id;
    std::string column;
    std::string value;
};

// Questions assert facts of their source table, so the expected answer is
// always yes; provenance is recorded mechanically, never taken from the
// model's question text.
struct QAPair {
    Aspect aspect = Aspect::schema;
    std::string question;
    std::string column;  // schema aspect
    CellRef cell;        // unary + pairwise
    CellRef cell2;       // pairwise only
};

// Uniform read-only view over ground-truth and generated tables.
struct TableView {
    const std::vector<std::string>* columns;
    const std::map<std::string, std::map<std::string, std::string>>* rows;

    TableView(const LiteratureTable& t) : columns(&t.columns), rows(&t.rows) {}
    TableView(const DraftTable& t) : columns(&t.columns), rows(&t.rows) {}

    bool empty() const { return columns->empty() && rows->empty(); }

    std::vector<CellRef> non_empty_cells() const {
        std::vector<CellRef> cells;
        for (const auto& [id, row] : *rows) {
            for (const auto& col : *columns) {
                const auto it = row.find(col);
                if (it != row.end() && !it->second.empty())
                    cells.push_back({id, col, it->second});
            }
        }
        return cells;
    }
};

// Canonical question wording; the scripted providers emit and parse exactly
// these forms.
inline std::string canonical_schema_question(const std::string& column) {
    return "Is the column \"" + column + "\" included in the table schema?";
}

inline std::string canonical_unary_question(const CellRef& cell) {
    return "Is \"" + cell.value + "\" the value of column \"" + cell.column + "\" for paper \"" +
           cell.paper_id + "\"?";
}

inline std::string canonical_pairwise_question(const CellRef& a, const CellRef& b) {
    return "Does the table contain both \"" + a.value + "\" in column \"" + a.column +
           "\" for paper \"" + a.paper_id + "\" and \"" + b.value + "\" in column \"" +
           b.column + "\" for paper \"" + b.paper_id + "\"?";
}

struct EvalOptions {
    std::string model = "mock";
    double temperature = 0.5;
    std::size_t pairwise_samples = 10;
    std::uint64_t seed = 0;
};

namespace detail {

inline ChatRequest eval_request(const EvalOptions& opts, std::string prompt, std::string tag) {
    ChatRequest req;
    req.model = opts.model;
    req.temperature = opts.temperature;
    req.tag = std::move(tag);
    req.messages = {{"user", std::move(prompt)}};
    return req;
}

}  // namespace detail

// One schema question per column, one unary question per non-empty cell,
// min(pairwise_samples, C(cells,2)) pairwise questions sampled uniformly
// without replacement. Question text comes from the model; provenance is
// mechanical.
inline std::vector<QAPair> synthesize_qas(LlmGateway& gw, const PromptLibrary& prompts,
                                          const TableView& source, const EvalOptions& opts) {
    const std::string table_json = prompt_table_json(*source.columns, *source.rows);
    std::vector<QAPair> qas;
    std::vector<ChatRequest> reqs;

    for (const auto& col : *source.columns) {
        QAPair qa;
        qa.aspect = Aspect::schema;
        qa.column = col;
        qas.push_back(qa);
        reqs.push_back(detail::eval_request(
            opts,
            prompts.render("qa_synth_schema", {{"TABLE", table_json}, {"COLUMN", col}}),
            "qa_synth_schema"));
    }

    const std::vector<CellRef> cells = source.non_empty_cells();
    for (const auto& cell : cells) {
        QAPair qa;
        qa.aspect = Aspect::unary;
        qa.cell = cell;
        qas.push_back(qa);
        reqs.push_back(detail::eval_request(
            opts,
            prompts.render("qa_synth_unary", {{"TABLE", table_json},
                                              {"VALUE", cell.value},
                                              {"COLUMN", cell.column},
                                              {"PAPER_ID", cell.paper_id}}),
            "qa_synth_unary"));
    }

    if (cells.size() >= 2) {
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        pairs.reserve(cells.size() * (cells.size() - 1) / 2);
        for (std::size_t i = 0; i + 1 < cells.size(); ++i)
            for (std::size_t j = i + 1; j < cells.size(); ++j) pairs.emplace_back(i, j);
        const std::size_t want = std::min<std::size_t>(opts.pairwise_samples, pairs.size());
        std::mt19937_64 rng(opts.seed);
        for (std::size_t i = 0; i < want; ++i)
            std::swap(pairs[i], pairs[uniform_in(rng, i, pairs.size() - 1)]);
        pairs.resize(want);
        std::sort(pairs.begin(), pairs.end());
        for (const auto& [i, j] : pairs) {
            QAPair qa;
            qa.aspect = Aspect::pairwise;
            qa.cell = cells[i];
            qa.cell2 = cells[j];
            qas.push_back(qa);
            reqs.push_back(detail::eval_request(
                opts,
                prompts.render("qa_synth_pairwise", {{"TABLE", table_json},
                                                     {"VALUE", cells[i].value},
                                                     {"COLUMN", cells[i].column},
                                                     {"PAPER_ID", cells[i].paper_id},
                                                     {"VALUE_2", cells[j].value},
                                                     {"COLUMN_2", cells[j].column},
                                                     {"PAPER_ID_2", cells[j].paper_id}}),
                "qa_synth_pairwise"));
        }
    }

    const auto replies = gw.chat_batch(reqs);
    for (std::size_t i = 0; i < qas.size(); ++i) {
        qas[i].question = trim(replies[i].content);
        if (qas[i].question.empty())
            throw EvaluationError("empty question text from synthesizer");
    }
    return qas;
}

// One verdict per question; malformed output counts as no. An empty target
// table answers everything no without touching the provider.
inline std::vector<bool> answer_qas(LlmGateway& gw, const PromptLibrary& prompts,
                                    const TableView& target, const std::vector<QAPair>& qas,
                                    const EvalOptions& opts) {
    if (qas.empty()) return {};
    if (target.empty()) return std::vector<bool>(qas.size(), false);
    const std::string table_json = prompt_table_json(*target.columns, *target.rows);
    std::vector<ChatRequest> reqs;
    reqs.reserve(qas.size());
    for (const auto& qa : qas)
        reqs.push_back(detail::eval_request(
            opts,
            prompts.render("qa_answer", {{"TABLE", table_json}, {"QUESTION", qa.question}}),
            "qa_answer"));
    const auto replies = gw.chat_batch(reqs);
    std::vector<bool> verdicts;
    verdicts.reserve(qas.size());
    for (const auto& r : replies) verdicts.push_back(starts_with_yes(r.content));
    return verdicts;
}

inline double yes_ratio(const std::vector<bool>& verdicts) {
    if (verdicts.empty()) return 0.0;
    std::size_t yes = 0;
    for (bool v : verdicts) yes += v ? 1 : 0;
    return static_cast<double>(yes) / static_cast<double>(verdicts.size());
}

inline double f1(double p, double r) {
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

inline double paper_selection_recall(const std::set<std::string>& selected,
                                     const std::set<std::string>& gt_rows) {
    if (gt_rows.empty()) throw EvaluationError("paper recall: empty ground-truth set");
    std::size_t hit = 0;
    for (const auto& id : gt_rows) hit += selected.count(id);
    return static_cast<double>(hit) / static_cast<double>(gt_rows.size());
}

struct AspectScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t recall_total = 0, recall_yes = 0;
    std::size_t precision_total = 0, precision_yes = 0;
    bool degenerate = false;  // a direction had zero questions
};

struct EvalReport {
    AspectScores schema, unary, pairwise;
    double paper_recall = 0.0;
    double avg_f1 = 0.0;
    bool degenerate = false;

    nlohmann::json to_json() const {
        auto aspect = [](const AspectScores& a) {
            return nlohmann::json{{"precision", a.precision},
                                  {"recall", a.recall},
                                  {"f1", a.f1},
                                  {"recall_total", a.recall_total},
                                  {"recall_yes", a.recall_yes},
                                  {"precision_total", a.precision_total},
                                  {"precision_yes", a.precision_yes},
                                  {"degenerate", a.degenerate}};
        };
        return {{"schema", aspect(schema)},       {"unary", aspect(unary)},
                {"pairwise", aspect(pairwise)},   {"paper_recall", paper_recall},
                {"avg_f1", avg_f1},               {"degenerate", degenerate}};
    }

    static EvalReport from_json(const nlohmann::json& j) {
        auto aspect = [](const nlohmann::json& a) {
            AspectScores s;
            s.precision = a.at("precision").get<double>();
            s.recall = a.at("recall").get<double>();
            s.f1 = a.at("f1").get<double>();
            s.recall_total = a.at("recall_total").get<std::size_t>();
            s.recall_yes = a.at("recall_yes").get<std::size_t>();
            s.precision_total = a.at("precision_total").get<std::size_t>();
            s.precision_yes = a.at("precision_yes").get<std::size_t>();
            s.degenerate = a.at("degenerate").get<bool>();
            return s;
        };
        EvalReport r;
        r.schema = aspect(j.at("schema"));
        r.unary = aspect(j.at("unary"));
        r.pairwise = aspect(j.at("pairwise"));
        r.paper_recall = j.at("paper_recall").get<double>();
        r.avg_f1 = j.at("avg_f1").get<double>();
        r.degenerate = j.at("degenerate").get<bool>();
        return r;
    }
};

// Recall direction: QAs from the ground truth answered against the
// generated table. Precision direction: the reverse. Scores are fractions
// in [0,1]; conversion to Table-style percent happens at reporting.
inline EvalReport evaluate_pair(LlmGateway& gw, const PromptLibrary& prompts,
                                const LiteratureTable& gt, const DraftTable& gen,
                                const EvalOptions& opts) {
    EvalOptions gt_opts = opts;
    EvalOptions gen_opts = opts;
    gen_opts.seed = mix_seed(opts.seed, 1);

    const TableView gt_view(gt);
    const TableView gen_view(gen);

    const std::vector<QAPair> gt_qas = synthesize_qas(gw, prompts, gt_view, gt_opts);
    const std::vector<QAPair> gen_qas =
        gen_view.empty() ? std::vector<QAPair>{}
                         : synthesize_qas(gw, prompts, gen_view, gen_opts);

    const std::vector<bool> recall_verdicts = answer_qas(gw, prompts, gen_view, gt_qas, opts);
    const std::vector<bool> precision_verdicts =
        answer_qas(gw, prompts, gt_view, gen_qas, opts);

    EvalReport report;
    for (Aspect aspect : {Aspect::schema, Aspect::unary, Aspect::pairwise}) {
        std::vector<bool> rec, prec;
        for (std::size_t i = 0; i < gt_qas.size(); ++i)
            if (gt_qas[i].aspect == aspect) rec.push_back(recall_verdicts[i]);
        for (std::size_t i = 0; i < gen_qas.size(); ++i)
            if (gen_qas[i].aspect == aspect) prec.push_back(precision_verdicts[i]);
        AspectScores s;
        s.recall_total = rec.size();
        s.recall_yes = static_cast<std::size_t>(std::count(rec.begin(), rec.end(), true));
        s.precision_total = prec.size();
        s.precision_yes = static_cast<std::size_t>(std::count(prec.begin(), prec.end(), true));
        s.recall = yes_ratio(rec);
        s.precision = yes_ratio(prec);
        s.f1 = f1(s.precision, s.recall);
        s.degenerate = rec.empty() || prec.empty();
        switch (aspect) {
            case Aspect::schema: report.schema = s; break;
            case Aspect::unary: report.unary = s; break;
            default: report.pairwise = s; break;
        }
    }
    report.avg_f1 = (report.schema.f1 + report.unary.f1 + report.pairwise.f1) / 3.0;

    std::set<std::string> gt_rows;
    for (const auto& [id, _] : gt.rows) gt_rows.insert(id);
    report.paper_recall = paper_selection_recall(gen.selected_ids, gt_rows);
    report.degenerate =
        report.schema.degenerate || report.unary.degenerate || report.pairwise.degenerate;
    return report;
}

}  // namespace littab

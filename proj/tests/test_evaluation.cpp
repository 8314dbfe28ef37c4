#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "littab/evaluation.hpp"
#include "littab/mock_pipeline.hpp"

using namespace littab;

namespace {

const std::filesystem::path kFixtures = LITTAB_FIXTURE_DIR;

GatewayConfig quiet_cfg() {
    GatewayConfig cfg;
    cfg.cache_dir.clear();
    cfg.retry.base_delay = std::chrono::milliseconds(1);
    cfg.sleep = [](std::chrono::milliseconds) {};
    return cfg;
}

const BenchmarkInstance& find_instance(const Corpus& c, const std::string& table_id) {
    for (const auto& inst : c.instances)
        if (inst.table.table_id == table_id) return inst;
    throw CorpusError("no instance " + table_id);
}

DraftTable as_draft(const LiteratureTable& gt) {
    DraftTable d;
    d.columns = gt.columns;
    d.rows = gt.rows;
    for (const auto& [id, _] : gt.rows) d.selected_ids.insert(id);
    return d;
}

LiteratureTable five_cell_table() {
    LiteratureTable t;
    t.table_id = "X";
    t.user_demand = "d";
    t.columns = {"A", "B"};
    t.rows["p1"] = {{"A", "a1"}, {"B", "b1"}};
    t.rows["p2"] = {{"A", "a2"}, {"B", ""}};
    t.rows["p3"] = {{"A", "a3"}, {"B", "b3"}};
    return t;
}

}  // namespace

TEST_CASE("canonical question wording is fixed") {
    CHECK(canonical_schema_question("Task") ==
          "Is the column \"Task\" included in the table schema?");
    const CellRef cell{"p1", "Task", "NMT"};
    CHECK(canonical_unary_question(cell) ==
          "Is \"NMT\" the value of column \"Task\" for paper \"p1\"?");
    const CellRef other{"p2", "Dataset", "WMT"};
    CHECK(canonical_pairwise_question(cell, other) ==
          "Does the table contain both \"NMT\" in column \"Task\" for paper \"p1\" "
          "and \"WMT\" in column \"Dataset\" for paper \"p2\"?");
}

TEST_CASE("table views enumerate only non-empty cells") {
    const LiteratureTable t = five_cell_table();
    const TableView view(t);
    CHECK_FALSE(view.empty());
    const auto cells = view.non_empty_cells();
    REQUIRE(cells.size() == 5);
    // row order is the map order, column order is schema order
    CHECK(cells[0].paper_id == "p1");
    CHECK(cells[0].column == "A");
    CHECK(cells[1].column == "B");
    CHECK(cells[2].paper_id == "p2");
    CHECK(cells[2].value == "a2");
    CHECK(cells[3].paper_id == "p3");

    const DraftTable empty;
    CHECK(TableView(empty).empty());
    CHECK(TableView(empty).non_empty_cells().empty());
}

TEST_CASE("F1 is the harmonic mean with a zero guard") {
    CHECK(f1(0.0, 0.0) == 0.0);
    CHECK(f1(1.0, 0.0) == 0.0);
    CHECK_THAT(f1(0.419, 0.554), Catch::Matchers::WithinAbs(0.477, 0.0005));
    CHECK_THAT(f1(0.515, 0.594), Catch::Matchers::WithinAbs(0.552, 0.0005));
    for (double x : {0.1, 0.25, 0.5, 0.9, 1.0})
        CHECK_THAT(f1(x, x), Catch::Matchers::WithinAbs(x, 1e-12));
    for (double p = 0.0; p <= 1.0; p += 0.125) {
        for (double r = 0.0; r <= 1.0; r += 0.125) {
            const double v = f1(p, r);
            CHECK(v >= 0.0);
            CHECK(v <= std::max(p, r) + 1e-12);
            if (p > 0 && r > 0) CHECK(v >= std::min(p, r) - 1e-12);
        }
    }
}

TEST_CASE("yes ratio") {
    CHECK(yes_ratio({}) == 0.0);
    CHECK(yes_ratio({true, false, true, true}) == 0.75);
    CHECK(yes_ratio({false}) == 0.0);
}

TEST_CASE("paper selection recall counts ground-truth rows recovered") {
    const std::set<std::string> gt{"p1", "p2", "p3", "p4"};
    CHECK(paper_selection_recall({"p1", "p3"}, gt) == 0.5);
    CHECK(paper_selection_recall({"p1", "p2", "p3", "p4", "extra"}, gt) == 1.0);
    CHECK(paper_selection_recall({}, gt) == 0.0);
    CHECK_THROWS_AS(paper_selection_recall({"p1"}, {}), EvaluationError);
}

TEST_CASE("QA synthesis counts one per column, one per cell, capped pairs") {
    const Corpus c = load_corpus(kFixtures / "corpus3");
    LlmGateway gw(mock::make_pipeline_mock(), quiet_cfg());
    const PromptLibrary prompts = PromptLibrary::defaults();
    EvalOptions opts;
    opts.seed = 7;

    SECTION("three columns, nine cells") {
        const auto& t = find_instance(c, "T2").table;  // 3 cols x 3 full rows
        const auto qas = synthesize_qas(gw, prompts, TableView(t), opts);
        std::size_t schema = 0, unary = 0, pairwise = 0;
        for (const auto& qa : qas) {
            schema += qa.aspect == Aspect::schema;
            unary += qa.aspect == Aspect::unary;
            pairwise += qa.aspect == Aspect::pairwise;
        }
        CHECK(schema == 3);
        CHECK(unary == 9);
        CHECK(pairwise == 10);  // min(10, C(9,2)=36)
    }
    SECTION("an empty cell drops out of the unary and pairwise pools") {
        const auto& t = find_instance(c, "T3").table;  // 2 cols, rows p06 full + p07 with one gap
        const auto qas = synthesize_qas(gw, prompts, TableView(t), opts);
        std::size_t schema = 0, unary = 0, pairwise = 0;
        for (const auto& qa : qas) {
            schema += qa.aspect == Aspect::schema;
            unary += qa.aspect == Aspect::unary;
            pairwise += qa.aspect == Aspect::pairwise;
        }
        CHECK(schema == 2);
        CHECK(unary == 3);
        CHECK(pairwise == 3);  // C(3,2), below the cap
    }
    SECTION("question text is the scripted canonical form") {
        const auto& t = find_instance(c, "T1").table;
        const auto qas = synthesize_qas(gw, prompts, TableView(t), opts);
        for (const auto& qa : qas) {
            switch (qa.aspect) {
                case Aspect::schema:
                    CHECK(qa.question == canonical_schema_question(qa.column));
                    break;
                case Aspect::unary:
                    CHECK(qa.question == canonical_unary_question(qa.cell));
                    break;
                case Aspect::pairwise:
                    CHECK(qa.question == canonical_pairwise_question(qa.cell, qa.cell2));
                    break;
            }
        }
    }
}

TEST_CASE("pairwise sampling is seeded, without replacement, and covers") {
    LlmGateway gw(mock::make_pipeline_mock(), quiet_cfg());
    const PromptLibrary prompts = PromptLibrary::defaults();
    const LiteratureTable t = five_cell_table();  // C(5,2) = 10 possible pairs
    EvalOptions opts;
    opts.pairwise_samples = 4;

    auto pair_key = [](const QAPair& qa) {
        return qa.cell.paper_id + "/" + qa.cell.column + "+" + qa.cell2.paper_id + "/" +
               qa.cell2.column;
    };
    auto sampled_pairs = [&](std::uint64_t seed) {
        EvalOptions o = opts;
        o.seed = seed;
        std::vector<std::string> keys;
        for (const auto& qa : synthesize_qas(gw, prompts, TableView(t), o))
            if (qa.aspect == Aspect::pairwise) keys.push_back(pair_key(qa));
        return keys;
    };

    SECTION("same seed replays, pairs unique") {
        const auto a = sampled_pairs(42);
        const auto b = sampled_pairs(42);
        CHECK(a == b);
        CHECK(a.size() == 4);
        CHECK(std::set<std::string>(a.begin(), a.end()).size() == 4);
    }
    SECTION("every pair is reachable across seeds") {
        std::set<std::string> seen;
        for (std::uint64_t seed = 0; seed < 60 && seen.size() < 10; ++seed) {
            const auto keys = sampled_pairs(seed);
            seen.insert(keys.begin(), keys.end());
        }
        CHECK(seen.size() == 10);
    }
    SECTION("requesting more pairs than exist yields them all") {
        EvalOptions o = opts;
        o.pairwise_samples = 50;
        std::set<std::string> keys;
        for (const auto& qa : synthesize_qas(gw, prompts, TableView(t), o))
            if (qa.aspect == Aspect::pairwise) keys.insert(pair_key(qa));
        CHECK(keys.size() == 10);
    }
}

TEST_CASE("empty question text from the synthesizer is an error") {
    auto mock = std::make_shared<MockChatProvider>();
    mock->add_rule({"qa_synth_schema", "", [](const ChatRequest&) { return "  "; }});
    mock->add_rule({"", "", [](const ChatRequest&) { return "ok question"; }});
    LlmGateway gw(mock, quiet_cfg());
    const PromptLibrary prompts = PromptLibrary::defaults();
    const LiteratureTable t = five_cell_table();
    CHECK_THROWS_AS(synthesize_qas(gw, prompts, TableView(t), EvalOptions{}),
                    EvaluationError);
}

TEST_CASE("answering maps malformed verdicts to no") {
    auto mock = std::make_shared<MockChatProvider>();
    mock->add_rule({"qa_answer", "affirmative",
                    [](const ChatRequest&) { return "Yes, it does."; }});
    mock->add_rule({"qa_answer", "lowercase", [](const ChatRequest&) { return "yes."; }});
    mock->add_rule({"qa_answer", "prefix-only",
                    [](const ChatRequest&) { return "yesterday it did"; }});
    mock->add_rule({"qa_answer", "", [](const ChatRequest&) { return "maybe?"; }});
    LlmGateway gw(mock, quiet_cfg());
    const PromptLibrary prompts = PromptLibrary::defaults();

    std::vector<QAPair> qas(4);
    qas[0].question = "affirmative";
    qas[1].question = "lowercase";
    qas[2].question = "prefix-only";
    qas[3].question = "hedged";
    const LiteratureTable t = five_cell_table();
    const auto verdicts = answer_qas(gw, prompts, TableView(t), qas, EvalOptions{});
    CHECK(verdicts == std::vector<bool>{true, true, false, false});
}

TEST_CASE("an empty target answers everything no without provider calls") {
    auto mock = mock::make_pipeline_mock();
    LlmGateway gw(mock, quiet_cfg());
    const PromptLibrary prompts = PromptLibrary::defaults();
    std::vector<QAPair> qas(3);
    for (auto& qa : qas) qa.question = "q";
    const DraftTable empty;
    const auto verdicts = answer_qas(gw, prompts, TableView(empty), qas, EvalOptions{});
    CHECK(verdicts == std::vector<bool>{false, false, false});
    CHECK(mock->calls_for_tag("qa_answer") == 0);
    CHECK(answer_qas(gw, prompts, TableView(empty), {}, EvalOptions{}).empty());
}

TEST_CASE("a faithful copy of the ground truth scores perfectly") {
    const Corpus c = load_corpus(kFixtures / "corpus3");
    auto mock = mock::make_pipeline_mock();
    LlmGateway gw(mock, quiet_cfg());
    const PromptLibrary prompts = PromptLibrary::defaults();
    EvalOptions opts;
    opts.seed = 3;

    for (const auto& inst : c.instances) {
        INFO("table " << inst.table.table_id);
        const EvalReport r = evaluate_pair(gw, prompts, inst.table, as_draft(inst.table), opts);
        for (const AspectScores* s : {&r.schema, &r.unary, &r.pairwise}) {
            CHECK(s->precision == 1.0);
            CHECK(s->recall == 1.0);
            CHECK(s->f1 == 1.0);
            CHECK_FALSE(s->degenerate);
        }
        CHECK(r.avg_f1 == 1.0);
        CHECK(r.paper_recall == 1.0);
        CHECK_FALSE(r.degenerate);
    }
}

TEST_CASE("question and verdict counts line up across both directions") {
    const Corpus c = load_corpus(kFixtures / "corpus3");
    auto mock = mock::make_pipeline_mock();
    LlmGateway gw(mock, quiet_cfg());
    const PromptLibrary prompts = PromptLibrary::defaults();
    const auto& inst = find_instance(c, "T2");
    const EvalReport r =
        evaluate_pair(gw, prompts, inst.table, as_draft(inst.table), EvalOptions{});
    CHECK(r.schema.recall_total == 3);
    CHECK(r.unary.recall_total == 9);
    CHECK(r.pairwise.recall_total == 10);
    CHECK(r.schema.precision_total == 3);
    CHECK(r.unary.precision_total == 9);
    CHECK(r.pairwise.precision_total == 10);
    CHECK(r.schema.recall_yes == 3);
    CHECK(r.pairwise.precision_yes == 10);
    // 22 questions per direction, each answered once
    CHECK(mock->calls_for_tag("qa_answer") == 44);
}

TEST_CASE("hallucinated rows cost precision but not recall") {
    const Corpus c = load_corpus(kFixtures / "corpus3");
    LlmGateway gw(mock::make_pipeline_mock(), quiet_cfg());
    const PromptLibrary prompts = PromptLibrary::defaults();
    const auto& inst = find_instance(c, "T1");

    DraftTable gen = as_draft(inst.table);
    gen.rows["p09"] = {{"Task", "Invented task"}, {"Dataset", "Invented set"}};
    gen.selected_ids.insert("p09");

    EvalOptions opts;
    opts.seed = 11;
    const EvalReport r = evaluate_pair(gw, prompts, inst.table, gen, opts);
    CHECK(r.schema.f1 == 1.0);
    CHECK(r.unary.recall == 1.0);       // every ground-truth fact still present
    CHECK(r.unary.precision < 1.0);     // invented facts are not in the ground truth
    CHECK(r.pairwise.recall == 1.0);
    CHECK(r.paper_recall == 1.0);
    CHECK(r.unary.precision_total == 6);
    CHECK(r.unary.precision_yes == 4);
}

TEST_CASE("dropped rows cost recall but not precision") {
    const Corpus c = load_corpus(kFixtures / "corpus3");
    LlmGateway gw(mock::make_pipeline_mock(), quiet_cfg());
    const PromptLibrary prompts = PromptLibrary::defaults();
    const auto& inst = find_instance(c, "T2");

    DraftTable gen = as_draft(inst.table);
    gen.rows.erase("p05");
    gen.selected_ids.erase("p05");

    const EvalReport r = evaluate_pair(gw, prompts, inst.table, gen, EvalOptions{});
    CHECK(r.unary.precision == 1.0);
    CHECK(r.unary.recall_total == 9);
    CHECK(r.unary.recall_yes == 6);
    CHECK_THAT(r.unary.recall, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    CHECK_THAT(r.paper_recall, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
}

TEST_CASE("an empty generated table scores zero everywhere") {
    const Corpus c = load_corpus(kFixtures / "corpus3");
    auto mock = mock::make_pipeline_mock();
    LlmGateway gw(mock, quiet_cfg());
    const PromptLibrary prompts = PromptLibrary::defaults();
    const auto& inst = find_instance(c, "T1");

    const EvalReport r =
        evaluate_pair(gw, prompts, inst.table, DraftTable{}, EvalOptions{});
    for (const AspectScores* s : {&r.schema, &r.unary, &r.pairwise}) {
        CHECK(s->precision == 0.0);
        CHECK(s->recall == 0.0);
        CHECK(s->f1 == 0.0);
        CHECK(s->precision_total == 0);
        CHECK(s->degenerate);
    }
    CHECK(r.avg_f1 == 0.0);
    CHECK(r.paper_recall == 0.0);
    CHECK(r.degenerate);
    // nothing was synthesized from or answered against the empty side
    CHECK(mock->calls_for_tag("qa_answer") == 0);
}

TEST_CASE("evaluation refuses a ground truth with no rows") {
    LlmGateway gw(mock::make_pipeline_mock(), quiet_cfg());
    const PromptLibrary prompts = PromptLibrary::defaults();
    LiteratureTable gt;
    gt.table_id = "E";
    gt.user_demand = "d";
    gt.columns = {"A", "B"};
    DraftTable gen;
    gen.columns = {"A", "B"};
    gen.selected_ids = {"p1"};
    gen.rows["p1"] = {{"A", "x"}, {"B", "y"}};
    CHECK_THROWS_AS(evaluate_pair(gw, prompts, gt, gen, EvalOptions{}), EvaluationError);
}

TEST_CASE("evaluation reports round-trip through JSON") {
    EvalReport r;
    r.schema = {0.5, 0.25, f1(0.5, 0.25), 4, 1, 2, 1, false};
    r.unary = {1.0, 1.0, 1.0, 9, 9, 9, 9, false};
    r.pairwise = {0.0, 0.0, 0.0, 0, 0, 0, 0, true};
    r.paper_recall = 0.75;
    r.avg_f1 = (r.schema.f1 + 1.0 + 0.0) / 3.0;
    r.degenerate = true;

    const EvalReport back = EvalReport::from_json(r.to_json());
    CHECK(back.schema.precision == 0.5);
    CHECK(back.schema.recall == 0.25);
    CHECK(back.schema.recall_total == 4);
    CHECK(back.unary.f1 == 1.0);
    CHECK(back.pairwise.degenerate);
    CHECK(back.paper_recall == 0.75);
    CHECK(back.avg_f1 == r.avg_f1);
    CHECK(back.degenerate);
}

// Command-line front end: corpus inspection, retrieval simulation, table
// generation, QA evaluation, and grid runs, against live providers or the
// built-in scripted ones.

#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "littab/corpus.hpp"
#include "littab/embedding.hpp"
#include "littab/evaluation.hpp"
#include "littab/generation.hpp"
#include "littab/http_client.hpp"
#include "littab/mock_pipeline.hpp"
#include "littab/runner.hpp"

using namespace littab;
namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string corpus_dir;
    std::string output_dir;
    std::string cache_dir;
    std::string methods;
    std::uint64_t seed = 0;
    std::size_t sample_n = 0;
    std::size_t k = 0;
    bool mock = false;

    bool seed_set = false, sample_set = false, k_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration JSON");
    cmd->add_option("--corpus", args.corpus_dir, "corpus directory (overrides config)");
    cmd->add_option("--output", args.output_dir, "output directory (overrides config)");
    cmd->add_option("--cache", args.cache_dir, "response cache directory (overrides config)");
    cmd->add_option("--seed", args.seed, "base seed (overrides config)")
        ->each([&](const std::string&) { args.seed_set = true; });
    cmd->add_option("--methods", args.methods,
                    "comma-separated subset of one_shot,per_paper,two_stage,iterative");
    cmd->add_option("--sample-n", args.sample_n, "evaluate a deterministic instance sample")
        ->each([&](const std::string&) { args.sample_set = true; });
    cmd->add_option("--k", args.k, "refinement iterations (overrides config)")
        ->each([&](const std::string&) { args.k_set = true; });
    cmd->add_flag("--mock", args.mock, "use the scripted offline providers");
}

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = load_config(args.config_path);
    if (!args.corpus_dir.empty()) cfg.corpus_dir = args.corpus_dir;
    if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
    if (!args.cache_dir.empty()) cfg.cache_dir = args.cache_dir;
    if (args.seed_set) cfg.seed = args.seed;
    if (args.sample_set) cfg.sample_n = args.sample_n;
    if (args.k_set) cfg.k = args.k;
    if (args.mock) cfg.mock = true;
    if (cfg.mock && cfg.label().empty()) cfg.model_label = "mock";
    if (!args.methods.empty()) {
        cfg.methods.clear();
        std::string token;
        for (char c : args.methods + ",") {
            if (c == ',') {
                if (!token.empty()) cfg.methods.push_back(method_from_string(trim(token)));
                token.clear();
            } else {
                token.push_back(c);
            }
        }
    }
    return cfg;
}

std::shared_ptr<ChatProvider> make_chat_provider(const RunConfig& cfg) {
    if (cfg.mock) return mock::make_pipeline_mock();
    if (cfg.chat.base_url.empty())
        throw ConfigError("chat.base_url not configured (or pass --mock)");
    return std::make_shared<HttpChatProvider>(cfg.chat.base_url,
                                              api_key_from_env(cfg.chat.api_key_env));
}

std::shared_ptr<EmbeddingProvider> make_embedding_provider(const RunConfig& cfg) {
    if (cfg.mock) return std::make_shared<HashEmbeddingProvider>();
    if (cfg.embedding.base_url.empty())
        throw ConfigError("embedding.base_url not configured (or pass --mock)");
    return std::make_shared<HttpEmbeddingProvider>(cfg.embedding.base_url,
                                                   cfg.embedding.model,
                                                   api_key_from_env(cfg.embedding.api_key_env));
}

GatewayConfig gateway_config(const RunConfig& cfg, const std::string& salt = "") {
    GatewayConfig gc;
    gc.cache_dir = cfg.cache_dir;
    gc.cache_salt = salt;
    gc.max_in_flight = cfg.max_in_flight;
    gc.seed = cfg.seed;
    return gc;
}

Corpus load_for(const RunConfig& cfg) {
    Corpus corpus = load_corpus(cfg.corpus_dir);
    for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << "\n";
    if (cfg.sample_n > 0 && cfg.sample_n < corpus.instances.size())
        corpus = sample_instances(corpus, cfg.sample_n, cfg.seed);
    return corpus;
}

const BenchmarkInstance& instance_of(const Corpus& corpus, const std::string& table_id) {
    for (const auto& inst : corpus.instances)
        if (inst.table.table_id == table_id) return inst;
    throw CorpusError("no benchmark instance with table id '" + table_id + "'");
}

std::vector<std::size_t> curve_cutoffs(const RunConfig& cfg, std::size_t corpus_size) {
    std::vector<std::size_t> ks;
    for (std::size_t k = cfg.curve_k_min; k <= cfg.curve_k_max && k <= corpus_size; ++k)
        ks.push_back(k);
    if (ks.empty()) throw ConfigError("no retrieval cutoffs fit the corpus size");
    return ks;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"literature-review table generation and QA-based evaluation"};
    app.require_subcommand(1);

    CommonArgs args;
    bool as_json = false;
    bool resume = false;
    std::string table_id, method_name = "iterative", gen_path, out_path;
    std::size_t repetition = 0;
    std::vector<std::size_t> ablate_ks = {1, 2, 3, 4, 5};

    auto* cmd_load = app.add_subcommand("load", "parse and validate a corpus");
    add_common(cmd_load, args);

    auto* cmd_stats = app.add_subcommand("stats", "per-table size statistics");
    add_common(cmd_stats, args);
    cmd_stats->add_flag("--json", as_json, "emit JSON instead of text");

    auto* cmd_overlap =
        app.add_subcommand("overlap", "token overlap between prompts and table content");
    add_common(cmd_overlap, args);
    cmd_overlap->add_flag("--json", as_json, "emit JSON instead of text");

    auto* cmd_curate = app.add_subcommand(
        "curate-demands", "rewrite table captions into abstract user demands");
    add_common(cmd_curate, args);
    cmd_curate->add_option("--out", out_path, "directory for the rewritten corpus")
        ->required();

    auto* cmd_rank =
        app.add_subcommand("rank-distractors", "score and rank distractor candidates");
    add_common(cmd_rank, args);
    cmd_rank->add_option("--table", table_id, "restrict to one table id");

    auto* cmd_curve =
        app.add_subcommand("retrieval-curve", "precision/recall against retrieval depth");
    add_common(cmd_curve, args);
    cmd_curve->add_option("--out", out_path, "write CSV here instead of stdout");

    auto* cmd_generate = app.add_subcommand("generate", "generate one table");
    add_common(cmd_generate, args);
    cmd_generate->add_option("--table", table_id, "benchmark table id")->required();
    cmd_generate->add_option("--method", method_name,
                             "one_shot | per_paper | two_stage | iterative");
    cmd_generate->add_option("--rep", repetition, "repetition index (cache partition)");
    cmd_generate->add_option("--out", out_path, "write the draft JSON here");

    auto* cmd_evaluate = app.add_subcommand("evaluate", "score one generated table");
    add_common(cmd_evaluate, args);
    cmd_evaluate->add_option("--table", table_id, "benchmark table id")->required();
    cmd_evaluate->add_option("--gen", gen_path, "generated draft JSON")->required();
    cmd_evaluate->add_option("--rep", repetition, "repetition index (cache partition)");

    auto* cmd_run = app.add_subcommand("run", "execute the full instance/method grid");
    add_common(cmd_run, args);
    cmd_run->add_flag("--resume", resume, "skip grid entries already completed");

    auto* cmd_ablate =
        app.add_subcommand("ablate-k", "rerun the iterative method across iteration counts");
    add_common(cmd_ablate, args);
    cmd_ablate->add_option("--ks", ablate_ks, "iteration counts to sweep");
    cmd_ablate->add_flag("--resume", resume, "skip grid entries already completed");

    auto* cmd_report =
        app.add_subcommand("report", "aggregate an existing run without executing");
    add_common(cmd_report, args);

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig cfg = resolve_config(args);

        if (cmd_load->parsed()) {
            const Corpus corpus = load_for(cfg);
            std::cout << corpus.papers.size() << " papers, " << corpus.instances.size()
                      << " benchmark instances, " << corpus.warnings.size() << " warnings\n";
        } else if (cmd_stats->parsed()) {
            const CorpusStats s = corpus_stats(load_for(cfg));
            if (as_json)
                std::cout << to_json(s).dump(2) << "\n";
            else
                std::cout << format_text(s);
        } else if (cmd_overlap->parsed()) {
            const Corpus corpus = load_for(cfg);
            for (PromptField field : {PromptField::caption, PromptField::user_demand}) {
                const OverlapReport r = prompt_overlap_stats(corpus, field);
                if (as_json)
                    std::cout << to_json(r).dump(2) << "\n";
                else
                    std::cout << format_text(r);
            }
        } else if (cmd_curate->parsed()) {
            LlmGateway gw(make_chat_provider(cfg), gateway_config(cfg, "curate"));
            const PromptLibrary prompts = cfg.prompt_dir.empty()
                                              ? PromptLibrary::defaults()
                                              : PromptLibrary::from_dir(cfg.prompt_dir);
            CurationOutcome outcome = curate_demands(cfg, gw, prompts, load_for(cfg));
            save_corpus(outcome.corpus, out_path);
            std::cout << "rewrote " << outcome.corpus.instances.size() << " demands into "
                      << out_path << "\n";
            for (const auto& id : outcome.flagged)
                std::cout << "flagged (still leaks schema wording): " << id << "\n";
        } else if (cmd_rank->parsed()) {
            const Corpus corpus = load_for(cfg);
            EmbeddingGateway gw(make_embedding_provider(cfg), gateway_config(cfg));
            for (const auto& inst : corpus.instances) {
                if (!table_id.empty() && inst.table.table_id != table_id) continue;
                std::cout << inst.table.table_id << ":\n";
                for (const auto& rc : rank_distractors(corpus, inst, gw))
                    std::cout << "  " << rc.rank << ". " << rc.paper_id << "  score "
                              << rc.score << "\n";
            }
        } else if (cmd_curve->parsed()) {
            const Corpus corpus = load_for(cfg);
            EmbeddingGateway gw(make_embedding_provider(cfg), gateway_config(cfg));
            const auto curve = averaged_retrieval_curve(
                corpus, gw, curve_cutoffs(cfg, corpus.papers.size()));
            const std::string csv = curve_csv(curve);
            if (out_path.empty()) {
                std::cout << csv;
            } else {
                write_atomic(out_path, csv);
                std::cout << "wrote " << out_path << "\n";
            }
        } else if (cmd_generate->parsed()) {
            Runner runner(cfg, make_chat_provider(cfg));
            const DraftTable draft = runner.generate_single(
                instance_of(runner.corpus(), table_id), method_from_string(method_name),
                repetition);
            const std::string payload = draft_to_json(draft).dump(2) + "\n";
            if (out_path.empty()) {
                std::cout << payload;
            } else {
                write_atomic(out_path, payload);
                std::cout << "wrote " << out_path << "\n";
            }
        } else if (cmd_evaluate->parsed()) {
            Runner runner(cfg, make_chat_provider(cfg));
            const DraftTable draft =
                draft_from_json(nlohmann::json::parse(slurp(gen_path)));
            const EvalReport report = runner.evaluate_single(
                instance_of(runner.corpus(), table_id), draft, repetition);
            std::cout << report.to_json().dump(2) << "\n";
        } else if (cmd_run->parsed()) {
            Runner runner(cfg, make_chat_provider(cfg));
            const RunManifest manifest = runner.run(resume);
            const auto rows = aggregate(cfg, manifest);
            write_atomic(cfg.output_dir / "report.csv", report_csv(rows));
            write_atomic(cfg.output_dir / "report.txt", report_text(rows));
            std::cout << report_text(rows);
            std::size_t failed = 0;
            for (const auto& e : manifest.entries)
                if (e.status == "failed") {
                    ++failed;
                    std::cerr << "failed " << e.key() << ": " << e.failure << "\n";
                }
            std::cout << manifest.entries.size() - failed << "/" << manifest.entries.size()
                      << " grid entries completed; outputs in " << cfg.output_dir.string()
                      << "\n";
        } else if (cmd_ablate->parsed()) {
            const auto rows = ablate_k(cfg, make_chat_provider(cfg), ablate_ks, resume);
            const std::string csv = ablation_csv(rows);
            write_atomic(cfg.output_dir / "ablation.csv", csv);
            std::cout << csv;
        } else if (cmd_report->parsed()) {
            const RunManifest manifest = RunManifest::from_json(
                nlohmann::json::parse(slurp(cfg.output_dir / "manifest.json")));
            const auto rows = aggregate(cfg, manifest);
            write_atomic(cfg.output_dir / "report.csv", report_csv(rows));
            std::cout << report_text(rows);
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

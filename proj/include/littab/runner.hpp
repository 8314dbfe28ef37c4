#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "littab/corpus.hpp"
#include "littab/embedding.hpp"
#include "littab/errors.hpp"
#include "littab/evaluation.hpp"
#include "littab/generation.hpp"
#include "littab/llm_gateway.hpp"
#include "littab/prompts.hpp"
#include "littab/text.hpp"

namespace littab {

struct ProviderConfig {
    std::string base_url;
    std::string model;
    std::string api_key_env;
};

struct RunConfig {
    std::filesystem::path corpus_dir;
    std::filesystem::path output_dir = "out";
    std::filesystem::path cache_dir = "cache";
    std::filesystem::path prompt_dir;  // empty = embedded defaults

    ProviderConfig chat;
    ProviderConfig embedding;
    std::string model_label;  // report row label; defaults to chat.model

    double temperature = 0.5;
    std::uint64_t seed = 1;
    std::size_t repetitions = 2;
    std::vector<Method> methods = all_methods();
    std::size_t k = 5;
    std::size_t batch_size = 4;
    std::size_t sample_n = 0;  // 0 = whole corpus
    std::size_t max_in_flight = 4;
    std::size_t pairwise_samples = 10;
    std::size_t curve_k_min = 2;
    std::size_t curve_k_max = 100;
    std::size_t one_shot_budget_chars = 240000;
    std::size_t full_text_cap_chars = 24000;
    std::size_t key_info_word_cap = 300;
    std::size_t leakage_min_token_len = 4;
    bool mock = false;

    void validate() const {
        if (corpus_dir.empty()) throw ConfigError("corpus_dir not set");
        if (!std::filesystem::exists(corpus_dir))
            throw ConfigError("corpus_dir does not exist: " + corpus_dir.string());
        if (k < 1) throw ConfigError("k must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
        if (methods.empty()) throw ConfigError("no methods selected");
        if (curve_k_min < 1 || curve_k_min > curve_k_max)
            throw ConfigError("curve bounds must satisfy 1 <= min <= max");
    }

    std::string label() const { return model_label.empty() ? chat.model : model_label; }
};

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    RunConfig cfg;
    auto path_of = [&](const char* key, std::filesystem::path& out) {
        if (j.contains(key)) out = j[key].get<std::string>();
    };
    path_of("corpus_dir", cfg.corpus_dir);
    path_of("output_dir", cfg.output_dir);
    path_of("cache_dir", cfg.cache_dir);
    path_of("prompt_dir", cfg.prompt_dir);
    auto provider_of = [&](const char* key, ProviderConfig& out) {
        if (!j.contains(key)) return;
        const auto& p = j[key];
        out.base_url = p.value("base_url", "");
        out.model = p.value("model", "");
        out.api_key_env = p.value("api_key_env", "");
    };
    provider_of("chat", cfg.chat);
    provider_of("embedding", cfg.embedding);
    cfg.model_label = j.value("model_label", "");
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.repetitions = j.value("repetitions", cfg.repetitions);
    if (j.contains("methods")) {
        cfg.methods.clear();
        for (const auto& m : j["methods"])
            cfg.methods.push_back(method_from_string(m.get<std::string>()));
    }
    cfg.k = j.value("k", cfg.k);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.sample_n = j.value("sample_n", cfg.sample_n);
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    cfg.pairwise_samples = j.value("pairwise_samples", cfg.pairwise_samples);
    cfg.curve_k_min = j.value("curve_k_min", cfg.curve_k_min);
    cfg.curve_k_max = j.value("curve_k_max", cfg.curve_k_max);
    cfg.one_shot_budget_chars = j.value("one_shot_budget_chars", cfg.one_shot_budget_chars);
    cfg.full_text_cap_chars = j.value("full_text_cap_chars", cfg.full_text_cap_chars);
    cfg.key_info_word_cap = j.value("key_info_word_cap", cfg.key_info_word_cap);
    cfg.leakage_min_token_len = j.value("leakage_min_token_len", cfg.leakage_min_token_len);
    cfg.mock = j.value("mock", cfg.mock);
    return cfg;
}

// ---------------------------------------------------------------------------
// Atomic file output

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out) throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open: " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
    std::string table_id;
    Method method = Method::one_shot;
    std::size_t repetition = 0;
    std::string status = "pending";  // pending | done | failed
    std::string gen_path;            // relative to output_dir
    std::string eval_path;
    std::string failure;
    std::uint64_t requests = 0;  // logical chat requests, cache hits included

    std::string key() const {
        return table_id + "|" + to_string(method) + "|r" + std::to_string(repetition);
    }
};

struct RunManifest {
    std::string corpus_dir;
    std::string model;
    std::uint64_t seed = 0;
    std::size_t repetitions = 0;
    std::vector<std::string> methods;
    std::size_t k = 0;
    std::size_t batch_size = 0;
    std::vector<ManifestEntry> entries;

    nlohmann::json to_json() const {
        nlohmann::json je = nlohmann::json::array();
        for (const auto& e : entries)
            je.push_back({{"table_id", e.table_id},
                          {"method", to_string(e.method)},
                          {"repetition", e.repetition},
                          {"status", e.status},
                          {"gen_path", e.gen_path},
                          {"eval_path", e.eval_path},
                          {"failure", e.failure},
                          {"requests", e.requests}});
        return {{"corpus_dir", corpus_dir},
                {"model", model},
                {"seed", seed},
                {"repetitions", repetitions},
                {"methods", methods},
                {"k", k},
                {"batch_size", batch_size},
                {"entries", je}};
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        m.corpus_dir = j.at("corpus_dir").get<std::string>();
        m.model = j.at("model").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.repetitions = j.at("repetitions").get<std::size_t>();
        for (const auto& s : j.at("methods")) m.methods.push_back(s.get<std::string>());
        m.k = j.at("k").get<std::size_t>();
        m.batch_size = j.at("batch_size").get<std::size_t>();
        for (const auto& je : j.at("entries")) {
            ManifestEntry e;
            e.table_id = je.at("table_id").get<std::string>();
            e.method = method_from_string(je.at("method").get<std::string>());
            e.repetition = je.at("repetition").get<std::size_t>();
            e.status = je.at("status").get<std::string>();
            e.gen_path = je.at("gen_path").get<std::string>();
            e.eval_path = je.at("eval_path").get<std::string>();
            e.failure = je.at("failure").get<std::string>();
            e.requests = je.at("requests").get<std::uint64_t>();
            m.entries.push_back(std::move(e));
        }
        return m;
    }
};

namespace detail {

inline std::string fs_safe(const std::string& s) {
    std::string out;
    for (char c : s)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Grid execution

class Runner {
public:
    Runner(RunConfig cfg, std::shared_ptr<ChatProvider> chat)
        : cfg_(std::move(cfg)), chat_(std::move(chat)) {
        cfg_.validate();
        prompts_ = cfg_.prompt_dir.empty() ? PromptLibrary::defaults()
                                           : PromptLibrary::from_dir(cfg_.prompt_dir);
        corpus_ = load_corpus(cfg_.corpus_dir);
        if (cfg_.sample_n > 0 && cfg_.sample_n < corpus_.instances.size())
            corpus_ = sample_instances(corpus_, cfg_.sample_n, cfg_.seed);
    }

    const Corpus& corpus() const { return corpus_; }
    const PromptLibrary& prompts() const { return prompts_; }

    std::filesystem::path manifest_path() const { return cfg_.output_dir / "manifest.json"; }

    // Executes the (instance x method x repetition) grid. Entries already
    // done in a resumed manifest are skipped when their files still parse.
    // max_entries caps how many non-skipped entries run, for interruption
    // tests and staged runs.
    RunManifest run(bool resume, std::size_t max_entries = SIZE_MAX) {
        RunManifest manifest = resume ? load_or_init_manifest() : init_manifest();
        std::filesystem::create_directories(cfg_.output_dir);

        std::size_t executed = 0;
        for (auto& entry : manifest.entries) {
            if (entry.status == "done" && done_files_valid(entry)) continue;
            if (executed >= max_entries) break;
            ++executed;
            execute_entry(entry);
            write_atomic(manifest_path(), manifest.to_json().dump(2) + "\n");
        }
        write_atomic(manifest_path(), manifest.to_json().dump(2) + "\n");
        return manifest;
    }

    RunManifest load_manifest() const {
        return RunManifest::from_json(nlohmann::json::parse(slurp(manifest_path())));
    }

    // Runs one (instance, method) pair without touching the manifest; used
    // by the generate/evaluate subcommands.
    DraftTable generate_single(const BenchmarkInstance& inst, Method method,
                               std::size_t repetition) {
        auto gw = make_gateway(repetition);
        return generate_with(*gw, inst, method, repetition);
    }

    EvalReport evaluate_single(const BenchmarkInstance& inst, const DraftTable& gen,
                               std::size_t repetition) {
        auto gw = make_gateway(repetition);
        return evaluate_with(*gw, inst, gen, repetition);
    }

private:
    RunManifest init_manifest() const {
        RunManifest m;
        m.corpus_dir = cfg_.corpus_dir.string();
        m.model = cfg_.label();
        m.seed = cfg_.seed;
        m.repetitions = cfg_.repetitions;
        for (Method method : cfg_.methods) m.methods.push_back(to_string(method));
        m.k = cfg_.k;
        m.batch_size = cfg_.batch_size;
        for (const auto& inst : corpus_.instances)
            for (Method method : cfg_.methods)
                for (std::size_t rep = 0; rep < cfg_.repetitions; ++rep) {
                    ManifestEntry e;
                    e.table_id = inst.table.table_id;
                    e.method = method;
                    e.repetition = rep;
                    const std::string stem = detail::fs_safe(e.key());
                    e.gen_path = "gen_" + stem + ".json";
                    e.eval_path = "eval_" + stem + ".json";
                    m.entries.push_back(std::move(e));
                }
        return m;
    }

    RunManifest load_or_init_manifest() const {
        if (!std::filesystem::exists(manifest_path())) return init_manifest();
        RunManifest on_disk = load_manifest();
        RunManifest fresh = init_manifest();
        // The grid layout comes from config; statuses carry over by key.
        std::map<std::string, const ManifestEntry*> by_key;
        for (const auto& e : on_disk.entries) by_key[e.key()] = &e;
        for (auto& e : fresh.entries) {
            const auto it = by_key.find(e.key());
            if (it != by_key.end()) e = *it->second;
        }
        return fresh;
    }

    bool done_files_valid(const ManifestEntry& e) const {
        try {
            draft_from_json(nlohmann::json::parse(slurp(cfg_.output_dir / e.gen_path)));
            EvalReport::from_json(nlohmann::json::parse(slurp(cfg_.output_dir / e.eval_path)));
            return true;
        } catch (...) {
            return false;
        }
    }

    std::uint64_t entry_seed(const std::string& table_id, Method method,
                             std::size_t repetition) const {
        return mix_seed(cfg_.seed, stable_hash(table_id + "|" + to_string(method) + "|r" +
                                               std::to_string(repetition)));
    }

    std::unique_ptr<LlmGateway> make_gateway(std::size_t repetition) const {
        GatewayConfig gc;
        gc.max_in_flight = cfg_.max_in_flight;
        gc.cache_dir = cfg_.cache_dir;
        gc.cache_salt = "rep" + std::to_string(repetition);
        gc.seed = cfg_.seed;
        return std::make_unique<LlmGateway>(chat_, gc);
    }

    std::vector<Paper> candidate_papers(const BenchmarkInstance& inst) const {
        std::vector<Paper> papers;
        papers.reserve(inst.candidate_ids.size());
        for (const auto& id : inst.candidate_ids) papers.push_back(corpus_.paper(id));
        return papers;
    }

    DraftTable generate_with(LlmGateway& gw, const BenchmarkInstance& inst, Method method,
                             std::size_t repetition) {
        GenerationOptions opts;
        opts.model = cfg_.chat.model.empty() ? "mock" : cfg_.chat.model;
        opts.temperature = cfg_.temperature;
        opts.k = cfg_.k;
        opts.batch_size = cfg_.batch_size;
        opts.seed = entry_seed(inst.table.table_id, method, repetition);
        opts.one_shot_budget_chars = cfg_.one_shot_budget_chars;
        opts.full_text_cap_chars = cfg_.full_text_cap_chars;
        opts.key_info_word_cap = cfg_.key_info_word_cap;
        TableGenerator generator(gw, prompts_, opts);
        return generator.generate(method, inst.table.user_demand, candidate_papers(inst));
    }

    EvalReport evaluate_with(LlmGateway& gw, const BenchmarkInstance& inst,
                             const DraftTable& gen, std::size_t repetition) {
        EvalOptions opts;
        opts.model = cfg_.chat.model.empty() ? "mock" : cfg_.chat.model;
        opts.temperature = cfg_.temperature;
        opts.pairwise_samples = cfg_.pairwise_samples;
        opts.seed = entry_seed(inst.table.table_id, Method::one_shot, repetition) ^
                    stable_hash("eval");
        return evaluate_pair(gw, prompts_, inst.table, gen, opts);
    }

    void execute_entry(ManifestEntry& entry) {
        const auto inst_it =
            std::find_if(corpus_.instances.begin(), corpus_.instances.end(),
                         [&](const BenchmarkInstance& i) {
                             return i.table.table_id == entry.table_id;
                         });
        if (inst_it == corpus_.instances.end()) {
            entry.status = "failed";
            entry.failure = "instance missing from corpus";
            return;
        }
        auto gw = make_gateway(entry.repetition);
        try {
            const DraftTable gen =
                generate_with(*gw, *inst_it, entry.method, entry.repetition);
            write_atomic(cfg_.output_dir / entry.gen_path,
                         draft_to_json(gen).dump(2) + "\n");
            const EvalReport report = evaluate_with(*gw, *inst_it, gen, entry.repetition);
            write_atomic(cfg_.output_dir / entry.eval_path,
                         report.to_json().dump(2) + "\n");
            entry.status = "done";
            entry.failure.clear();
        } catch (const Error& e) {
            entry.status = "failed";
            entry.failure = e.what();
            std::error_code ec;
            std::filesystem::remove(cfg_.output_dir / entry.gen_path, ec);
            std::filesystem::remove(cfg_.output_dir / entry.eval_path, ec);
        }
        entry.requests = gw->trace().requests.load();
    }

    RunConfig cfg_;
    std::shared_ptr<ChatProvider> chat_;
    PromptLibrary prompts_;
    Corpus corpus_;
};

// ---------------------------------------------------------------------------
// Aggregation

struct ReportRow {
    std::string model;
    std::string method;
    // Fractions in [0,1]; formatting converts to percent.
    double paper_recall = 0.0;
    double schema_p = 0.0, schema_r = 0.0, schema_f1 = 0.0;
    double unary_p = 0.0, unary_r = 0.0, unary_f1 = 0.0;
    double pair_p = 0.0, pair_r = 0.0, pair_f1 = 0.0;
    double avg_f1 = 0.0;
    std::size_t entries = 0;
    std::size_t failed = 0;
};

// Macro-average over grid entries per method. Failed generations contribute
// zero-score reports, so methods that crash on hard instances are penalized
// rather than dropped.
inline std::vector<ReportRow> aggregate(const RunConfig& cfg, const RunManifest& manifest) {
    std::vector<ReportRow> rows;
    for (const auto& method_name : manifest.methods) {
        ReportRow row;
        row.model = manifest.model;
        row.method = method_name;
        for (const auto& e : manifest.entries) {
            if (to_string(e.method) != method_name) continue;
            if (e.status == "pending") continue;
            EvalReport r;  // zeros for failed entries
            if (e.status == "done")
                r = EvalReport::from_json(
                    nlohmann::json::parse(slurp(cfg.output_dir / e.eval_path)));
            else
                ++row.failed;
            row.paper_recall += r.paper_recall;
            row.schema_p += r.schema.precision;
            row.schema_r += r.schema.recall;
            row.schema_f1 += r.schema.f1;
            row.unary_p += r.unary.precision;
            row.unary_r += r.unary.recall;
            row.unary_f1 += r.unary.f1;
            row.pair_p += r.pairwise.precision;
            row.pair_r += r.pairwise.recall;
            row.pair_f1 += r.pairwise.f1;
            row.avg_f1 += r.avg_f1;
            ++row.entries;
        }
        if (row.entries == 0) continue;
        const double n = static_cast<double>(row.entries);
        for (double* v : {&row.paper_recall, &row.schema_p, &row.schema_r, &row.schema_f1,
                          &row.unary_p, &row.unary_r, &row.unary_f1, &row.pair_p, &row.pair_r,
                          &row.pair_f1, &row.avg_f1})
            *v /= n;
        rows.push_back(row);
    }
    if (rows.empty()) throw Error("no completed entries to aggregate");
    return rows;
}

inline std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
    return buf;
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string out =
        "model,method,paper_recall,schema_p,schema_r,schema_f1,unary_p,unary_r,unary_f1,"
        "pair_p,pair_r,pair_f1,avg_f1\n";
    for (const auto& r : rows) {
        out += r.model + "," + r.method;
        for (double v : {r.paper_recall, r.schema_p, r.schema_r, r.schema_f1, r.unary_p,
                         r.unary_r, r.unary_f1, r.pair_p, r.pair_r, r.pair_f1, r.avg_f1})
            out += "," + format_percent(v);
        out += "\n";
    }
    return out;
}

inline std::string report_text(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "model" << std::setw(12) << "method" << std::right
       << std::setw(8) << "p_rec" << std::setw(8) << "sch_p" << std::setw(8) << "sch_r"
       << std::setw(8) << "sch_f" << std::setw(8) << "una_p" << std::setw(8) << "una_r"
       << std::setw(8) << "una_f" << std::setw(8) << "pai_p" << std::setw(8) << "pai_r"
       << std::setw(8) << "pai_f" << std::setw(8) << "avg" << std::setw(8) << "fail" << '\n';
    for (const auto& r : rows) {
        os << std::left << std::setw(16) << r.model << std::setw(12) << r.method << std::right;
        for (double v : {r.paper_recall, r.schema_p, r.schema_r, r.schema_f1, r.unary_p,
                         r.unary_r, r.unary_f1, r.pair_p, r.pair_r, r.pair_f1, r.avg_f1})
            os << std::setw(8) << format_percent(v);
        os << std::setw(8) << (std::to_string(r.failed) + "/" + std::to_string(r.entries))
           << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Ablation over iteration count

struct AblationRow {
    std::size_t k = 0;
    double schema_f1 = 0.0, unary_f1 = 0.0, pair_f1 = 0.0, avg_f1 = 0.0;
};

// Reruns the iterative method per k under out/k<k>/ and reduces each run to
// one CSV row.
inline std::vector<AblationRow> ablate_k(const RunConfig& base,
                                         std::shared_ptr<ChatProvider> chat,
                                         const std::vector<std::size_t>& ks, bool resume) {
    std::vector<AblationRow> rows;
    for (std::size_t k : ks) {
        RunConfig cfg = base;
        cfg.methods = {Method::iterative};
        cfg.k = k;
        cfg.output_dir = base.output_dir / ("k" + std::to_string(k));
        Runner runner(cfg, chat);
        const RunManifest manifest = runner.run(resume);
        const auto agg = aggregate(cfg, manifest);
        AblationRow row;
        row.k = k;
        row.schema_f1 = agg[0].schema_f1;
        row.unary_f1 = agg[0].unary_f1;
        row.pair_f1 = agg[0].pair_f1;
        row.avg_f1 = agg[0].avg_f1;
        rows.push_back(row);
    }
    return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "k,schema_f1,unary_f1,pair_f1,avg_f1\n";
    for (const auto& r : rows) {
        out += std::to_string(r.k);
        for (double v : {r.schema_f1, r.unary_f1, r.pair_f1, r.avg_f1})
            out += "," + format_percent(v);
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Retrieval curve CSV

inline std::string curve_csv(const std::vector<CurvePoint>& curve) {
    std::string out = "k,precision,recall\n";
    char buf[64];
    for (const auto& pt : curve) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", pt.k, pt.precision, pt.recall);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Demand curation

struct CurationOutcome {
    Corpus corpus;                     // demands rewritten in place
    std::vector<std::string> flagged;  // table ids still leaking after one retry
};

// Tokens (lowercased alnum runs) of at least min_len chars that appear both
// in a schema column and verbatim in the demand.
inline std::vector<std::string> leaked_schema_tokens(const LiteratureTable& table,
                                                     const std::string& demand,
                                                     std::size_t min_len) {
    std::set<std::string> demand_tokens;
    {
        std::string tok;
        for (char c : to_lower(demand)) {
            if (std::isalnum(static_cast<unsigned char>(c)))
                tok.push_back(c);
            else {
                if (tok.size() >= min_len) demand_tokens.insert(tok);
                tok.clear();
            }
        }
        if (tok.size() >= min_len) demand_tokens.insert(tok);
    }
    std::set<std::string> leaked;
    for (const auto& col : table.columns) {
        std::string tok;
        auto check = [&] {
            if (tok.size() >= min_len && demand_tokens.count(tok)) leaked.insert(tok);
            tok.clear();
        };
        for (char c : to_lower(col)) {
            if (std::isalnum(static_cast<unsigned char>(c)))
                tok.push_back(c);
            else
                check();
        }
        check();
    }
    return {leaked.begin(), leaked.end()};
}

// Rewrites every caption into an abstract user demand, re-prompting once
// when the demand leaks schema wording; persistent leaks are flagged.
inline CurationOutcome curate_demands(const RunConfig& cfg, LlmGateway& gw,
                                      const PromptLibrary& prompts, Corpus corpus) {
    CurationOutcome outcome;
    for (auto& inst : corpus.instances) {
        std::string paper_blocks;
        for (const auto& id : inst.relevant_ids) {
            const Paper& p = corpus.paper(id);
            if (!paper_blocks.empty()) paper_blocks += "\n";
            paper_blocks += "Paper ID: " + p.id + "\nTitle: " + p.title;
        }
        const std::map<std::string, std::string> vars = {
            {"CAPTION", inst.table.caption},
            {"TABLE", prompt_table_json(inst.table)},
            {"PAPERS", paper_blocks}};
        ChatRequest req;
        req.model = cfg.chat.model.empty() ? "mock" : cfg.chat.model;
        req.temperature = cfg.temperature;
        req.tag = "demand_rewrite";
        req.messages = {{"user", prompts.render("demand_rewrite", vars)}};
        std::string demand = trim(gw.chat(req).content);

        if (!leaked_schema_tokens(inst.table, demand, cfg.leakage_min_token_len).empty()) {
            ChatRequest retry = req;
            retry.messages[0].content +=
                "\nYour previous demand reused wording from the table schema. Rewrite it "
                "without using any column name words.";
            retry.tag = "demand_rewrite";
            demand = trim(gw.chat(retry).content);
            if (!leaked_schema_tokens(inst.table, demand, cfg.leakage_min_token_len).empty())
                outcome.flagged.push_back(inst.table.table_id);
        }
        inst.table.user_demand = demand;
    }
    outcome.corpus = std::move(corpus);
    return outcome;
}

}  // namespace littab

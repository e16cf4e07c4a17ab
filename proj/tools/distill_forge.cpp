// distill-forge: command-line front end for the distillation data pipeline.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "distill_forge/backend.hpp"
#include "distill_forge/corpus_ingest.hpp"
#include "distill_forge/eval_harness.hpp"
#include "distill_forge/generation.hpp"
#include "distill_forge/live_backend.hpp"
#include "distill_forge/mixture.hpp"
#include "distill_forge/pipeline.hpp"
#include "distill_forge/prompt_forge.hpp"
#include "distill_forge/quality_filter.hpp"
#include "distill_forge/rouge.hpp"

namespace fs = std::filesystem;
using namespace distill;

namespace {

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::size_t> parse_orders(const std::string& spec) {
    std::vector<std::size_t> orders;
    for (const auto& part : split_on(spec, ',')) {
        try {
            const long v = std::stol(part);
            if (v < 1) throw InvalidParameter("--n values must be >= 1");
            orders.push_back(static_cast<std::size_t>(v));
        } catch (const std::logic_error&) {
            throw InvalidParameter("bad --n value '" + part + "'");
        }
    }
    return orders;
}

std::vector<double> parse_weights(const std::string& spec) {
    std::vector<double> weights;
    for (const auto& part : split_on(spec, ',')) {
        try {
            weights.push_back(std::stod(part));
        } catch (const std::logic_error&) {
            throw ConfigurationError("bad weight '" + part + "'");
        }
    }
    return weights;
}

/// Documents for generation: Document records ({text}) or labeled pairs
/// ({document, summary|reference}), which also carry a reference summary.
std::vector<InputDoc> load_inputs(const fs::path& path) {
    std::vector<InputDoc> inputs;
    for_each_jsonl(path, [&](const json& j, std::size_t) {
        if (j.contains("document")) {
            inputs.push_back(to_input(j.get<LabeledPair>()));
        } else {
            inputs.push_back(to_input(j.get<Document>()));
        }
    });
    return inputs;
}

std::unique_ptr<Backend> backend_from_flags(const std::string& kind, const fs::path& replay_dir,
                                            std::size_t max_output_words) {
    BackendSettings s;
    s.kind = kind;
    s.replay_dir = replay_dir;
    s.max_output_words = max_output_words;
    return make_backend(s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distill-forge: build summarization distillation datasets"};
    app.require_subcommand(0, 1);

    std::string top_config;
    app.add_option("--config", top_config, "Pipeline config (same as `run --config`)");

    // ingest -----------------------------------------------------------------
    auto* ingest_cmd = app.add_subcommand("ingest", "Clean, truncate and deduplicate a JSONL corpus");
    fs::path ingest_in, ingest_out, ingest_report;
    IngestOptions ingest_opts;
    ingest_opts.workers = default_workers();
    ingest_cmd->add_option("--in", ingest_in, "Input JSONL {id, source, text}")->required();
    ingest_cmd->add_option("--out", ingest_out, "Output Document JSONL")->required();
    ingest_cmd->add_option("--report", ingest_report, "Cleaning report JSON")->required();
    ingest_cmd->add_option("--max-words", ingest_opts.max_words, "Truncation limit in words")->capture_default_str();
    ingest_cmd->add_option("--non-english-threshold", ingest_opts.non_english_threshold,
                           "Drop documents whose non-English symbol fraction exceeds this")
        ->capture_default_str();
    ingest_cmd->add_option("--workers", ingest_opts.workers, "Cleaning threads");

    // rouge ------------------------------------------------------------------
    auto* rouge_cmd = app.add_subcommand("rouge", "Score a candidate file against a reference file");
    fs::path rouge_candidate, rouge_reference;
    std::string rouge_orders = "1,2";
    rouge_cmd->add_option("--candidate", rouge_candidate)->required();
    rouge_cmd->add_option("--reference", rouge_reference)->required();
    rouge_cmd->add_option("--n", rouge_orders, "Comma-separated n-gram orders")->capture_default_str();

    // render -----------------------------------------------------------------
    auto* render_cmd = app.add_subcommand("render", "Render a zeroshot or fewshot prompt");
    std::string render_mode = "zeroshot", render_template = "random:0";
    fs::path render_doc, render_icds, render_templates;
    std::size_t render_max_icds = 4, render_k = 256, render_budget = 3072;
    render_cmd->add_option("--mode", render_mode)->check(CLI::IsMember({"zeroshot", "fewshot"}))->capture_default_str();
    render_cmd->add_option("--template", render_template, "Template id or random:<seed>")->capture_default_str();
    render_cmd->add_option("--doc", render_doc, "Plain-text document")->required();
    render_cmd->add_option("--icds", render_icds, "JSONL demonstrations {id, document, summary}");
    render_cmd->add_option("--max-icds", render_max_icds)->capture_default_str();
    render_cmd->add_option("--succinct-k", render_k, "0 disables succinct truncation")->capture_default_str();
    render_cmd->add_option("--budget", render_budget, "Prompt word budget")->capture_default_str();
    render_cmd->add_option("--templates", render_templates, "Template file (default: built-in set)");

    // generate ---------------------------------------------------------------
    auto* gen_cmd = app.add_subcommand("generate", "Run one generation mode against a backend");
    std::string gen_mode, gen_backend = "stub";
    fs::path gen_docs, gen_icds, gen_out, gen_replay, gen_record;
    std::uint64_t gen_seed = 0;
    std::size_t gen_rate = 0, gen_max_output = 512;
    GenerationConfig gen_config;
    gen_config.workers = 4;
    std::size_t gen_backoff_ms = 500;
    LiveBackendConfig live;
    gen_cmd->add_option("--mode", gen_mode, "m1..m6")->required();
    gen_cmd->add_option("--docs", gen_docs, "Input documents JSONL")->required();
    gen_cmd->add_option("--icds", gen_icds, "ICD pool JSONL {id, document, summary}");
    gen_cmd->add_option("--backend", gen_backend)->check(CLI::IsMember({"live", "replay", "stub"}))->capture_default_str();
    gen_cmd->add_option("--seed", gen_seed)->required();
    gen_cmd->add_option("--out", gen_out)->required();
    gen_cmd->add_option("--replay-dir", gen_replay, "Fixture directory for --backend replay");
    gen_cmd->add_option("--record-dir", gen_record, "Save every answer as a replay fixture");
    gen_cmd->add_option("--workers", gen_config.workers)->capture_default_str();
    gen_cmd->add_option("--rate-limit", gen_rate, "Max backend calls per second (0 = unlimited)")->capture_default_str();
    gen_cmd->add_option("--max-retries", gen_config.policy.max_retries)->capture_default_str();
    gen_cmd->add_option("--backoff-ms", gen_backoff_ms, "Initial retry backoff")->capture_default_str();
    gen_cmd->add_option("--succinct-k", gen_config.succinct_k)->capture_default_str();
    gen_cmd->add_option("--max-icds", gen_config.max_icds)->capture_default_str();
    gen_cmd->add_option("--budget", gen_config.prompt_word_budget)->capture_default_str();
    gen_cmd->add_option("--max-output-words", gen_max_output, "Stub backend output cap")->capture_default_str();
    gen_cmd->add_option("--endpoint", live.base_url, "Live backend base URL")->capture_default_str();
    gen_cmd->add_option("--model", live.model)->capture_default_str();
    gen_cmd->add_option("--temperature", live.temperature)->capture_default_str();
    gen_cmd->add_option("--max-tokens", live.max_output_tokens)->capture_default_str();

    // filter -----------------------------------------------------------------
    auto* filter_cmd = app.add_subcommand("filter", "Apply the quality filter to generation records");
    fs::path filter_records_path, filter_docs, filter_out, filter_report;
    FilterThresholds thresholds;
    filter_cmd->add_option("--records", filter_records_path)->required();
    filter_cmd->add_option("--docs", filter_docs, "Source documents (Document or labeled-pair JSONL)")->required();
    filter_cmd->add_option("--out", filter_out)->required();
    filter_cmd->add_option("--report", filter_report)->required();
    filter_cmd->add_option("--r1-min", thresholds.r1_min)->capture_default_str();
    filter_cmd->add_option("--r2-min", thresholds.r2_min)->capture_default_str();
    filter_cmd->add_option("--r2-max", thresholds.r2_max)->capture_default_str();
    filter_cmd->add_option("--min-words", thresholds.min_words)->capture_default_str();
    filter_cmd->add_option("--max-words", thresholds.max_words)->capture_default_str();

    // pool -------------------------------------------------------------------
    auto* pool_cmd = app.add_subcommand("pool", "Join kept records with document and ICD text for mixing");
    fs::path pool_records, pool_docs, pool_icds, pool_out;
    pool_cmd->add_option("--records", pool_records, "Filtered records JSONL")->required();
    pool_cmd->add_option("--docs", pool_docs)->required();
    pool_cmd->add_option("--icds", pool_icds, "ICD pool used at generation time");
    pool_cmd->add_option("--out", pool_out)->required();

    // mix --------------------------------------------------------------------
    auto* mix_cmd = app.add_subcommand("mix", "Sample the multi-task training mixture");
    fs::path mix_pools, mix_out;
    std::string mix_weights = "0.45,0.1,0.15,0.15,0.15", mix_variant = "balanced";
    std::size_t mix_n = 0;
    std::uint64_t mix_seed = 0;
    RenderOptions mix_render;
    mix_cmd->add_option("--pools", mix_pools, "Directory holding m1.jsonl .. m6.jsonl pool files")->required();
    mix_cmd->add_option("--weights", mix_weights, "Weights for M1+M2,M3,M4,M5,M6")->capture_default_str();
    mix_cmd->add_option("--variant", mix_variant)->check(CLI::IsMember({"balanced", "consistent"}))->capture_default_str();
    mix_cmd->add_option("--n", mix_n)->required();
    mix_cmd->add_option("--seed", mix_seed)->required();
    mix_cmd->add_option("--out", mix_out)->required();
    mix_cmd->add_option("--succinct-k", mix_render.succinct_k)->capture_default_str();
    mix_cmd->add_option("--budget", mix_render.prompt_word_budget)->capture_default_str();

    // eval -------------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "ROUGE-2 report for external candidate summaries");
    fs::path eval_candidates, eval_references, eval_out;
    std::string eval_dataset, eval_setting = "Zeroshot";
    eval_cmd->add_option("--candidates", eval_candidates, "JSONL {id, summary}")->required();
    eval_cmd->add_option("--references", eval_references, "JSONL {id, document, reference}")->required();
    eval_cmd->add_option("--dataset", eval_dataset)->required();
    eval_cmd->add_option("--setting", eval_setting)
        ->check(CLI::IsMember({"Zeroshot", "FewshotInstruct", "FewshotPrefix", "Supervised"}))
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_out)->required();

    // sample -----------------------------------------------------------------
    auto* sample_cmd = app.add_subcommand("sample", "Draw a seeded test subset");
    fs::path sample_dataset, sample_out;
    std::size_t sample_n = 500;
    std::uint64_t sample_seed = 0;
    bool sample_english = false;
    sample_cmd->add_option("--dataset", sample_dataset)->required();
    sample_cmd->add_option("--n", sample_n)->capture_default_str();
    sample_cmd->add_option("--seed", sample_seed)->required();
    sample_cmd->add_option("--out", sample_out, "Output JSONL (default: stdout)");
    sample_cmd->add_flag("--require-english", sample_english, "Skip documents failing the English check");

    // run --------------------------------------------------------------------
    auto* run_cmd = app.add_subcommand("run", "Run the whole pipeline from a config file");
    fs::path run_config;
    std::string run_fail_after;
    run_cmd->add_option("--config", run_config)->required();
    run_cmd->add_option("--fail-after", run_fail_after, "Testing: abort after this stage")->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*ingest_cmd) {
            auto res = ingest(load_documents(ingest_in), ingest_opts);
            write_jsonl(ingest_out, res.documents);
            write_json(ingest_report, json(res.report));
            std::cerr << json(res.report).dump() << '\n';
        } else if (*rouge_cmd) {
            const auto cand = rouge::rouge_tokenize(read_text_file(rouge_candidate));
            const auto ref = rouge::rouge_tokenize(read_text_file(rouge_reference));
            for (auto n : parse_orders(rouge_orders)) {
                const auto s = rouge::rouge_n(std::span<const std::string>(cand), ref, n);
                std::printf("ROUGE-%zu precision %.4f recall %.4f f1 %.4f\n", n, s.precision, s.recall, s.f1);
            }
        } else if (*render_cmd) {
            const TemplateLibrary lib =
                render_templates.empty() ? TemplateLibrary::builtin() : TemplateLibrary::load(render_templates);
            const std::string doc = read_text_file(render_doc);
            RenderedPrompt prompt;
            if (render_mode == "zeroshot") {
                if (render_template.rfind("random:", 0) == 0) {
                    Rng rng(std::stoull(render_template.substr(7)));
                    prompt = render_zeroshot(lib.random(rng), doc);
                } else {
                    prompt = render_zeroshot(lib.find(render_template), doc);
                }
            } else {
                if (render_icds.empty()) throw ConfigurationError("fewshot rendering needs --icds");
                std::vector<DemonstrationPair> demos;
                for (const auto& p : load_pairs(render_icds)) {
                    demos.push_back(make_demonstration(p.id, p.document, p.summary, render_k));
                }
                prompt = render_fewshot(demos, doc, render_max_icds, render_budget, lib.following());
            }
            std::cout << prompt.text;
            std::cerr << "template=" << prompt.template_id << " icd_count=" << prompt.icd_count
                      << " approx_words=" << prompt.approx_words << '\n';
        } else if (*gen_cmd) {
            const Mode mode = parse_mode(gen_mode);
            gen_config.policy.initial_backoff = std::chrono::milliseconds(gen_backoff_ms);
            std::unique_ptr<Backend> base;
            if (gen_backend == "live") {
                base = std::make_unique<LiveBackend>(live);
            } else {
                base = backend_from_flags(gen_backend, gen_replay, gen_max_output);
            }
            std::unique_ptr<RecordingBackend> recorder;
            if (!gen_record.empty()) recorder = std::make_unique<RecordingBackend>(*base, gen_record);
            Backend& backend = recorder ? static_cast<Backend&>(*recorder) : *base;
            RateLimiter limiter(gen_rate);
            const auto docs = load_inputs(gen_docs);
            const auto pool = gen_icds.empty() ? std::vector<LabeledPair>{} : load_pairs(gen_icds);
            const auto records = run_mode(mode, docs, pool, backend, gen_seed, gen_config, &limiter);
            write_jsonl(gen_out, records);
            std::size_t errors = 0;
            for (const auto& r : records) errors += r.finish_reason == FinishReason::Error ? 1 : 0;
            std::cerr << records.size() << " records, " << errors << " errors\n";
            if (!records.empty() && errors == records.size() && mode_spec(mode).calls_backend()) {
                throw BackendExhausted("every backend call failed");
            }
        } else if (*filter_cmd) {
            std::unordered_map<std::string, std::string> texts;
            for (const auto& d : load_inputs(filter_docs)) texts.emplace(d.id, d.text);
            auto result = filter_records(load_records(filter_records_path), texts, thresholds, default_workers());
            write_jsonl(filter_out, result.records);
            write_json(filter_report, json(result.report));
            std::cerr << json(result.report).dump() << '\n';
        } else if (*pool_cmd) {
            const auto records = load_records(pool_records);
            const auto pool = pool_icds.empty() ? std::vector<LabeledPair>{} : load_pairs(pool_icds);
            const auto examples = build_pool(records, load_inputs(pool_docs), pool);
            write_jsonl(pool_out, examples);
            std::cerr << examples.size() << " pool examples\n";
        } else if (*mix_cmd) {
            const auto weights = parse_weights(mix_weights);
            const auto spec = MixtureSpec::from_list(weights);
            std::vector<PoolExample> all;
            for (auto m : kAllModes) {
                const fs::path file = mix_pools / ("m" + std::to_string(mode_number(m)) + ".jsonl");
                if (!fs::exists(file)) continue;
                auto part = load_pool(file);
                all.insert(all.end(), part.begin(), part.end());
            }
            const auto examples =
                build_mixture(group_pools(all), spec, parse_variant(mix_variant), mix_n, mix_seed, mix_render);
            export_examples(mix_out, examples);
            std::cerr << examples.size() << " training examples\n";
        } else if (*eval_cmd) {
            std::map<std::string, std::string> candidates;
            for_each_jsonl(eval_candidates, [&](const json& j, std::size_t) {
                candidates[j.at("id").get<std::string>()] = j.at("summary").get<std::string>();
            });
            std::map<std::string, std::string> references;
            for (const auto& p : load_pairs(eval_references)) references[p.id] = p.summary;
            const auto result = score(candidates, references, eval_dataset, parse_eval_setting(eval_setting));
            write_json(eval_out, json(result));
            if (!result.missing_ids.empty()) {
                std::cerr << "warning: " << result.missing_ids.size() << " references have no candidate (scored 0)\n";
            }
            std::printf("%s ROUGE-2 f1 %.4f precision %.4f recall %.4f over %zu docs\n", eval_dataset.c_str(),
                        result.report.rouge2_f1_mean, result.report.rouge2_precision_mean,
                        result.report.rouge2_recall_mean, result.report.n_docs);
        } else if (*sample_cmd) {
            const auto dataset = load_pairs(sample_dataset);
            std::function<bool(const LabeledPair&)> accept;
            if (sample_english) {
                accept = [](const LabeledPair& p) {
                    try {
                        return is_english_enough(p.document);
                    } catch (const InvalidInput&) {
                        return false;
                    }
                };
            }
            const auto result = sample_test_set(dataset, sample_n, sample_seed, accept);
            if (result.warning) {
                std::cerr << "warning: only " << result.documents.size() << " acceptable documents (wanted "
                          << sample_n << ")\n";
            }
            if (sample_out.empty()) {
                for (const auto& p : result.documents) std::cout << json(p).dump() << '\n';
            } else {
                write_jsonl(sample_out, result.documents);
            }
        } else if (*run_cmd || !top_config.empty()) {
            const fs::path config_path = *run_cmd ? run_config : fs::path(top_config);
            PipelineOptions options;
            options.fail_after_stage = run_fail_after;
            options.on_stage = [](const std::string& name, bool skipped) {
                std::cerr << (skipped ? "skip " : "done ") << name << '\n';
            };
            const auto result = run_pipeline(load_pipeline_config(config_path), options);
            std::cerr << "manifest: " << result.manifest["stages"].size() << " stages\n";
        } else {
            std::cout << app.help();
            return 2;
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return 0;
}

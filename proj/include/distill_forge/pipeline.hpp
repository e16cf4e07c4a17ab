#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "distill_forge/backend.hpp"
#include "distill_forge/corpus_ingest.hpp"
#include "distill_forge/errors.hpp"
#include "distill_forge/generation.hpp"
#include "distill_forge/hashing.hpp"
#include "distill_forge/jsonl.hpp"
#include "distill_forge/live_backend.hpp"
#include "distill_forge/mixture.hpp"
#include "distill_forge/quality_filter.hpp"
#include "distill_forge/records.hpp"

namespace distill {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct BackendSettings {
    std::string kind = "stub";  // stub | replay | live
    fs::path replay_dir;
    fs::path record_dir;  // optional: save every answer as a replay fixture
    std::size_t max_output_words = 512;
    std::size_t workers = 4;
    std::size_t rate_limit = 0;  // calls per second, 0 = unlimited
    RetryPolicy policy;
    LiveBackendConfig live;
};

struct PipelineConfig {
    fs::path output_dir = "out";
    fs::path general_corpus;
    fs::path supervised_corpus;
    IngestOptions ingest;
    BackendSettings backend;
    std::vector<Mode> modes{kAllModes.begin(), kAllModes.end()};
    std::array<double, 3> general_split{0.2, 0.4, 0.4};  // M1, M2, M3 shares of general docs
    FilterThresholds filter;
    GenerationConfig generation;
    MixtureSpec mixture;
    Variant variant = Variant::Balanced;
    std::size_t mixture_size = 2000;
    std::uint64_t generate_seed = 17;
    std::uint64_t mix_seed = 23;

    /// The fragment each stage fingerprints; excludes paths and worker counts.
    json settings_json() const {
        json modes_json = json::array();
        for (auto m : modes) modes_json.push_back(to_string(m));
        return json{{"ingest", {{"max_words", ingest.max_words}, {"non_english_threshold", ingest.non_english_threshold}}},
                    {"backend",
                     {{"kind", backend.kind},
                      {"max_output_words", backend.max_output_words},
                      {"model", backend.kind == "live" ? backend.live.model : ""}}},
                    {"modes", modes_json},
                    {"general_split", general_split},
                    {"filter", filter},
                    {"prompt",
                     {{"succinct_k", generation.succinct_k},
                      {"max_icds", generation.max_icds},
                      {"word_budget", generation.prompt_word_budget}}},
                    {"mixture",
                     {{"weights", mixture.weights}, {"variant", to_string(variant)}, {"n", mixture_size}}},
                    {"seeds", {{"generate", generate_seed}, {"mix", mix_seed}}}};
    }

    bool has_mode(Mode m) const { return std::find(modes.begin(), modes.end(), m) != modes.end(); }

    /// Checks everything that can be checked before any work starts.
    void validate() const {
        mixture.validate();
        auto require_file = [](const fs::path& p, std::string_view what) {
            if (p.empty()) throw ConfigurationError(std::string(what) + " path is not set");
            if (!fs::is_regular_file(p)) throw ConfigurationError(std::string(what) + " not found: " + p.string());
        };
        const bool needs_general = has_mode(Mode::M1) || has_mode(Mode::M2) || has_mode(Mode::M3);
        const bool needs_supervised =
            has_mode(Mode::M3) || has_mode(Mode::M4) || has_mode(Mode::M5) || has_mode(Mode::M6);
        if (needs_general) require_file(general_corpus, "general corpus");
        if (needs_supervised) require_file(supervised_corpus, "supervised corpus");
        if (has_mode(Mode::M2) && !has_mode(Mode::M1)) throw ConfigurationError("mode m2 requires m1");
        double split = 0.0;
        for (double s : general_split) {
            if (!(s >= 0.0)) throw ConfigurationError("general_split entries must be non-negative");
            split += s;
        }
        if (std::abs(split - 1.0) > 1e-9) throw ConfigurationError("general_split must sum to 1");
        if (backend.kind == "replay") {
            if (!fs::is_directory(backend.replay_dir)) {
                throw ConfigurationError("replay directory not found: " + backend.replay_dir.string());
            }
        } else if (backend.kind != "stub" && backend.kind != "live") {
            throw ConfigurationError("unknown backend kind '" + backend.kind + "'");
        }
        if (generation.max_icds == 0) throw ConfigurationError("max_icds must be >= 1");
        if (generation.succinct_k == 0) throw ConfigurationError("succinct_k must be >= 1");
        for (std::size_t g = 0; g < kGroupCount; ++g) {
            if (mixture.weights[g] <= 0.0) continue;
            bool present = false;
            for (auto m : modes) present = present || static_cast<std::size_t>(group_of(m)) == g;
            if (!present) {
                throw ConfigurationError("mixture group " + std::string(group_name(g)) +
                                         " has positive weight but none of its modes is enabled");
            }
        }
    }
};

/// Reads a JSON config; relative paths resolve against the config's directory.
inline PipelineConfig load_pipeline_config(const fs::path& path) {
    const json j = read_json(path);
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    auto resolve = [&](const std::string& p) -> fs::path {
        if (p.empty()) return {};
        const fs::path candidate(p);
        return candidate.is_absolute() ? candidate : base / candidate;
    };
    PipelineConfig c;
    try {
        c.output_dir = resolve(j.value("output_dir", std::string("out")));
        if (j.contains("corpora")) {
            c.general_corpus = resolve(j["corpora"].value("general", std::string{}));
            c.supervised_corpus = resolve(j["corpora"].value("supervised", std::string{}));
        }
        if (j.contains("ingest")) {
            c.ingest.max_words = j["ingest"].value("max_words", c.ingest.max_words);
            c.ingest.non_english_threshold = j["ingest"].value("non_english_threshold", c.ingest.non_english_threshold);
        }
        if (j.contains("backend")) {
            const auto& b = j["backend"];
            c.backend.kind = b.value("kind", c.backend.kind);
            c.backend.replay_dir = resolve(b.value("replay_dir", std::string{}));
            c.backend.record_dir = resolve(b.value("record_dir", std::string{}));
            c.backend.max_output_words = b.value("max_output_words", c.backend.max_output_words);
            c.backend.workers = b.value("workers", c.backend.workers);
            c.backend.rate_limit = b.value("rate_limit", c.backend.rate_limit);
            if (b.contains("policy")) {
                const auto& p = b["policy"];
                c.backend.policy.max_retries = p.value("max_retries", c.backend.policy.max_retries);
                c.backend.policy.initial_backoff =
                    std::chrono::milliseconds(p.value("initial_backoff_ms", c.backend.policy.initial_backoff.count()));
                c.backend.policy.backoff_multiplier = p.value("backoff_multiplier", c.backend.policy.backoff_multiplier);
            }
            if (b.contains("live")) {
                const auto& l = b["live"];
                c.backend.live.base_url = l.value("base_url", c.backend.live.base_url);
                c.backend.live.path = l.value("path", c.backend.live.path);
                c.backend.live.model = l.value("model", c.backend.live.model);
                c.backend.live.temperature = l.value("temperature", c.backend.live.temperature);
                c.backend.live.max_output_tokens = l.value("max_output_tokens", c.backend.live.max_output_tokens);
                c.backend.live.max_input_words = l.value("max_input_words", c.backend.live.max_input_words);
                c.backend.live.timeout_seconds = l.value("timeout_seconds", c.backend.live.timeout_seconds);
            }
        }
        if (j.contains("modes")) {
            c.modes.clear();
            for (const auto& m : j["modes"]) c.modes.push_back(parse_mode(m.get<std::string>()));
        }
        if (j.contains("general_split")) {
            const auto split = j["general_split"].get<std::vector<double>>();
            if (split.size() != 3) throw ConfigurationError("general_split needs three entries (m1, m2, m3)");
            std::copy(split.begin(), split.end(), c.general_split.begin());
        }
        if (j.contains("filter")) c.filter = j["filter"].get<FilterThresholds>();
        if (j.contains("prompt")) {
            c.generation.succinct_k = j["prompt"].value("succinct_k", c.generation.succinct_k);
            c.generation.max_icds = j["prompt"].value("max_icds", c.generation.max_icds);
            c.generation.prompt_word_budget = j["prompt"].value("word_budget", c.generation.prompt_word_budget);
        }
        if (j.contains("mixture")) {
            const auto& m = j["mixture"];
            if (m.contains("weights")) {
                const auto w = m["weights"].get<std::vector<double>>();
                if (w.size() != kGroupCount) throw ConfigurationError("mixture.weights needs five entries");
                std::copy(w.begin(), w.end(), c.mixture.weights.begin());
            }
            c.variant = parse_variant(m.value("variant", std::string(to_string(c.variant))));
            c.mixture_size = m.value("n", c.mixture_size);
        }
        if (j.contains("seeds")) {
            c.generate_seed = j["seeds"].value("generate", c.generate_seed);
            c.mix_seed = j["seeds"].value("mix", c.mix_seed);
        }
    } catch (const json::exception& e) {
        throw ConfigurationError(path.string() + ": " + e.what());
    }
    c.generation.policy = c.backend.policy;
    c.generation.workers = c.backend.workers;
    c.ingest.workers = c.backend.workers;
    return c;
}

// ---------------------------------------------------------------------------
// Checksums and stage bookkeeping
// ---------------------------------------------------------------------------

/// SHA-256 of a file; JSONL files are hashed with every "timestamp" field
/// removed so regenerated records compare equal.
inline std::string canonical_checksum(const fs::path& path) {
    if (path.extension() != ".jsonl") return file_sha256(path);
    Sha256 hasher;
    for_each_jsonl(path, [&](const json& record, std::size_t) {
        json copy = record;
        if (copy.is_object()) copy.erase("timestamp");
        hasher.update(copy.dump());
        hasher.update("\n");
    });
    return hasher.hex_digest();
}

struct StageResult {
    std::vector<fs::path> outputs;  // relative to output_dir
    json counts = json::object();
};

struct PipelineOptions {
    std::string fail_after_stage;  // test hook: crash after this stage writes its outputs
    std::function<void(const std::string&, bool skipped)> on_stage;
};

struct PipelineResult {
    json manifest;
    std::vector<std::string> skipped_stages;
    std::vector<std::string> executed_stages;
};

class InjectedFailure : public Error {
public:
    using Error::Error;
};

inline std::unique_ptr<Backend> make_backend(const BackendSettings& s) {
    if (s.kind == "stub") return std::make_unique<StubBackend>(s.max_output_words);
    if (s.kind == "replay") return std::make_unique<ReplayBackend>(s.replay_dir);
    if (s.kind == "live") return std::make_unique<LiveBackend>(s.live);
    throw ConfigurationError("unknown backend kind '" + s.kind + "'");
}

/// Runs ingest, generation, filtering, pooling and mixing. Every stage is
/// checksum-guarded: a stage whose inputs, settings and outputs are
/// unchanged since its last successful run is skipped, so an interrupted run
/// resumes where it stopped.
class Pipeline {
public:
    Pipeline(PipelineConfig config, PipelineOptions options = {})
        : config_(std::move(config)), options_(std::move(options)) {
        // Stage inputs that are not absolute are taken to live under output_dir.
        if (!config_.general_corpus.empty()) config_.general_corpus = fs::absolute(config_.general_corpus);
        if (!config_.supervised_corpus.empty()) config_.supervised_corpus = fs::absolute(config_.supervised_corpus);
    }

    PipelineResult run() {
        config_.validate();
        fs::create_directories(config_.output_dir / ".stages");
        result_ = {};
        stages_ = json::array();

        const fs::path documents = "ingest/documents.jsonl";
        const bool any_general = config_.has_mode(Mode::M1) || config_.has_mode(Mode::M2) || config_.has_mode(Mode::M3);
        if (any_general) {
            stage("ingest", {config_.general_corpus}, [&] {
                auto res = ingest(load_documents(config_.general_corpus), config_.ingest);
                write_jsonl(out(documents), res.documents);
                write_json(out("ingest/report.json"), json(res.report));
                return StageResult{{documents, "ingest/report.json"}, json(res.report)};
            });
        }

        for (Mode m : {Mode::M1, Mode::M2, Mode::M3, Mode::M4, Mode::M5, Mode::M6}) {
            if (!config_.has_mode(m)) continue;
            generate_stage(m, documents);
            filter_stage(m, documents);
        }

        pool_stage(documents);
        mix_stage();
        return finish();
    }

private:
    fs::path out(const fs::path& rel) const { return config_.output_dir / rel; }

    static fs::path records_path(Mode m) { return "generate/m" + std::to_string(mode_number(m)) + ".jsonl"; }
    static fs::path filtered_path(Mode m) { return "filter/m" + std::to_string(mode_number(m)) + ".jsonl"; }
    static fs::path pool_path(Mode m) { return "pools/m" + std::to_string(mode_number(m)) + ".jsonl"; }

    void stage(const std::string& name, const std::vector<fs::path>& inputs, const std::function<StageResult()>& body) {
        json input_sums = json::object();
        for (const auto& p : inputs) {
            const fs::path abs = p.is_absolute() ? p : out(p);
            input_sums[p.filename().string() + "@" + std::to_string(input_sums.size())] = canonical_checksum(abs);
        }
        const std::string fingerprint =
            sha256_hex(json{{"stage", name}, {"settings", config_.settings_json()}, {"inputs", input_sums}}.dump());
        const fs::path stamp_path = out(fs::path(".stages") / (name + ".json"));

        if (fs::exists(stamp_path)) {
            const json stamp = read_json(stamp_path);
            bool fresh = stamp.value("fingerprint", "") == fingerprint;
            for (const auto& [rel, sum] : stamp.at("outputs").items()) {
                if (!fresh) break;
                try {
                    fresh = fs::exists(out(rel)) && canonical_checksum(out(rel)) == sum.get<std::string>();
                } catch (const Error&) {
                    fresh = false;  // unreadable output, e.g. a partial write
                }
            }
            if (fresh) {
                stages_.push_back(stamp);
                result_.skipped_stages.push_back(name);
                if (options_.on_stage) options_.on_stage(name, true);
                return;
            }
        }

        StageResult produced;
        try {
            produced = body();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e);
        }
        if (options_.fail_after_stage == name) {
            if (!produced.outputs.empty()) {
                const auto victim = out(produced.outputs.front());
                fs::resize_file(victim, fs::file_size(victim) / 2);
            }
            throw StageError(name, InjectedFailure("injected failure"));
        }

        json outputs = json::object();
        for (const auto& rel : produced.outputs) outputs[rel.generic_string()] = canonical_checksum(out(rel));
        const json stamp{{"stage", name}, {"fingerprint", fingerprint}, {"outputs", outputs}, {"counts", produced.counts}};
        write_json(stamp_path, stamp);
        stages_.push_back(stamp);
        result_.executed_stages.push_back(name);
        if (options_.on_stage) options_.on_stage(name, false);
    }

    /// General documents are split in file order: the first share feeds M1,
    /// the next M2, the rest M3.
    std::vector<InputDoc> general_inputs(Mode m, const fs::path& documents) const {
        const auto docs = load_documents(out(documents));
        const auto n = static_cast<double>(docs.size());
        const auto b1 = static_cast<std::size_t>(std::llround(config_.general_split[0] * n));
        const auto b2 = static_cast<std::size_t>(std::llround((config_.general_split[0] + config_.general_split[1]) * n));
        std::size_t lo = 0;
        std::size_t hi = docs.size();
        if (m == Mode::M1) hi = std::min(b1, docs.size());
        if (m == Mode::M2) lo = std::min(b1, docs.size()), hi = std::min(b2, docs.size());
        if (m == Mode::M3) lo = std::min(b2, docs.size());
        std::vector<InputDoc> inputs;
        for (std::size_t i = lo; i < hi; ++i) inputs.push_back(to_input(docs[i]));
        return inputs;
    }

    std::vector<InputDoc> inputs_for(Mode m, const fs::path& documents) const {
        if (mode_spec(m).input_source == InputSource::General) return general_inputs(m, documents);
        return to_inputs(load_pairs(config_.supervised_corpus));
    }

    std::vector<LabeledPair> icd_pool_for(Mode m, const fs::path& documents) const {
        switch (mode_spec(m).icd_doc_source) {
            case IcdDocSource::None: return {};
            case IcdDocSource::Supervised: return load_pairs(config_.supervised_corpus);
            case IcdDocSource::General: {
                const auto m1 = load_records(out(filtered_path(Mode::M1)));
                const auto docs = general_inputs(Mode::M1, documents);
                return icd_pool_from_records(m1, docs);
            }
        }
        return {};
    }

    std::vector<fs::path> stage_inputs(Mode m, const fs::path& documents) const {
        std::vector<fs::path> inputs;
        const auto spec = mode_spec(m);
        if (spec.input_source == InputSource::General) inputs.push_back(documents);
        if (spec.input_source == InputSource::Supervised || spec.icd_doc_source == IcdDocSource::Supervised) {
            inputs.push_back(config_.supervised_corpus);
        }
        if (spec.icd_doc_source == IcdDocSource::General) inputs.push_back(filtered_path(Mode::M1));
        return inputs;
    }

    Backend& backend() {
        if (!backend_) {
            backend_ = make_backend(config_.backend);
            if (!config_.backend.record_dir.empty()) {
                recorder_ = std::make_unique<RecordingBackend>(*backend_, config_.backend.record_dir);
            }
            limiter_ = std::make_unique<RateLimiter>(config_.backend.rate_limit);
        }
        return recorder_ ? static_cast<Backend&>(*recorder_) : *backend_;
    }

    void generate_stage(Mode m, const fs::path& documents) {
        const std::string name = "generate_m" + std::to_string(mode_number(m));
        stage(name, stage_inputs(m, documents), [&] {
            const auto docs = inputs_for(m, documents);
            const auto pool = icd_pool_for(m, documents);
            auto records = run_mode(m, docs, pool, backend(), config_.generate_seed, config_.generation,
                                    limiter_ ? limiter_.get() : nullptr);
            write_jsonl(out(records_path(m)), records);
            std::size_t errors = 0;
            for (const auto& r : records) errors += r.finish_reason == FinishReason::Error ? 1 : 0;
            if (!records.empty() && errors == records.size() && mode_spec(m).calls_backend()) {
                throw BackendExhausted("every " + to_string(m) + " call failed (first record " + records.front().id + ")");
            }
            return StageResult{{records_path(m)}, json{{"generated", records.size()}, {"errors", errors}}};
        });
    }

    void filter_stage(Mode m, const fs::path& documents) {
        const std::string name = "filter_m" + std::to_string(mode_number(m));
        std::vector<fs::path> inputs{records_path(m)};
        if (mode_spec(m).input_source == InputSource::General) {
            inputs.push_back(documents);
        } else {
            inputs.push_back(config_.supervised_corpus);
        }
        stage(name, inputs, [&] {
            std::unordered_map<std::string, std::string> texts;
            for (const auto& d : inputs_for(m, documents)) texts.emplace(d.id, d.text);
            auto result = filter_records(load_records(out(records_path(m))), texts, config_.filter, config_.backend.workers);
            write_jsonl(out(filtered_path(m)), result.records);
            const fs::path report = "filter/m" + std::to_string(mode_number(m)) + ".report.json";
            write_json(out(report), json(result.report));
            const auto& s = result.report.per_mode[to_string(m)];
            return StageResult{{filtered_path(m), report},
                               json{{"generated", s.generated}, {"kept", s.kept}, {"dropped", s.dropped}}};
        });
    }

    void pool_stage(const fs::path& documents) {
        std::vector<fs::path> inputs;
        for (auto m : config_.modes) inputs.push_back(filtered_path(m));
        if (fs::exists(out(documents))) inputs.push_back(documents);
        if (!config_.supervised_corpus.empty() && fs::exists(config_.supervised_corpus)) {
            inputs.push_back(config_.supervised_corpus);
        }
        stage("pool", inputs, [&] {
            StageResult res;
            for (auto m : config_.modes) {
                const auto records = load_records(out(filtered_path(m)));
                const auto pool = build_pool(records, inputs_for(m, documents), icd_pool_for(m, documents));
                write_jsonl(out(pool_path(m)), pool);
                res.outputs.push_back(pool_path(m));
                res.counts[to_string(m)] = pool.size();
            }
            return res;
        });
    }

    void mix_stage() {
        std::vector<fs::path> inputs;
        for (auto m : config_.modes) inputs.push_back(pool_path(m));
        stage("mix", inputs, [&] {
            std::vector<PoolExample> all;
            for (auto m : config_.modes) {
                auto part = load_pool(out(pool_path(m)));
                all.insert(all.end(), part.begin(), part.end());
            }
            const RenderOptions render{config_.generation.succinct_k, config_.generation.prompt_word_budget};
            const auto examples =
                build_mixture(group_pools(all), config_.mixture, config_.variant, config_.mixture_size, config_.mix_seed, render);
            const fs::path dest = "mixture/train.jsonl";
            export_examples(out(dest), examples);
            json per_mode = json::object();
            for (const auto& e : examples) per_mode[to_string(e.mode)] = per_mode.value(to_string(e.mode), 0) + 1;
            return StageResult{{dest}, json{{"examples", examples.size()}, {"per_mode", per_mode}}};
        });
    }

    PipelineResult finish() {
        json manifest{{"generated_at", utc_timestamp()},
                      {"settings", config_.settings_json()},
                      {"stages", stages_}};
        write_json(out("manifest.json"), manifest);
        result_.manifest = std::move(manifest);
        return std::move(result_);
    }

    PipelineConfig config_;
    PipelineOptions options_;
    PipelineResult result_;
    json stages_;
    std::unique_ptr<Backend> backend_;
    std::unique_ptr<RecordingBackend> recorder_;
    std::unique_ptr<RateLimiter> limiter_;
};

inline PipelineResult run_pipeline(const PipelineConfig& config, const PipelineOptions& options = {}) {
    return Pipeline(config, options).run();
}

/// Manifest with the wall-clock field removed, for run-to-run comparison.
inline json manifest_without_timestamps(json manifest) {
    manifest.erase("generated_at");
    return manifest;
}

}  // namespace distill

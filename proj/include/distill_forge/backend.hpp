#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "distill_forge/errors.hpp"
#include "distill_forge/hashing.hpp"
#include "distill_forge/jsonl.hpp"
#include "distill_forge/prompt_forge.hpp"
#include "distill_forge/text.hpp"

namespace distill {

enum class FinishReason { Stop, Length, ContentFilter, Error };

inline std::string_view to_string(FinishReason r) {
    switch (r) {
        case FinishReason::Stop: return "stop";
        case FinishReason::Length: return "length";
        case FinishReason::ContentFilter: return "content_filter";
        case FinishReason::Error: return "error";
    }
    return "error";
}

inline FinishReason parse_finish_reason(std::string_view s) {
    if (s == "stop") return FinishReason::Stop;
    if (s == "length") return FinishReason::Length;
    if (s == "content_filter") return FinishReason::ContentFilter;
    if (s == "error") return FinishReason::Error;
    throw InvalidData("unknown finish_reason '" + std::string(s) + "'");
}

struct Completion {
    std::string text;
    FinishReason finish_reason = FinishReason::Stop;
};

/// Thrown by backends for failures worth retrying (throttling, timeouts, 5xx).
class TransientBackendError : public Error {
public:
    using Error::Error;
};

/// Thrown by backends for failures that retrying cannot fix.
class BackendFailure : public Error {
public:
    using Error::Error;
};

/// Abstract completion backend. Implementations must be safe to call from
/// several worker threads at once.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string name() const = 0;
    virtual std::size_t max_input_words() const { return 1'000'000; }
    virtual Completion complete(std::string_view prompt) = 0;
};

using SteadyTime = std::chrono::steady_clock::time_point;

/// Recovers the document a prompt asks to summarize: the text after the last
/// "following" marker, or the middle of whichever instruction template
/// brackets the prompt most tightly. Falls back to the whole prompt.
inline std::string_view extract_target_document(std::string_view prompt,
                                                const TemplateLibrary& lib = TemplateLibrary::builtin()) {
    auto split = [](const PromptTemplate& t) {
        const auto at = t.body.find(kDocPlaceholder);
        return std::pair{std::string_view(t.body).substr(0, at),
                         std::string_view(t.body).substr(at + kDocPlaceholder.size())};
    };
    {
        const auto [prefix, suffix] = split(lib.following());
        const auto at = prompt.rfind(prefix);
        if (at != std::string_view::npos) {
            auto rest = prompt.substr(at + prefix.size());
            if (rest.ends_with(suffix)) rest.remove_suffix(suffix.size());
            return rest;
        }
    }
    std::string_view best = prompt;
    std::size_t best_frame = 0;
    for (const auto& t : lib.instructions()) {
        const auto [prefix, suffix] = split(t);
        const std::size_t frame = prefix.size() + suffix.size();
        if (frame <= best_frame || prompt.size() < frame) continue;
        if (prompt.starts_with(prefix) && prompt.ends_with(suffix)) {
            best = prompt.substr(prefix.size(), prompt.size() - frame);
            best_frame = frame;
        }
    }
    return best;
}

/// First `count` sentences; a sentence ends at . ! or ? followed by
/// whitespace or end of text.
inline std::string_view leading_sentences(std::string_view text, std::size_t count) {
    text = trim(text);
    std::size_t found = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        const bool boundary = i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\n' ||
                              text[i + 1] == '\t' || text[i + 1] == '\r';
        if (boundary && ++found == count) return text.substr(0, i + 1);
    }
    return text;
}

/// Deterministic offline summarizer: the first two sentences of the target
/// document with every third word dropped. Records the time of every call.
class StubBackend : public Backend {
public:
    explicit StubBackend(std::size_t max_output_words = 512) : max_output_words_(max_output_words) {}

    std::string name() const override { return "stub"; }

    Completion complete(std::string_view prompt) override {
        {
            std::lock_guard lock(mu_);
            call_log_.push_back(std::chrono::steady_clock::now());
        }
        const auto lead = leading_sentences(extract_target_document(prompt), 2);
        const auto words = split_words(lead);
        Completion out;
        std::size_t kept = 0;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (i % 3 == 2) continue;
            if (kept == max_output_words_) {
                out.finish_reason = FinishReason::Length;
                break;
            }
            if (kept != 0) out.text += ' ';
            out.text += words[i];
            ++kept;
        }
        return out;
    }

    std::vector<SteadyTime> call_log() const {
        std::lock_guard lock(mu_);
        return call_log_;
    }

private:
    std::size_t max_output_words_;
    mutable std::mutex mu_;
    std::vector<SteadyTime> call_log_;
};

/// Fixture file layout shared by ReplayBackend and RecordingBackend:
/// `<dir>/<prompt_key>.json` = {"prompt_key", "text", "finish_reason"}.
inline std::filesystem::path fixture_path(const std::filesystem::path& dir, std::string_view prompt) {
    return dir / (prompt_key(prompt) + ".json");
}

class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(std::filesystem::path dir) : dir_(std::move(dir)) {
        if (!std::filesystem::is_directory(dir_)) {
            throw ConfigurationError("replay fixture directory not found: " + dir_.string());
        }
    }

    std::string name() const override { return "replay"; }

    Completion complete(std::string_view prompt) override {
        const auto path = fixture_path(dir_, prompt);
        if (!std::filesystem::exists(path)) {
            throw BackendFailure("no replay fixture " + path.filename().string());
        }
        const json fixture = read_json(path);
        return {fixture.at("text").get<std::string>(),
                parse_finish_reason(fixture.at("finish_reason").get<std::string>())};
    }

private:
    std::filesystem::path dir_;
};

/// Forwards to another backend and saves each answer as a replay fixture.
class RecordingBackend : public Backend {
public:
    RecordingBackend(Backend& inner, std::filesystem::path dir) : inner_(inner), dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    std::string name() const override { return inner_.name(); }
    std::size_t max_input_words() const override { return inner_.max_input_words(); }

    Completion complete(std::string_view prompt) override {
        Completion c = inner_.complete(prompt);
        write_json(fixture_path(dir_, prompt), json{{"prompt_key", prompt_key(prompt)},
                                                    {"text", c.text},
                                                    {"finish_reason", to_string(c.finish_reason)}});
        return c;
    }

private:
    Backend& inner_;
    std::filesystem::path dir_;
};

/// Sliding-window limiter: at most `max_per_second` acquisitions in any
/// one-second window. A small guard widens the window so that call times
/// observed just after acquire() still respect the limit.
class RateLimiter {
public:
    static constexpr auto kGuard = std::chrono::milliseconds(5);

    explicit RateLimiter(std::size_t max_per_second) : limit_(max_per_second) {}

    void acquire() {
        if (limit_ == 0) return;
        std::lock_guard lock(mu_);
        const auto window = std::chrono::seconds(1) + kGuard;
        while (true) {
            const auto now = std::chrono::steady_clock::now();
            while (!recent_.empty() && now - recent_.front() >= window) recent_.pop_front();
            if (recent_.size() < limit_) {
                recent_.push_back(now);
                return;
            }
            std::this_thread::sleep_until(recent_.front() + window);
        }
    }

    std::size_t limit() const { return limit_; }

private:
    std::size_t limit_;
    std::mutex mu_;
    std::deque<SteadyTime> recent_;
};

struct RetryPolicy {
    std::size_t max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    double backoff_multiplier = 2.0;
};

struct PolicyOutcome {
    Completion completion;
    std::size_t attempts = 0;
    std::string error_message;
};

/// Calls the backend with retries on transient failures (exponential
/// backoff). Content-filter answers are returned as-is and never retried;
/// exhausted retries and hard failures yield finish_reason Error.
inline PolicyOutcome complete_with_policy(Backend& backend, std::string_view prompt, const RetryPolicy& policy,
                                          RateLimiter* limiter = nullptr) {
    PolicyOutcome outcome;
    outcome.completion.finish_reason = FinishReason::Error;
    if (count_words(prompt) > backend.max_input_words()) {
        outcome.error_message = "prompt exceeds backend max_input_words";
        return outcome;
    }
    auto backoff = std::chrono::duration<double, std::milli>(policy.initial_backoff);
    for (std::size_t attempt = 0; attempt <= policy.max_retries; ++attempt) {
        if (attempt != 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= policy.backoff_multiplier;
        }
        if (limiter != nullptr) limiter->acquire();
        ++outcome.attempts;
        try {
            outcome.completion = backend.complete(prompt);
            outcome.error_message.clear();
            return outcome;
        } catch (const TransientBackendError& e) {
            outcome.error_message = e.what();
        } catch (const std::exception& e) {
            outcome.error_message = e.what();
            return outcome;
        }
    }
    return outcome;
}

}  // namespace distill

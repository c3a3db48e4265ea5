#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rrchan/config.hpp"
#include "rrchan/event.hpp"
#include "rrchan/ids.hpp"
#include "rrchan/log_file.hpp"

namespace rrchan {

/// How a replayed execution was detected to have diverged from its log.
enum class desync_reason : std::uint8_t {
    event_type_mismatch,
    channel_mismatch,
    flavor_mismatch,
    timeout_waiting_for_sender,
    end_of_log,
    select_index_out_of_range,
};

struct desync_context {
    desync_reason reason;
    det_thread_id expected_sender;  // timeout_waiting_for_sender only
    det_thread_id thread;
    std::uint64_t event_id = 0;
    std::string channel = "-";
};

inline std::string desync_reason_text(const desync_context& dc) {
    switch (dc.reason) {
        case desync_reason::event_type_mismatch: return "event-type-mismatch";
        case desync_reason::channel_mismatch: return "channel-mismatch";
        case desync_reason::flavor_mismatch: return "flavor-mismatch";
        case desync_reason::timeout_waiting_for_sender:
            return "timeout-waiting-for-sender(expected=" + dc.expected_sender.str() + ")";
        case desync_reason::end_of_log: return "end-of-log";
        case desync_reason::select_index_out_of_range: return "select-index-out-of-range";
    }
    return "?";
}

/// Compares a replayed operation against its log entry: event type, channel
/// id(s) and flavor must all match, in that order of precedence.
inline std::optional<desync_reason> check_sync(const log_entry& entry, event_type observed,
                                               std::span<const det_channel_id> channels,
                                               channel_flavor flavor) {
    if (entry.type != observed) return desync_reason::event_type_mismatch;
    if (entry.channels.size() != channels.size() ||
        !std::equal(entry.channels.begin(), entry.channels.end(), channels.begin()))
        return desync_reason::channel_mismatch;
    if (entry.flavor != flavor) return desync_reason::flavor_mismatch;
    return std::nullopt;
}

namespace detail {

// One thread's recorded events. Managed threads own a segment each; all
// unmanaged (NONE) threads share one, so its mutex is the only contended one.
struct record_segment {
    std::mutex mu;
    det_thread_id thread;
    std::uint64_t next_event_id = 0;
    std::vector<log_entry> entries;
};

inline std::string channel_list_text(std::span<const det_channel_id> channels) {
    if (channels.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (i) out += ',';
        out += channels[i].str();
    }
    return out;
}

}  // namespace detail

/// Process-global record/replay engine. One instance per process, created on
/// first use and intentionally never destroyed so that threads released
/// during process teardown can still touch it safely.
class runtime_state {
public:
    static runtime_state& instance() {
        static runtime_state* s = new runtime_state();
        return *s;
    }

    const config& cfg() const { return cfg_; }
    rr_mode mode() const { return cfg_.mode; }

    bool desynced() const { return desynced_.load(std::memory_order_acquire); }

    // Poll slice for forced receives; a desync elsewhere is noticed within
    // one slice.
    static constexpr std::chrono::milliseconds poll_slice{100};

    // ------------------------------------------------------------------ record

    /// Appends one event to the calling thread's segment and advances its
    /// logical clock. Only meaningful in record mode.
    void record_event(event_type type, channel_flavor flavor, std::string_view data_type,
                      event_status status, std::vector<det_channel_id> channels) {
        detail::record_segment* seg = my_segment();
        std::lock_guard lk(seg->mu);
        log_entry e;
        e.thread = seg->thread;
        e.event_id = seg->next_event_id++;
        e.type = type;
        e.flavor = flavor;
        e.data_type = std::string(data_type);
        e.status = std::move(status);
        e.channels = std::move(channels);
        seg->entries.push_back(std::move(e));
    }

    /// Merges all segments and writes the log file. Runs at process exit; a
    /// failure is reported but never alters the exit status.
    void flush_record() {
        record_log log;
        {
            std::lock_guard reg(reg_mu_);
            for (const auto& seg : segments_) {
                std::lock_guard lk(seg->mu);
                for (const auto& e : seg->entries) log.add(e);
            }
        }
        try {
            serialize_log(log, cfg_.record_file);
        } catch (const std::exception& ex) {
            std::fprintf(stderr, "rr-error: failed to write record log: %s\n", ex.what());
        }
    }

    // ------------------------------------------------------------------ replay

    struct replay_decision {
        bool forced = false;            // false: execute the operation natively
        const log_entry* entry = nullptr;
    };

    /// Consults the log for the calling thread's next event. Handles the
    /// desynced fast path, end-of-log parking, and divergence detection. When
    /// `forced` is returned the caller must realize entry->status.
    replay_decision replay_next(event_type observed, std::span<const det_channel_id> channels,
                                channel_flavor flavor) {
        auto& tc = detail::ctx();
        if (desynced()) {
            trace_op("native", observed, tc.id, tc.logical_clock);
            return {};
        }

        const log_entry* entry = nullptr;
        std::uint64_t at = 0;
        if (tc.id.is_none()) {
            std::lock_guard lk(none_mu_);
            at = none_clock_;
            entry = lookup(tc.id, at);
            if (entry) none_clock_ = at + 1;
        } else {
            at = tc.logical_clock;
            entry = lookup_cached(tc.id, at);
            if (entry) tc.logical_clock = at + 1;
        }
        trace_op("consult", observed, tc.id, at);

        if (!entry) {
            park_at_end_of_log(tc.id, at, detail::channel_list_text(channels));
            trace_op("native", observed, tc.id, at);
            return {};
        }
        if (auto reason = check_sync(*entry, observed, channels, flavor)) {
            note_desync({*reason, {}, tc.id, at, detail::channel_list_text(channels)});
            trace_op("native", observed, tc.id, at);
            return {};
        }
        return {true, entry};
    }

    /// Transitions to desynchronized execution: idempotent, wakes every
    /// parked thread, emits one warning line on the first transition. Under
    /// the error_out policy the process terminates instead.
    void note_desync(const desync_context& dc) {
        bool first = false;
        {
            std::lock_guard lk(wait_mu_);
            first = transition_desync_locked();
        }
        if (first) report_desync(dc);
    }

    std::chrono::milliseconds desync_timeout() const { return cfg_.desync_timeout; }

    // --------------------------------------------------------- thread lifecycle

    // Managed-thread accounting feeds the quiescence check: when every alive
    // managed thread is parked at end-of-log, no event can ever arrive, so
    // the parked threads are released into desynchronized execution.

    void on_managed_thread_begin() {
        std::lock_guard lk(wait_mu_);
        managed_alive_ += 1;
    }

    void on_managed_thread_end() {
        bool fire = false;
        {
            std::lock_guard lk(wait_mu_);
            managed_alive_ -= 1;
            if (quiescent_locked()) fire = transition_desync_locked();
        }
        if (fire)
            report_desync({desync_reason::end_of_log, {}, current_thread_id(),
                           detail::ctx().logical_clock, "-"});
    }

    /// Debug/test hooks.
    std::size_t recorded_event_count() {
        std::lock_guard reg(reg_mu_);
        std::size_t n = 0;
        for (const auto& seg : segments_) {
            std::lock_guard lk(seg->mu);
            n += seg->entries.size();
        }
        return n;
    }

    void trace_op(const char* path, event_type t, const det_thread_id& who, std::uint64_t at) {
        if (!cfg_.trace_ops) return;
        std::fprintf(stderr, "rr-op: %s type=%s thread=%s event=%llu\n", path,
                     std::string(event_type_name(t)).c_str(), who.str().c_str(),
                     static_cast<unsigned long long>(at));
    }

private:
    runtime_state() : cfg_(load_env_config()) {
        if (cfg_.mode == rr_mode::replay) load_replay_log();
        if (cfg_.mode == rr_mode::record) std::atexit([] { instance().flush_record(); });
        if (cfg_.mode == rr_mode::replay) std::atexit([] { instance().teardown_release(); });
        {
            std::lock_guard lk(wait_mu_);
            managed_alive_ += 1;  // the main thread
        }
    }

    void load_replay_log() {
        try {
            record_log log = deserialize_log(cfg_.record_file);
            for (const auto& [key, entry] : log.entries())
                replay_by_thread_[key.first].emplace(key.second, entry);
        } catch (const std::exception& ex) {
            std::fprintf(stderr, "rr-error: cannot load replay log: %s\n", ex.what());
            std::exit(exit_code_bad_log);
        }
    }

    const log_entry* lookup(const det_thread_id& thread, std::uint64_t event_id) const {
        auto it = replay_by_thread_.find(thread);
        if (it == replay_by_thread_.end()) return nullptr;
        auto jt = it->second.find(event_id);
        return jt == it->second.end() ? nullptr : &jt->second;
    }

    const log_entry* lookup_cached(const det_thread_id& thread, std::uint64_t event_id) const {
        thread_local const std::map<std::uint64_t, log_entry>* entries = nullptr;
        thread_local bool resolved = false;
        if (!resolved) {
            auto it = replay_by_thread_.find(thread);
            entries = it == replay_by_thread_.end() ? nullptr : &it->second;
            resolved = true;
        }
        if (!entries) return nullptr;
        auto jt = entries->find(event_id);
        return jt == entries->end() ? nullptr : &jt->second;
    }

    // Caller holds wait_mu_.
    bool transition_desync_locked() {
        if (desynced_.load(std::memory_order_relaxed)) {
            wait_cv_.notify_all();
            return false;
        }
        desynced_.store(true, std::memory_order_release);
        wait_cv_.notify_all();
        return true;
    }

    bool quiescent_locked() const {
        return !desynced_.load(std::memory_order_relaxed) && managed_alive_ > 0 &&
               managed_parked_ == managed_alive_;
    }

    void report_desync(const desync_context& dc) {
        std::fprintf(stderr, "rr-desync: %s thread=%s event=%llu channel=%s\n",
                     desync_reason_text(dc).c_str(), dc.thread.str().c_str(),
                     static_cast<unsigned long long>(dc.event_id), dc.channel.c_str());
        if (cfg_.policy == desync_policy::error_out) std::exit(exit_code_desync);
    }

    /// The log has no entry for this thread's next event: in the recorded
    /// execution the thread never got here. Suspend until a desync (detected
    /// anywhere), quiescence, or process teardown releases it.
    void park_at_end_of_log(const det_thread_id& who, std::uint64_t event_id,
                            const std::string& channel) {
        if (cfg_.policy == desync_policy::error_out) {
            report_desync({desync_reason::end_of_log, {}, who, event_id, channel});
            std::exit(exit_code_desync);  // unreachable; report_desync exits
        }
        bool managed = !who.is_none();
        bool fire = false;
        {
            std::unique_lock lk(wait_mu_);
            parked_ += 1;
            if (managed) managed_parked_ += 1;
            if (managed && quiescent_locked()) fire = transition_desync_locked();
            wait_cv_.wait(lk, [&] { return desynced_.load(std::memory_order_relaxed); });
            parked_ -= 1;
            if (managed) managed_parked_ -= 1;
        }
        if (fire) report_desync({desync_reason::end_of_log, {}, who, event_id, channel});
    }

    /// atexit hook (replay mode): if threads are still parked at end-of-log
    /// when the process exits, release them so teardown can finish.
    void teardown_release() {
        bool fire = false;
        {
            std::lock_guard lk(wait_mu_);
            if (parked_ > 0) fire = transition_desync_locked();
        }
        if (fire)
            report_desync({desync_reason::end_of_log, {}, current_thread_id(),
                           detail::ctx().logical_clock, "-"});
    }

    detail::record_segment* my_segment() {
        thread_local std::shared_ptr<detail::record_segment> tl;
        if (!tl) {
            const det_thread_id id = detail::ctx().id;
            std::lock_guard reg(reg_mu_);
            if (id.is_none()) {
                if (!none_segment_) {
                    none_segment_ = std::make_shared<detail::record_segment>();
                    none_segment_->thread = det_thread_id::none();
                    segments_.push_back(none_segment_);
                }
                tl = none_segment_;
            } else {
                tl = std::make_shared<detail::record_segment>();
                tl->thread = id;
                segments_.push_back(tl);
            }
        }
        return tl.get();
    }

    config cfg_;

    // record state
    std::mutex reg_mu_;
    std::vector<std::shared_ptr<detail::record_segment>> segments_;
    std::shared_ptr<detail::record_segment> none_segment_;

    // replay state
    std::map<det_thread_id, std::map<std::uint64_t, log_entry>> replay_by_thread_;
    std::mutex none_mu_;
    std::uint64_t none_clock_ = 0;

    // desync + end-of-log machinery
    std::atomic<bool> desynced_{false};
    std::mutex wait_mu_;
    std::condition_variable wait_cv_;
    int parked_ = 0;
    int managed_parked_ = 0;
    int managed_alive_ = 0;
};

}  // namespace rrchan

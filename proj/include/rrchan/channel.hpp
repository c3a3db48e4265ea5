#pragma once

#include <cassert>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "rrchan/event.hpp"
#include "rrchan/ids.hpp"
#include "rrchan/runtime.hpp"

namespace rrchan {

/// A payload together with the id of the thread that sent it. Every message
/// travels in this envelope, in every mode.
template <class T>
struct message {
    det_thread_id sender;
    T payload;
};

enum class recv_error : std::uint8_t { empty, timeout, disconnected };
enum class send_result : std::uint8_t { ok, disconnected };

inline const char* recv_error_name(recv_error e) {
    switch (e) {
        case recv_error::empty: return "empty";
        case recv_error::timeout: return "timeout";
        case recv_error::disconnected: return "disconnected";
    }
    return "?";
}

/// Result of a receive: either a message (payload + sender id) or the reason
/// none was delivered.
template <class T>
class recv_result {
public:
    recv_result(message<T> m) : v_(std::move(m)) {}
    recv_result(recv_error e) : v_(e) {}

    bool has_value() const { return std::holds_alternative<message<T>>(v_); }
    explicit operator bool() const { return has_value(); }

    T& value() { return std::get<message<T>>(v_).payload; }
    const T& value() const { return std::get<message<T>>(v_).payload; }
    const det_thread_id& sender() const { return std::get<message<T>>(v_).sender; }
    message<T>& envelope() { return std::get<message<T>>(v_); }
    const message<T>& envelope() const { return std::get<message<T>>(v_); }
    recv_error error() const { return std::get<recv_error>(v_); }

private:
    std::variant<message<T>, recv_error> v_;
};

/// Result of a select: the ready receiver's index plus its message, or an
/// error once every channel in the set is disconnected.
template <class T>
class select_result {
public:
    select_result(std::size_t index, message<T> m) : v_(std::pair{index, std::move(m)}) {}
    select_result(recv_error e) : v_(e) {}

    bool has_value() const { return v_.index() == 0; }
    explicit operator bool() const { return has_value(); }

    std::size_t index() const { return std::get<0>(v_).first; }
    T& value() { return std::get<0>(v_).second.payload; }
    const T& value() const { return std::get<0>(v_).second.payload; }
    const det_thread_id& sender() const { return std::get<0>(v_).second.sender; }
    recv_error error() const { return std::get<recv_error>(v_); }

private:
    std::variant<std::pair<std::size_t, message<T>>, recv_error> v_;
};

namespace detail {

// Wakes a thread blocked in select when any of its channels gets a message
// or loses its last sender. Notified while the channel mutex is held, so the
// pointer installed in chan_state can never dangle mid-notify.
struct select_waker {
    std::mutex mu;
    std::condition_variable cv;
    bool notified = false;

    void notify() {
        {
            std::lock_guard lk(mu);
            notified = true;
        }
        cv.notify_all();
    }
    void wait() {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return notified; });
        notified = false;
    }
};

template <class T>
struct chan_state {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<message<T>> queue;
    std::size_t sender_count = 1;
    bool receiver_alive = true;
    select_waker* waker = nullptr;

    det_channel_id id;
    channel_flavor flavor = channel_flavor::local_unbounded;
    std::string data_type;

    // ambiguity warning: multiple distinct unmanaged threads on one channel
    std::optional<std::thread::id> first_unmanaged;
    bool warned_unmanaged = false;

    // replay: wrong-sender envelopes parked in arrival order; owned by the
    // receiver's thread, drained before live messages after a desync
    std::deque<message<T>> replay_buffer;
};

template <class T>
send_result native_send(chan_state<T>& s, message<T> m) {
    {
        std::lock_guard lk(s.mu);
        if (!s.receiver_alive) return send_result::disconnected;
        if (m.sender.is_none() && !s.warned_unmanaged) {
            auto me = std::this_thread::get_id();
            if (!s.first_unmanaged) {
                s.first_unmanaged = me;
            } else if (*s.first_unmanaged != me) {
                s.warned_unmanaged = true;
                std::fprintf(stderr,
                             "rr-warning: channel %s receives sends from multiple unmanaged "
                             "(NONE) threads; their order cannot be replayed faithfully\n",
                             s.id.str().c_str());
            }
        }
        s.queue.push_back(std::move(m));
        if (s.waker) s.waker->notify();
    }
    s.cv.notify_one();
    return send_result::ok;
}

template <class T>
recv_result<T> native_recv_block(chan_state<T>& s) {
    std::unique_lock lk(s.mu);
    s.cv.wait(lk, [&] { return !s.queue.empty() || s.sender_count == 0; });
    if (s.queue.empty()) return recv_error::disconnected;
    message<T> m = std::move(s.queue.front());
    s.queue.pop_front();
    return m;
}

template <class T>
recv_result<T> native_try_recv(chan_state<T>& s) {
    std::lock_guard lk(s.mu);
    if (!s.queue.empty()) {
        message<T> m = std::move(s.queue.front());
        s.queue.pop_front();
        return m;
    }
    return s.sender_count == 0 ? recv_error::disconnected : recv_error::empty;
}

template <class T>
recv_result<T> native_recv_until(chan_state<T>& s, std::chrono::steady_clock::time_point deadline) {
    std::unique_lock lk(s.mu);
    bool got = s.cv.wait_until(lk, deadline,
                               [&] { return !s.queue.empty() || s.sender_count == 0; });
    if (!got) return recv_error::timeout;
    if (s.queue.empty()) return recv_error::disconnected;
    message<T> m = std::move(s.queue.front());
    s.queue.pop_front();
    return m;
}

}  // namespace detail

template <class T>
class receiver;
template <class T>
class select_set;

/// Writing end of a channel. Cloneable: any number of threads may hold and
/// use copies concurrently (multi-producer).
template <class T>
class sender {
public:
    sender() = default;

    sender(const sender& o) : s_(o.s_) {
        if (s_) {
            std::lock_guard lk(s_->mu);
            s_->sender_count += 1;
        }
    }
    sender& operator=(const sender& o) {
        if (this != &o) {
            sender tmp(o);
            std::swap(s_, tmp.s_);
        }
        return *this;
    }
    sender(sender&& o) noexcept : s_(std::move(o.s_)) { o.s_.reset(); }
    sender& operator=(sender&& o) noexcept {
        if (this != &o) {
            release();
            s_ = std::move(o.s_);
            o.s_.reset();
        }
        return *this;
    }
    ~sender() { release(); }

    /// Enqueues the payload, tagged with the calling thread's id. Never
    /// blocks; fails only when the receiver is gone.
    send_result send(T value) const {
        assert(s_ && "send on a moved-from sender");
        auto& rt = runtime_state::instance();
        message<T> m{current_thread_id(), std::move(value)};
        switch (rt.mode()) {
            case rr_mode::noop:
                return detail::native_send(*s_, std::move(m));
            case rr_mode::record: {
                send_result r = detail::native_send(*s_, std::move(m));
                rt.record_event(event_type::send, s_->flavor, s_->data_type,
                                r == send_result::ok ? event_status::send_ok()
                                                     : event_status::recv_error(),
                                {s_->id});
                return r;
            }
            case rr_mode::replay: {
                const det_channel_id chans[1] = {s_->id};
                auto d = rt.replay_next(event_type::send, chans, s_->flavor);
                if (d.forced && !status_compatible(event_type::send, d.entry->status.tag))
                    rt.note_desync({desync_reason::event_type_mismatch, {}, current_thread_id(),
                                    d.entry->event_id, s_->id.str()});
                // Sends need no forcing; consulting the log detects divergence.
                return detail::native_send(*s_, std::move(m));
            }
        }
        return send_result::disconnected;
    }

    const det_channel_id& id() const { return s_->id; }

private:
    template <class U>
    friend std::pair<sender<U>, receiver<U>> make_channel();

    explicit sender(std::shared_ptr<detail::chan_state<T>> s) : s_(std::move(s)) {}

    void release() {
        if (!s_) return;
        bool last = false;
        {
            std::lock_guard lk(s_->mu);
            last = (--s_->sender_count == 0);
            if (last && s_->waker) s_->waker->notify();
        }
        if (last) s_->cv.notify_all();
        s_.reset();
    }

    std::shared_ptr<detail::chan_state<T>> s_;
};

/// Reading end of a channel: single consumer. Movable between threads, but
/// must be used by one thread at a time.
template <class T>
class receiver {
public:
    receiver() = default;
    receiver(receiver&&) noexcept = default;
    receiver& operator=(receiver&& o) noexcept {
        if (this != &o) {
            release();
            s_ = std::move(o.s_);
        }
        return *this;
    }
    receiver(const receiver&) = delete;
    receiver& operator=(const receiver&) = delete;
    ~receiver() { release(); }

    /// Blocks until a message arrives or every sender is gone.
    recv_result<T> recv() {
        assert(s_ && "recv on a moved-from receiver");
        auto& rt = runtime_state::instance();
        switch (rt.mode()) {
            case rr_mode::noop:
                return detail::native_recv_block(*s_);
            case rr_mode::record: {
                auto r = detail::native_recv_block(*s_);
                record(rt, event_type::recv, r);
                return r;
            }
            case rr_mode::replay:
                return replay_receive(event_type::recv, std::nullopt);
        }
        return recv_error::disconnected;
    }

    /// Returns immediately: a message, empty, or disconnected.
    recv_result<T> try_recv() {
        assert(s_);
        auto& rt = runtime_state::instance();
        switch (rt.mode()) {
            case rr_mode::noop:
                return detail::native_try_recv(*s_);
            case rr_mode::record: {
                auto r = detail::native_try_recv(*s_);
                record(rt, event_type::try_recv, r);
                return r;
            }
            case rr_mode::replay:
                return replay_receive(event_type::try_recv, std::nullopt);
        }
        return recv_error::disconnected;
    }

    /// Blocks until a message arrives, the timeout elapses, or every sender
    /// is gone.
    recv_result<T> recv_timeout(std::chrono::milliseconds timeout) {
        assert(s_);
        auto& rt = runtime_state::instance();
        switch (rt.mode()) {
            case rr_mode::noop:
                return detail::native_recv_until(*s_, std::chrono::steady_clock::now() + timeout);
            case rr_mode::record: {
                auto r = detail::native_recv_until(*s_,
                                                   std::chrono::steady_clock::now() + timeout);
                record(rt, event_type::timeout_recv, r);
                return r;
            }
            case rr_mode::replay:
                return replay_receive(event_type::timeout_recv, timeout);
        }
        return recv_error::disconnected;
    }

    const det_channel_id& id() const { return s_->id; }

    /// Number of wrong-sender envelopes parked for this receiver (replay
    /// bookkeeping; always 0 in noop and record modes).
    std::size_t buffered() const { return s_ ? s_->replay_buffer.size() : 0; }

private:
    template <class U>
    friend std::pair<sender<U>, receiver<U>> make_channel();
    friend class select_set<T>;

    explicit receiver(std::shared_ptr<detail::chan_state<T>> s) : s_(std::move(s)) {}

    void release() {
        if (!s_) return;
        {
            std::lock_guard lk(s_->mu);
            s_->receiver_alive = false;
        }
        s_.reset();
    }

    void record(runtime_state& rt, event_type op, const recv_result<T>& r) {
        event_status st = event_status::recv_error();
        if (r) {
            st = event_status::success(r.sender());
        } else if (r.error() == recv_error::empty) {
            st = event_status::empty();
        } else if (r.error() == recv_error::timeout) {
            st = event_status::timeout();
        }
        rt.record_event(op, s_->flavor, s_->data_type, std::move(st), {s_->id});
    }

    /// Replay path shared by the three receive variants: realize the logged
    /// outcome, or fall back to native execution after a desync.
    recv_result<T> replay_receive(event_type op, std::optional<std::chrono::milliseconds> timeout) {
        auto& rt = runtime_state::instance();
        const det_channel_id chans[1] = {s_->id};
        auto d = rt.replay_next(op, chans, s_->flavor);
        if (!d.forced) return native_drained(op, timeout);

        const event_status& st = d.entry->status;
        if (!status_compatible(op, st.tag)) {
            rt.note_desync({desync_reason::event_type_mismatch, {}, current_thread_id(),
                            d.entry->event_id, s_->id.str()});
            return native_drained(op, timeout);
        }
        switch (st.tag) {
            case status_tag::empty:
                return recv_error::empty;
            case status_tag::timeout:
                return recv_error::timeout;
            case status_tag::recv_error:
                return recv_error::disconnected;
            case status_tag::success:
                if (auto m = rr_recv(st.sender, d.entry->event_id)) return std::move(*m);
                return native_drained(op, timeout);
            default:
                return native_drained(op, timeout);
        }
    }

    /// Forces the next delivery to come from `expected`: drains the parked
    /// buffer first, then loops on timed receives, parking every wrong-sender
    /// envelope. A missing sender or a desync elsewhere yields nullopt, after
    /// which the caller executes natively.
    std::optional<message<T>> rr_recv(const det_thread_id& expected, std::uint64_t event_id) {
        auto& rt = runtime_state::instance();
        auto& buf = s_->replay_buffer;
        for (auto it = buf.begin(); it != buf.end(); ++it) {
            if (it->sender == expected) {
                message<T> m = std::move(*it);
                buf.erase(it);
                return m;
            }
        }
        const auto deadline = std::chrono::steady_clock::now() + rt.desync_timeout();
        for (;;) {
            if (rt.desynced()) return std::nullopt;
            const auto now = std::chrono::steady_clock::now();
            if (now >= deadline) {
                rt.note_desync({desync_reason::timeout_waiting_for_sender, expected,
                                current_thread_id(), event_id, s_->id.str()});
                return std::nullopt;
            }
            const auto slice_end = std::min(deadline, now + runtime_state::poll_slice);
            auto r = detail::native_recv_until(*s_, slice_end);
            if (r) {
                if (r.sender() == expected) return std::move(r.envelope());
                buf.push_back(std::move(r.envelope()));
            } else if (r.error() == recv_error::disconnected) {
                // every sender is gone; the expected message can never arrive
                rt.note_desync({desync_reason::timeout_waiting_for_sender, expected,
                                current_thread_id(), event_id, s_->id.str()});
                return std::nullopt;
            }
        }
    }

    /// Native execution with the parked buffer served first.
    recv_result<T> native_drained(event_type op, std::optional<std::chrono::milliseconds> timeout) {
        auto& buf = s_->replay_buffer;
        if (!buf.empty()) {
            message<T> m = std::move(buf.front());
            buf.pop_front();
            return m;
        }
        switch (op) {
            case event_type::recv:
                return detail::native_recv_block(*s_);
            case event_type::try_recv:
                return detail::native_try_recv(*s_);
            case event_type::timeout_recv:
                return detail::native_recv_until(
                    *s_, std::chrono::steady_clock::now() +
                             timeout.value_or(std::chrono::milliseconds(0)));
            default:
                return recv_error::disconnected;
        }
    }

    std::shared_ptr<detail::chan_state<T>> s_;
};

/// Creates an unbounded channel. Both handles carry the same freshly
/// assigned deterministic channel id.
template <class T>
std::pair<sender<T>, receiver<T>> make_channel() {
    auto st = std::make_shared<detail::chan_state<T>>();
    st->id = next_channel_id();
    st->data_type = std::string(type_name<T>());
    receiver<T> rx(st);
    return {sender<T>(std::move(st)), std::move(rx)};
}

/// An ordered set of receivers to block on. A receiver's index is its
/// insertion position; indices are what the log stores for select outcomes.
/// All receivers must belong to the calling thread.
template <class T>
class select_set {
public:
    /// Adds a receiver and returns its index.
    std::size_t add(receiver<T>& r) {
        rxs_.push_back(&r);
        return rxs_.size() - 1;
    }

    std::size_t size() const { return rxs_.size(); }

    /// Blocks until any receiver has a message; returns its index and the
    /// message. Disconnected only when every channel in the set is.
    select_result<T> select() {
        auto& rt = runtime_state::instance();
        std::vector<det_channel_id> chans;
        chans.reserve(rxs_.size());
        for (auto* r : rxs_) chans.push_back(r->s_->id);
        const channel_flavor flavor =
            rxs_.empty() ? channel_flavor::local_unbounded : rxs_[0]->s_->flavor;
        const std::string_view dtype = rxs_.empty() ? std::string_view{} : rxs_[0]->s_->data_type;

        switch (rt.mode()) {
            case rr_mode::noop:
                return native_select();
            case rr_mode::record: {
                auto r = native_select();
                rt.record_event(event_type::select, flavor, dtype,
                                r ? event_status::selected(static_cast<std::uint32_t>(r.index()),
                                                           r.sender())
                                  : event_status::recv_error(),
                                std::move(chans));
                return r;
            }
            case rr_mode::replay: {
                auto d = rt.replay_next(event_type::select, chans, flavor);
                if (!d.forced) return native_select_drained();
                const event_status& st = d.entry->status;
                if (!status_compatible(event_type::select, st.tag)) {
                    rt.note_desync({desync_reason::event_type_mismatch, {}, current_thread_id(),
                                    d.entry->event_id, detail::channel_list_text(chans)});
                    return native_select_drained();
                }
                if (st.tag == status_tag::recv_error) return recv_error::disconnected;
                if (st.index >= rxs_.size()) {
                    rt.note_desync({desync_reason::select_index_out_of_range, {},
                                    current_thread_id(), d.entry->event_id,
                                    detail::channel_list_text(chans)});
                    return native_select_drained();
                }
                if (auto m = rxs_[st.index]->rr_recv(st.sender, d.entry->event_id))
                    return select_result<T>(st.index, std::move(*m));
                return native_select_drained();
            }
        }
        return recv_error::disconnected;
    }

private:
    struct waker_guard {
        std::vector<receiver<T>*>& rxs;
        detail::select_waker& w;
        waker_guard(std::vector<receiver<T>*>& r, detail::select_waker& wk) : rxs(r), w(wk) {
            for (auto* rx : rxs) {
                std::lock_guard lk(rx->s_->mu);
                assert(rx->s_->waker == nullptr && "receiver already in a select");
                rx->s_->waker = &w;
            }
        }
        ~waker_guard() {
            for (auto* rx : rxs) {
                std::lock_guard lk(rx->s_->mu);
                rx->s_->waker = nullptr;
            }
        }
    };

    select_result<T> native_select() {
        if (rxs_.empty()) return recv_error::disconnected;
        detail::select_waker w;
        waker_guard guard(rxs_, w);
        for (;;) {
            bool all_disconnected = true;
            for (std::size_t i = 0; i < rxs_.size(); ++i) {
                auto r = detail::native_try_recv(*rxs_[i]->s_);
                if (r) return select_result<T>(i, std::move(r.envelope()));
                if (r.error() == recv_error::empty) all_disconnected = false;
            }
            if (all_disconnected) return recv_error::disconnected;
            w.wait();
        }
    }

    select_result<T> native_select_drained() {
        for (std::size_t i = 0; i < rxs_.size(); ++i) {
            auto& buf = rxs_[i]->s_->replay_buffer;
            if (!buf.empty()) {
                message<T> m = std::move(buf.front());
                buf.pop_front();
                return select_result<T>(i, std::move(m));
            }
        }
        return native_select();
    }

    std::vector<receiver<T>*> rxs_;
};

}  // namespace rrchan

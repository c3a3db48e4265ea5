#pragma once

#include <compare>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace rrchan {

/// Deterministic thread id: the path of child indices from the main thread
/// down to this thread. The main thread is the empty path `[]`; the first
/// thread it spawns is `[1]`; threads not created through rrchan::spawn get
/// the distinguished NONE id.
class det_thread_id {
public:
    det_thread_id() : none_(true) {}

    static det_thread_id root() {
        det_thread_id id;
        id.none_ = false;
        return id;
    }

    static det_thread_id none() { return det_thread_id{}; }

    bool is_none() const { return none_; }
    bool is_root() const { return !none_ && path_.empty(); }

    /// Child indices, root to leaf. Empty for the main thread. Only
    /// meaningful when !is_none().
    const std::vector<std::uint32_t>& path() const { return path_; }

    std::size_t depth() const { return path_.size(); }

    /// Id of this thread's index-th child (indices start at 1).
    det_thread_id child(std::uint32_t index) const {
        det_thread_id id = *this;
        if (!none_) id.path_.push_back(index);
        return id;
    }

    /// Id with the last path element removed. Parent of the root is the root.
    det_thread_id parent() const {
        det_thread_id id = *this;
        if (!none_ && !id.path_.empty()) id.path_.pop_back();
        return id;
    }

    /// `[]`, `[1]`, `[1,1,2]` or `NONE` -- the exact form used in logs.
    std::string str() const {
        if (none_) return "NONE";
        std::string out = "[";
        for (std::size_t i = 0; i < path_.size(); ++i) {
            if (i) out += ',';
            out += std::to_string(path_[i]);
        }
        out += ']';
        return out;
    }

    // NONE sorts after every real path; real paths compare lexicographically.
    friend std::strong_ordering operator<=>(const det_thread_id& a, const det_thread_id& b) {
        if (a.none_ != b.none_) return a.none_ ? std::strong_ordering::greater : std::strong_ordering::less;
        if (a.none_) return std::strong_ordering::equal;
        return a.path_ <=> b.path_;
    }
    friend bool operator==(const det_thread_id& a, const det_thread_id& b) {
        return (a <=> b) == std::strong_ordering::equal;
    }

    friend std::ostream& operator<<(std::ostream& os, const det_thread_id& id) { return os << id.str(); }

private:
    std::vector<std::uint32_t> path_;
    bool none_;
};

/// Deterministic channel id: creator thread plus that thread's channel
/// creation counter (first channel is seq 1).
struct det_channel_id {
    det_thread_id creator;
    std::uint64_t seq = 0;

    std::string str() const { return "(" + creator.str() + "," + std::to_string(seq) + ")"; }

    friend std::strong_ordering operator<=>(const det_channel_id&, const det_channel_id&) = default;
    friend std::ostream& operator<<(std::ostream& os, const det_channel_id& id) { return os << id.str(); }
};

namespace detail {

// Captured while the loader runs static initializers, i.e. on the main thread.
inline const std::thread::id process_main_thread = std::this_thread::get_id();

struct thread_ctx {
    det_thread_id id;
    std::uint64_t children_spawned = 0;
    std::uint64_t channels_created = 0;
    std::uint64_t logical_clock = 0;  // replay-mode event cursor
};

inline thread_ctx& ctx() {
    thread_local thread_ctx c = [] {
        thread_ctx init;
        if (std::this_thread::get_id() == process_main_thread)
            init.id = det_thread_id::root();
        return init;
    }();
    return c;
}

// Called by the spawn wrapper before user code runs.
inline void adopt_thread_id(const det_thread_id& id) { ctx().id = id; }

}  // namespace detail

/// Id of the calling thread: `[]` on the main thread, the spawn-tree path on
/// threads created via rrchan::spawn, NONE otherwise.
inline det_thread_id current_thread_id() { return detail::ctx().id; }

/// Assigns the next channel id for the calling thread. Purely thread-local,
/// hence race-free and deterministic given the thread's creation history.
inline det_channel_id next_channel_id() {
    auto& c = detail::ctx();
    c.channels_created += 1;
    return det_channel_id{c.id, c.channels_created};
}

}  // namespace rrchan

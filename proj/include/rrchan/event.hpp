#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "rrchan/ids.hpp"

namespace rrchan {

/// Kind of channel operation an entry records. Values are the on-disk codes.
enum class event_type : std::uint8_t {
    send = 0,
    recv = 1,
    try_recv = 2,
    timeout_recv = 3,
    select = 4,
};

/// Channel variant. Only local_unbounded is constructible here; the reserved
/// tags exist so the log format carries them unchanged.
enum class channel_flavor : std::uint8_t {
    local_unbounded = 0,
    reserved_ipc = 1,
    reserved_bounded = 2,
};

enum class status_tag : std::uint8_t {
    send_ok = 0,
    success = 1,
    empty = 2,
    timeout = 3,
    recv_error = 4,
    selected_index = 5,
};

/// Outcome of a recorded event. Successful receives carry the sender's
/// thread id; select outcomes additionally carry the chosen receiver index.
struct event_status {
    status_tag tag = status_tag::send_ok;
    det_thread_id sender;      // success / selected_index
    std::uint32_t index = 0;   // selected_index

    static event_status send_ok() { return {}; }
    static event_status success(det_thread_id from) {
        return {status_tag::success, std::move(from), 0};
    }
    static event_status empty() { return {status_tag::empty, {}, 0}; }
    static event_status timeout() { return {status_tag::timeout, {}, 0}; }
    static event_status recv_error() { return {status_tag::recv_error, {}, 0}; }
    static event_status selected(std::uint32_t index, det_thread_id from) {
        return {status_tag::selected_index, std::move(from), index};
    }

    std::string str() const {
        switch (tag) {
            case status_tag::send_ok: return "SendOk";
            case status_tag::success: return "Success(" + sender.str() + ")";
            case status_tag::empty: return "Empty";
            case status_tag::timeout: return "Timeout";
            case status_tag::recv_error: return "RecvError";
            case status_tag::selected_index:
                return "SelectedIndex(" + std::to_string(index) + "," + sender.str() + ")";
        }
        return "?";
    }

    friend bool operator==(const event_status& a, const event_status& b) {
        if (a.tag != b.tag) return false;
        switch (a.tag) {
            case status_tag::success: return a.sender == b.sender;
            case status_tag::selected_index: return a.index == b.index && a.sender == b.sender;
            default: return true;
        }
    }
};

/// One recorded channel event. (thread, event_id) is the log key; event_id is
/// the thread's logical time, counting channel events from 0.
struct log_entry {
    det_thread_id thread;
    std::uint64_t event_id = 0;
    event_type type = event_type::send;
    channel_flavor flavor = channel_flavor::local_unbounded;
    std::string data_type;
    event_status status;
    std::vector<det_channel_id> channels;  // one; for select, the set in index order

    friend bool operator==(const log_entry& a, const log_entry& b) {
        return a.thread == b.thread && a.event_id == b.event_id && a.type == b.type &&
               a.flavor == b.flavor && a.data_type == b.data_type && a.status == b.status &&
               a.channels == b.channels;
    }
};

inline std::string_view event_type_name(event_type t) {
    switch (t) {
        case event_type::send: return "Send";
        case event_type::recv: return "Recv";
        case event_type::try_recv: return "TryRecv";
        case event_type::timeout_recv: return "TimeoutRecv";
        case event_type::select: return "Select";
    }
    return "?";
}

inline std::string_view channel_flavor_name(channel_flavor f) {
    switch (f) {
        case channel_flavor::local_unbounded: return "LOCAL_UNBOUNDED";
        case channel_flavor::reserved_ipc: return "RESERVED_IPC";
        case channel_flavor::reserved_bounded: return "RESERVED_BOUNDED";
    }
    return "?";
}

/// True when a log status is a legal outcome for an operation kind. Statuses
/// outside this table are treated as divergence during replay.
inline bool status_compatible(event_type op, status_tag tag) {
    switch (op) {
        case event_type::send:
            return tag == status_tag::send_ok || tag == status_tag::recv_error;
        case event_type::recv:
            return tag == status_tag::success || tag == status_tag::recv_error;
        case event_type::try_recv:
            return tag == status_tag::success || tag == status_tag::empty ||
                   tag == status_tag::recv_error;
        case event_type::timeout_recv:
            return tag == status_tag::success || tag == status_tag::timeout ||
                   tag == status_tag::recv_error;
        case event_type::select:
            return tag == status_tag::selected_index || tag == status_tag::recv_error;
    }
    return false;
}

namespace detail {

// Short stable names for common payload types; anything else falls back to
// the compiler's spelling.
template <class T>
constexpr std::string_view raw_type_name() {
#if defined(__GNUC__) || defined(__clang__)
    std::string_view p = __PRETTY_FUNCTION__;
    auto start = p.find("T = ");
    if (start == std::string_view::npos) return "opaque";
    start += 4;
    auto end = p.find_first_of(";]", start);
    if (end == std::string_view::npos) return "opaque";
    return p.substr(start, end - start);
#else
    return "opaque";
#endif
}

}  // namespace detail

template <class T>
std::string_view type_name() {
    using U = std::remove_cv_t<std::remove_reference_t<T>>;
    if constexpr (std::is_same_v<U, bool>) return "bool";
    else if constexpr (std::is_same_v<U, char>) return "char";
    else if constexpr (std::is_same_v<U, std::int8_t>) return "i8";
    else if constexpr (std::is_same_v<U, std::uint8_t>) return "u8";
    else if constexpr (std::is_same_v<U, std::int16_t>) return "i16";
    else if constexpr (std::is_same_v<U, std::uint16_t>) return "u16";
    else if constexpr (std::is_same_v<U, std::int32_t>) return "i32";
    else if constexpr (std::is_same_v<U, std::uint32_t>) return "u32";
    else if constexpr (std::is_same_v<U, std::int64_t>) return "i64";
    else if constexpr (std::is_same_v<U, std::uint64_t>) return "u64";
    else if constexpr (std::is_same_v<U, float>) return "f32";
    else if constexpr (std::is_same_v<U, double>) return "f64";
    else if constexpr (std::is_same_v<U, std::string>) return "string";
    else return detail::raw_type_name<T>();
}

}  // namespace rrchan

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rrchan/event.hpp"

namespace rrchan {

/// Why a log file failed to parse.
enum class parse_error_kind : std::uint8_t {
    bad_magic,
    bad_version,
    truncated,
    duplicate_entry,
    malformed,
};

class log_parse_error : public std::runtime_error {
public:
    log_parse_error(parse_error_kind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    parse_error_kind kind() const { return kind_; }

private:
    parse_error_kind kind_;
};

class log_io_error : public std::runtime_error {
public:
    log_io_error(const std::string& path, const std::string& cause)
        : std::runtime_error("log i/o failure on '" + path + "': " + cause), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

/// Complete record of one execution: channel events keyed by performing
/// thread and that thread's logical time. Carries no payload data.
class record_log {
public:
    using key = std::pair<det_thread_id, std::uint64_t>;
    using map_type = std::map<key, log_entry>;

    /// Inserts an entry; false if the (thread, event_id) key is taken.
    bool add(log_entry entry) {
        key k{entry.thread, entry.event_id};
        return entries_.emplace(std::move(k), std::move(entry)).second;
    }

    const log_entry* find(const det_thread_id& thread, std::uint64_t event_id) const {
        auto it = entries_.find(key{thread, event_id});
        return it == entries_.end() ? nullptr : &it->second;
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    /// Iteration order is (thread path lexicographic with NONE last, event_id),
    /// which is also the serialization order.
    const map_type& entries() const { return entries_; }

    friend bool operator==(const record_log& a, const record_log& b) {
        return a.entries_ == b.entries_;
    }

private:
    map_type entries_;
};

// ---------------------------------------------------------------------------
// Binary format, version 1. All integers little-endian.
//
//   header : magic "LWRR", version u32, record count u32
//   record : thread path | event_id u64 | event_type u8 | flavor u8
//          | data_type (u16 length + utf-8 bytes) | status tag u8 + fields
//          | channel list (u16 count, then creator path + seq u64 each)
//   path   : u16 length (0xFFFF = NONE), then u32 per element
//   status : success -> sender path; selected_index -> sender path + index u32
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char log_magic[4] = {'L', 'W', 'R', 'R'};
inline constexpr std::uint32_t log_format_version = 1;
inline constexpr std::uint16_t none_path_marker = 0xFFFF;

struct byte_writer {
    std::vector<std::uint8_t> out;

    void u8(std::uint8_t v) { out.push_back(v); }
    void u16(std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    void path(const det_thread_id& id) {
        if (id.is_none()) {
            u16(none_path_marker);
            return;
        }
        u16(static_cast<std::uint16_t>(id.path().size()));
        for (auto e : id.path()) u32(e);
    }
};

struct byte_reader {
    std::span<const std::uint8_t> in;
    std::size_t pos = 0;

    [[noreturn]] void truncated(const char* what) const {
        throw log_parse_error(parse_error_kind::truncated,
                              std::string("truncated record log: unexpected end in ") + what);
    }
    void need(std::size_t n, const char* what) const {
        if (pos + n > in.size()) truncated(what);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return in[pos++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(in[pos]) |
                          static_cast<std::uint16_t>(in[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(in.data() + pos), n);
        pos += n;
        return s;
    }
    det_thread_id path(const char* what) {
        std::uint16_t len = u16(what);
        if (len == none_path_marker) return det_thread_id::none();
        det_thread_id id = det_thread_id::root();
        for (std::uint16_t i = 0; i < len; ++i) id = id.child(u32(what));
        return id;
    }
};

inline void write_entry(byte_writer& w, const log_entry& e) {
    w.path(e.thread);
    w.u64(e.event_id);
    w.u8(static_cast<std::uint8_t>(e.type));
    w.u8(static_cast<std::uint8_t>(e.flavor));
    w.u16(static_cast<std::uint16_t>(e.data_type.size()));
    w.bytes(e.data_type.data(), e.data_type.size());
    w.u8(static_cast<std::uint8_t>(e.status.tag));
    switch (e.status.tag) {
        case status_tag::success:
            w.path(e.status.sender);
            break;
        case status_tag::selected_index:
            w.path(e.status.sender);
            w.u32(e.status.index);
            break;
        default:
            break;
    }
    w.u16(static_cast<std::uint16_t>(e.channels.size()));
    for (const auto& ch : e.channels) {
        w.path(ch.creator);
        w.u64(ch.seq);
    }
}

inline log_entry read_entry(byte_reader& r) {
    log_entry e;
    e.thread = r.path("thread path");
    e.event_id = r.u64("event id");
    std::uint8_t type = r.u8("event type");
    if (type > static_cast<std::uint8_t>(event_type::select))
        throw log_parse_error(parse_error_kind::malformed,
                              "unknown event type code " + std::to_string(type));
    e.type = static_cast<event_type>(type);
    std::uint8_t flavor = r.u8("flavor");
    if (flavor > static_cast<std::uint8_t>(channel_flavor::reserved_bounded))
        throw log_parse_error(parse_error_kind::malformed,
                              "unknown flavor code " + std::to_string(flavor));
    e.flavor = static_cast<channel_flavor>(flavor);
    e.data_type = r.str(r.u16("data type length"), "data type");
    std::uint8_t tag = r.u8("status tag");
    if (tag > static_cast<std::uint8_t>(status_tag::selected_index))
        throw log_parse_error(parse_error_kind::malformed,
                              "unknown status tag " + std::to_string(tag));
    e.status.tag = static_cast<status_tag>(tag);
    switch (e.status.tag) {
        case status_tag::success:
            e.status.sender = r.path("status sender");
            break;
        case status_tag::selected_index:
            e.status.sender = r.path("status sender");
            e.status.index = r.u32("status index");
            break;
        default:
            break;
    }
    std::uint16_t nchan = r.u16("channel count");
    e.channels.reserve(nchan);
    for (std::uint16_t i = 0; i < nchan; ++i) {
        det_channel_id ch;
        ch.creator = r.path("channel creator");
        ch.seq = r.u64("channel seq");
        e.channels.push_back(std::move(ch));
    }
    return e;
}

}  // namespace detail

/// Serializes a log to its byte form. Deterministic: entries emerge sorted by
/// (thread, event_id).
inline std::vector<std::uint8_t> serialize_log(const record_log& log) {
    detail::byte_writer w;
    w.bytes(detail::log_magic, 4);
    w.u32(detail::log_format_version);
    w.u32(static_cast<std::uint32_t>(log.size()));
    for (const auto& [key, entry] : log.entries()) detail::write_entry(w, entry);
    return std::move(w.out);
}

/// Writes the log to a file, returning the byte count.
inline std::size_t serialize_log(const record_log& log, const std::string& path) {
    auto bytes = serialize_log(log);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw log_io_error(path, "cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw log_io_error(path, "write failed");
    return bytes.size();
}

inline record_log deserialize_log(std::span<const std::uint8_t> bytes) {
    detail::byte_reader r{bytes};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), detail::log_magic, 4) != 0)
        throw log_parse_error(parse_error_kind::bad_magic, "bad record log magic");
    r.pos = 4;
    std::uint32_t version = r.u32("version");
    if (version != detail::log_format_version)
        throw log_parse_error(parse_error_kind::bad_version,
                              "unsupported record log version " + std::to_string(version));
    std::uint32_t count = r.u32("record count");
    record_log log;
    for (std::uint32_t i = 0; i < count; ++i) {
        log_entry e = detail::read_entry(r);
        auto key_desc = e.thread.str() + "," + std::to_string(e.event_id);
        if (!log.add(std::move(e)))
            throw log_parse_error(parse_error_kind::duplicate_entry,
                                  "duplicate log entry (" + key_desc + ")");
    }
    if (r.pos != bytes.size())
        throw log_parse_error(parse_error_kind::malformed,
                              "trailing bytes after last record");
    return log;
}

inline record_log deserialize_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw log_io_error(path, "cannot open for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_log(std::span<const std::uint8_t>(bytes));
}

}  // namespace rrchan

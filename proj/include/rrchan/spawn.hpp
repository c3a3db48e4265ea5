#pragma once

#include <thread>
#include <tuple>
#include <type_traits>
#include <utility>

#include "rrchan/ids.hpp"
#include "rrchan/runtime.hpp"

namespace rrchan {

/// Drop-in std::thread creation that assigns the child its deterministic id:
/// the parent's path plus the parent's incremented child counter. The id is
/// installed before the entry function runs, so every channel operation the
/// child performs sees it. On thread-creation failure the parent's counter is
/// left untouched and the error propagates.
///
/// Children spawned by unmanaged (NONE) threads are themselves unmanaged.
template <class F, class... Args>
std::thread spawn(F&& f, Args&&... args) {
    auto& parent = detail::ctx();
    const auto index = static_cast<std::uint32_t>(parent.children_spawned + 1);
    const det_thread_id child_id = parent.id.child(index);
    const bool managed = !child_id.is_none();

    auto& rt = runtime_state::instance();
    if (managed) rt.on_managed_thread_begin();

    std::thread t;
    try {
        t = std::thread(
            [child_id, managed, fn = std::decay_t<F>(std::forward<F>(f)),
             tup = std::make_tuple(std::decay_t<Args>(std::forward<Args>(args))...)]() mutable {
                detail::adopt_thread_id(child_id);
                struct end_guard {
                    bool managed;
                    ~end_guard() {
                        if (managed) runtime_state::instance().on_managed_thread_end();
                    }
                } guard{managed};
                std::apply(std::move(fn), std::move(tup));
            });
    } catch (...) {
        if (managed) rt.on_managed_thread_end();
        throw;
    }
    parent.children_spawned = index;
    return t;
}

}  // namespace rrchan

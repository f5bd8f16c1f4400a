#pragma once

#include <cstddef>
#include <functional>

namespace qlab {

/// Worker count used by parallel_for. Defaults to 1; the CLI sets it from
/// --threads. Results never depend on this value.
void set_thread_count(unsigned count);
unsigned thread_count();

/// Calls body(i) for every i in [begin, end). Each index must write only to
/// its own output slot.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

}  // namespace qlab

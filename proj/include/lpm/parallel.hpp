#pragma once

#include <cstddef>
#include <functional>

namespace lpm {

// Chunk boundaries are fixed by kChunkSize alone, so per-chunk partial results
// reduced in chunk order are identical for every worker count.
inline constexpr std::size_t kChunkSize = 512;

// Worker count: LPM_WORKERS if set, else hardware concurrency.
std::size_t worker_count();
// Override for the current process; 0 restores the default.
void set_worker_count(std::size_t n);

std::size_t chunk_count(std::size_t n_items);

using ChunkFn = std::function<void(std::size_t chunk, std::size_t begin, std::size_t end)>;

// Runs fn over every chunk of [0, n_items). Nested calls run inline.
// The exception from the lowest failing chunk is rethrown.
void for_each_chunk(std::size_t n_items, const ChunkFn& fn);

}  // namespace lpm

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace scatterfusion {

inline constexpr const char* kVersion = "0.1.0";

// Runs fn(i) for i in [0, n) on up to `threads` std::threads. Each index is
// handled exactly once; callers must write to disjoint slots. threads <= 1
// runs inline.
void parallel_for(long n, long threads, const std::function<void(long)>& fn);

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

}  // namespace scatterfusion

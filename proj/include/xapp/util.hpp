#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace xapp {

// Shortest float form with 9 significant digits (printf %.9g).
std::string format_g9(double v);

std::string read_file(const std::filesystem::path& path);

// Write-to-temp plus rename, so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Runs fn(0..n-1) on up to `threads` workers. fn must only touch state
// owned by its own index; aggregation stays with the caller.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace xapp

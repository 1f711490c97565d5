#pragma once

#include <span>
#include <string_view>

namespace ctxscale::detail {

struct EmbeddedFile {
  std::string_view name;
  std::string_view content;
};

// Defined in the build-generated fixtures source.
std::span<const EmbeddedFile> fixtures();

}  // namespace ctxscale::detail
